#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sisvae/series.hpp"

namespace sisvae {

struct SynthConfig {
    std::size_t m = 100;
    std::size_t t = 200;
    double anomaly_prob = 0.01;
    double kernel_lengthscale = 10.0;
    double noise_base = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

// Draws m correlated series of length t from a multi-output Gaussian process
// with covariance B (x) K: K is the RBF Gram matrix with unit variance and
// the configured length-scale, B = C C^T + 0.1 I with C an m x m seeded
// standard-normal draw. Time-varying observation noise N(0, sigma_t^2) with
// sigma_t = noise_base * (1 + t/T) is added on top. Labels are all zero.
SeriesMatrix gen_correlated_series(const SynthConfig& config);

// Same, but with an explicit m x m coregionalization matrix (row-major).
SeriesMatrix gen_correlated_series(const SynthConfig& config,
                                   const std::vector<double>& coregionalization);

// Bernoulli(p) mask per position; at masked positions adds
// sign * Poisson(max(|x|, 0.5)) with an equiprobable sign, and sets the
// label. Every masked position is labeled even when the Poisson draw is 0.
SeriesMatrix inject_point_anomalies(const SeriesMatrix& series, double p, std::uint64_t seed);

// Composite point anomalies: at Bernoulli(p) positions adds
// Poisson(1) + N(0,1) + 0.2 and sets the label.
SeriesMatrix inject_composite_point_anomalies(const SeriesMatrix& series, double p,
                                              std::uint64_t seed);

// Euler-integrated delay equation
//   x' = alpha * x(t - tau) / (1 + x(t - tau)^beta) - gamma * x
// with the pre-history filled with x0; returns the n states after each step.
// The seed is accepted for interface uniformity; the trajectory is
// deterministic and does not consume it.
SeriesMatrix gen_mackey_glass(std::size_t n, double gamma, double beta, double alpha,
                              std::size_t tau, double dt, double x0, std::uint64_t seed);

// Replaces `count` non-overlapping windows (uniform length in
// [len_min, len_max], uniform valid start, uniform row) with draws from a
// GP with RBF kernel of unit variance and 0.3 length-scale, labeling the
// replaced positions. Throws after 1000 rejected placements.
SeriesMatrix inject_subseq_anomalies(const SeriesMatrix& series, std::size_t count,
                                     std::size_t len_min, std::size_t len_max,
                                     std::uint64_t seed);

// CSV layout: header `t,<id_1>,...,<id_M>`, one row per timestep, values
// written with 17 significant digits; labels live in a sibling file with
// the same layout holding {0,1}.
void save_csv(const SeriesMatrix& series, const std::string& path);
SeriesMatrix load_csv(const std::string& path);
std::string label_path_for(const std::string& data_path);

}  // namespace sisvae
