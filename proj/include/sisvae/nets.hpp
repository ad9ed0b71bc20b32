#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sisvae/autodiff.hpp"
#include "sisvae/series.hpp"

namespace sisvae {

using ad::TensorPtr;

struct ModelConfig {
    std::size_t x_dim = 1;
    std::size_t h_dim = 200;
    std::size_t z_dim = 40;
    std::size_t feat_dim = 200;
    double sigma_floor = 1e-4;

    void validate() const;
};

// Feature extractor: one tanh layer whose hidden width is the output,
// out = tanh(w * in + b).
struct FeatureMap {
    TensorPtr w, b;
};

// One-hidden-layer trunk with two linear heads producing the mean and the
// raw (pre-softplus) stddev of a diagonal Gaussian.
struct GaussHead {
    TensorPtr w1, b1, w_mu, b_mu, w_sigma, b_sigma;
};

struct GruParams {
    TensorPtr w_r, u_r, b_r, w_s, u_s, b_s, w_h, u_h, b_h;
};

struct ModelParams {
    ModelConfig config;
    FeatureMap phi_x, phi_z;
    GaussHead enc, prior, dec;
    GruParams gru;

    // Stable enumeration used by init, Adam, checkpointing and flattening.
    std::vector<std::pair<std::string, TensorPtr>> named() const;
    std::vector<TensorPtr> tensors() const;

    std::size_t param_count() const;
    std::vector<double> flatten() const;

    static ModelParams init(const ModelConfig& config, std::uint64_t seed);

    // Allocates the parameter set with the given shapes but empty storage
    // hooks; used by the deserializer.
    static ModelParams shaped(const ModelConfig& config);

    // Builds a parameter view whose tensors are slices of one flat leaf
    // vector, so a whole-model gradient can be checked through a single
    // grad_check call.
    static ModelParams from_flat(const ModelConfig& config, const TensorPtr& flat);
};

void zero_grad(ModelParams& params);

enum class HeadKind { enc, prior, dec };

TensorPtr feature_map(const FeatureMap& map, const TensorPtr& in);

// mu unconstrained; sigma = softplus(raw) + sigma_floor
std::pair<TensorPtr, TensorPtr> gaussian_head(const ModelParams& params, HeadKind kind,
                                              const TensorPtr& in);

// r = sig(W_r y + U_r h + b_r); s = sig(W_s y + U_s h + b_s);
// cand = tanh(W_h y + r * (U_h h) + b_h); h' = (1 - s) * cand + s * h
TensorPtr gru_step(const GruParams& gru, const TensorPtr& y, const TensorPtr& h_prev);

TensorPtr reparameterize(const TensorPtr& mu, const TensorPtr& sigma, const TensorPtr& eps);

// Per-timestep diagonal-Gaussian parameters as plain values.
struct DiagGaussianSeq {
    std::size_t length = 0;
    std::size_t dim = 0;
    std::vector<double> means;    // length * dim
    std::vector<double> stddevs;  // length * dim

    double mean_at(std::size_t t, std::size_t d) const { return means[t * dim + d]; }
    double std_at(std::size_t t, std::size_t d) const { return stddevs[t * dim + d]; }
};

// Graph-connected counterpart of DiagGaussianSeq.
struct DistSeqNodes {
    std::vector<TensorPtr> mu;
    std::vector<TensorPtr> sigma;

    DiagGaussianSeq values() const;
};

enum class UnrollMode { train, score };

struct UnrollResult {
    DistSeqNodes posterior;  // q(z_t | x_t, h_{t-1})
    DistSeqNodes prior;      // p(z_t | h_{t-1})
    DistSeqNodes recon;      // p(x_t | z_t, h_{t-1})
    std::vector<TensorPtr> z_path;
    std::vector<TensorPtr> h_path;
};

// Runs the sequence model over one chunk starting from h_0 = 0. For each
// timestep, in order: encode, reparameterize, prior, decode, recurrence.
// noise holds one z_dim epsilon vector per timestep (w * z_dim, row-major).
// The mode is an annotation only; it changes nothing numerically.
UnrollResult unroll(const ModelParams& params, const Chunk& x, const std::vector<double>& noise,
                    UnrollMode mode);

}  // namespace sisvae
