#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sisvae/nets.hpp"
#include "sisvae/series.hpp"

namespace sisvae {

enum class ScoreCriterion { prob, error };

ScoreCriterion parse_criterion(const std::string& name);
std::string criterion_name(ScoreCriterion c);

// Anomaly scores over a full series; covered marks the positions that were
// actually scored (all of them whenever T >= W).
struct ScoreMatrix {
    std::size_t m = 0;
    std::size_t t = 0;
    std::vector<double> scores;
    std::vector<std::uint8_t> covered;

    double at(std::size_t row, std::size_t col) const { return scores[row * t + col]; }
    bool covered_at(std::size_t row, std::size_t col) const {
        return covered[row * t + col] != 0;
    }
};

// Monte-Carlo reconstruction probability over one chunk: L reparameterized
// reconstruction passes, each accumulating -(1/L) * log p(x_{m,t} | mu, sigma)
// per position. Higher means more anomalous. Pass l draws its noise from
// derive_seed(seed, pass_offset + l), so disjoint runs can split one stream.
std::vector<double> score_smc(const ModelParams& params, const Chunk& chunk, std::size_t L,
                              std::uint64_t seed, std::size_t pass_offset = 0);

// Absolute reconstruction error |x - mu| from a single reconstruction pass.
std::vector<double> score_error(const ModelParams& params, const Chunk& chunk,
                                std::uint64_t seed);

// Scores the whole series over non-overlapping windows at 0, W, 2W, ...; if
// T is not a multiple of W a final window anchored at T - W is scored and
// doubly-covered positions take the mean of the two window scores. Requires
// T >= window.
ScoreMatrix score_series(const ModelParams& params, const SeriesMatrix& series,
                         ScoreCriterion criterion, std::size_t L, std::uint64_t seed,
                         std::size_t window);

// 1 where covered and score > alpha, else 0.
std::vector<std::uint8_t> threshold(const ScoreMatrix& scores, double alpha);

void write_scores_csv(const ScoreMatrix& scores, const std::vector<std::string>& ids,
                      const std::string& path);
ScoreMatrix load_scores_csv(const std::string& path, std::vector<std::string>* ids = nullptr);
void write_detections_csv(const ScoreMatrix& scores, const std::vector<std::string>& ids,
                          double alpha, const std::string& path);

}  // namespace sisvae
