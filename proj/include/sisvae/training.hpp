#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sisvae/objective.hpp"
#include "sisvae/series.hpp"

namespace sisvae {

struct TrainConfig {
    std::size_t window_w = 120;
    std::size_t step_s = 120;
    std::size_t batch_size = 1;
    std::size_t epochs = 200;
    double lr = 1e-3;
    double lambda = 0.5;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    Regularizer regularizer = Regularizer::kl;
    double clip_norm = 5.0;  // global-norm gradient clip; <= 0 disables

    void validate() const;
};

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stdev;
};

// Maps each row to (x - mean) / std with the population std. Rows with
// std < 1e-12 become all zeros and record std = 1. Labels pass through.
std::pair<SeriesMatrix, NormStats> normalize(const SeriesMatrix& series);
SeriesMatrix denormalize(const SeriesMatrix& series, const NormStats& stats);

// Windows at offsets 0, s, 2s, ... while offset + w <= T;
// yields floor((T - w) / s) + 1 chunks.
std::vector<Chunk> make_windows(const SeriesMatrix& series, std::size_t w, std::size_t s);

struct AdamState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState like(const std::vector<TensorPtr>& params);
    bool empty() const { return m.empty(); }
};

// One bias-corrected Adam update over params' accumulated gradients.
void adam_step(const std::vector<TensorPtr>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps);

double global_grad_norm(const std::vector<TensorPtr>& params);
void clip_global_norm(const std::vector<TensorPtr>& params, double max_norm);

struct EpochRecord {
    LossBreakdown mean_loss;  // per-chunk averages over the epoch
    double seconds = 0.0;
};
using TrainHistory = std::vector<EpochRecord>;

struct TrainResult {
    ModelParams params;
    AdamState adam;
    TrainHistory history;
};

class TrainError : public std::runtime_error {
public:
    TrainError(const std::string& what, std::size_t epoch, std::size_t batch)
        : std::runtime_error(what), epoch(epoch), batch(batch) {}
    std::size_t epoch;
    std::size_t batch;
};

// Runs the variational training loop over the chunk dataset: seeded init,
// per-epoch seeded shuffle, minibatches of `batch_size`, one reparameterized
// rollout per chunk with fresh per-timestep noise, gradient accumulation,
// global-norm clipping and an Adam update per minibatch. Deterministic given
// (seed, config, dataset). Throws TrainError when a loss turns non-finite.
TrainResult train(const std::vector<Chunk>& dataset, const TrainConfig& config,
                  const ModelConfig& model_config);

// epoch, inference_kl, neg_loglik, smooth, total, seconds
void write_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace sisvae
