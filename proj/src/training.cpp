#include "sisvae/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sisvae/rng.hpp"

namespace sisvae {

namespace {

enum Stream : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kNoiseStream = 3 };

std::vector<double> draw_noise(std::uint64_t seed, std::size_t w, std::size_t z_dim) {
    Rng rng(seed);
    std::vector<double> noise(w * z_dim);
    for (double& v : noise) v = rng.normal();
    return noise;
}

void fisher_yates(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (window_w < 2) throw std::invalid_argument("TrainConfig: window_w must be >= 2");
    if (step_s < 1) throw std::invalid_argument("TrainConfig: step_s must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (!(adam_beta1 > 0.0 && adam_beta1 < adam_beta2 && adam_beta2 < 1.0)) {
        throw std::invalid_argument("TrainConfig: need 0 < beta1 < beta2 < 1");
    }
    if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
}

std::pair<SeriesMatrix, NormStats> normalize(const SeriesMatrix& series) {
    series.check();
    if (series.t < 2) throw std::invalid_argument("normalize: need at least 2 timesteps");
    SeriesMatrix out = series;
    NormStats stats;
    stats.mean.resize(series.m);
    stats.stdev.resize(series.m);
    for (std::size_t i = 0; i < series.m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < series.t; ++j) mean += series.at(i, j);
        mean /= static_cast<double>(series.t);
        double var = 0.0;
        for (std::size_t j = 0; j < series.t; ++j) {
            const double d = series.at(i, j) - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / static_cast<double>(series.t));
        stats.mean[i] = mean;
        if (sd < 1e-12) {
            stats.stdev[i] = 1.0;
            for (std::size_t j = 0; j < series.t; ++j) out.at(i, j) = 0.0;
        } else {
            stats.stdev[i] = sd;
            for (std::size_t j = 0; j < series.t; ++j) {
                out.at(i, j) = (series.at(i, j) - mean) / sd;
            }
        }
    }
    return {std::move(out), std::move(stats)};
}

SeriesMatrix denormalize(const SeriesMatrix& series, const NormStats& stats) {
    series.check();
    if (stats.mean.size() != series.m || stats.stdev.size() != series.m) {
        throw std::invalid_argument("denormalize: stats do not match series rows");
    }
    SeriesMatrix out = series;
    for (std::size_t i = 0; i < series.m; ++i) {
        for (std::size_t j = 0; j < series.t; ++j) {
            out.at(i, j) = series.at(i, j) * stats.stdev[i] + stats.mean[i];
        }
    }
    return out;
}

std::vector<Chunk> make_windows(const SeriesMatrix& series, std::size_t w, std::size_t s) {
    series.check();
    if (w > series.t) {
        throw std::invalid_argument("make_windows: window " + std::to_string(w) +
                                    " exceeds series length " + std::to_string(series.t));
    }
    if (s < 1) throw std::invalid_argument("make_windows: step must be >= 1");
    std::vector<Chunk> chunks;
    for (std::size_t start = 0; start + w <= series.t; start += s) {
        Chunk c;
        c.start = start;
        c.m = series.m;
        c.w = w;
        c.values.resize(series.m * w);
        for (std::size_t i = 0; i < series.m; ++i) {
            for (std::size_t j = 0; j < w; ++j) c.values[i * w + j] = series.at(i, start + j);
        }
        chunks.push_back(std::move(c));
    }
    return chunks;
}

AdamState AdamState::like(const std::vector<TensorPtr>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
        s.m.emplace_back(p->numel(), 0.0);
        s.v.emplace_back(p->numel(), 0.0);
    }
    return s;
}

void adam_step(const std::vector<TensorPtr>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state does not match parameter list");
    }
    state.step += 1;
    const auto t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        ad::Tensor& p = *params[k];
        if (state.m[k].size() != p.numel()) {
            throw std::invalid_argument("adam_step: moment shape mismatch at parameter " +
                                        std::to_string(k));
        }
        const auto& g = p.grad_buffer();
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

double global_grad_norm(const std::vector<TensorPtr>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p->grad_buffer()) sq += g * g;
    }
    return std::sqrt(sq);
}

void clip_global_norm(const std::vector<TensorPtr>& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (const auto& p : params) {
        for (double& g : p->grad_buffer()) g *= scale;
    }
}

TrainResult train(const std::vector<Chunk>& dataset, const TrainConfig& config,
                  const ModelConfig& model_config) {
    config.validate();
    model_config.validate();
    if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
    for (const auto& c : dataset) {
        if (c.m != model_config.x_dim || c.w != config.window_w) {
            throw std::invalid_argument("train: chunk shape " + std::to_string(c.m) + "x" +
                                        std::to_string(c.w) + " does not match config " +
                                        std::to_string(model_config.x_dim) + "x" +
                                        std::to_string(config.window_w));
        }
    }

    TrainResult result;
    result.params = ModelParams::init(model_config, derive_seed(config.seed, kInitStream));
    auto tensors = result.params.tensors();
    result.adam = AdamState::like(tensors);

    const std::size_t n_chunks = dataset.size();
    std::vector<std::size_t> order(n_chunks);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < n_chunks; ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(config.seed, kShuffleStream, epoch));
        fisher_yates(order, shuffle_rng);

        LossBreakdown epoch_sum;
        for (std::size_t batch_begin = 0, batch_idx = 0; batch_begin < n_chunks;
             batch_begin += config.batch_size, ++batch_idx) {
            const std::size_t batch_end = std::min(batch_begin + config.batch_size, n_chunks);
            const double inv_batch = 1.0 / static_cast<double>(batch_end - batch_begin);

            zero_grad(result.params);
            for (std::size_t pos = batch_begin; pos < batch_end; ++pos) {
                const Chunk& chunk = dataset[order[pos]];
                const auto noise =
                    draw_noise(derive_seed(config.seed, kNoiseStream, epoch * n_chunks + pos),
                               chunk.w, model_config.z_dim);

                ad::Tape tape;
                auto rollout = unroll(result.params, chunk, noise, UnrollMode::train);
                auto loss = sisvae_loss_nodes(rollout, chunk, config.lambda, config.regularizer);
                if (!std::isfinite(loss.breakdown.total)) {
                    throw TrainError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batch_idx),
                                     epoch, batch_idx);
                }
                tape.backward(ad::scalar_mul(loss.total, inv_batch));

                epoch_sum.inference_kl += loss.breakdown.inference_kl;
                epoch_sum.neg_loglik += loss.breakdown.neg_loglik;
                epoch_sum.smooth += loss.breakdown.smooth;
                epoch_sum.total += loss.breakdown.total;
            }
            if (config.clip_norm > 0.0) clip_global_norm(tensors, config.clip_norm);
            adam_step(tensors, result.adam, config.lr, config.adam_beta1, config.adam_beta2,
                      config.adam_eps);
        }

        const double inv_n = 1.0 / static_cast<double>(n_chunks);
        EpochRecord rec;
        rec.mean_loss.inference_kl = epoch_sum.inference_kl * inv_n;
        rec.mean_loss.neg_loglik = epoch_sum.neg_loglik * inv_n;
        rec.mean_loss.smooth = epoch_sum.smooth * inv_n;
        rec.mean_loss.total = epoch_sum.total * inv_n;
        rec.mean_loss.lambda = config.lambda;
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
    }
    return result;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
    out << "epoch,inference_kl,neg_loglik,smooth,total,seconds\n";
    char buf[512];
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& r = history[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.6f\n", i + 1,
                      r.mean_loss.inference_kl, r.mean_loss.neg_loglik, r.mean_loss.smooth,
                      r.mean_loss.total, r.seconds);
        out << buf;
    }
    if (!out) throw std::runtime_error("write_history_csv: write failed for " + path);
}

}  // namespace sisvae
