#include "sisvae/scoring.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "sisvae/rng.hpp"

namespace sisvae {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::vector<double> draw_noise(std::uint64_t seed, std::size_t w, std::size_t z_dim) {
    Rng rng(seed);
    std::vector<double> noise(w * z_dim);
    for (double& v : noise) v = rng.normal();
    return noise;
}

}  // namespace

ScoreCriterion parse_criterion(const std::string& name) {
    if (name == "prob") return ScoreCriterion::prob;
    if (name == "error") return ScoreCriterion::error;
    throw std::invalid_argument("unknown criterion '" + name + "' (expected prob or error)");
}

std::string criterion_name(ScoreCriterion c) {
    return c == ScoreCriterion::prob ? "prob" : "error";
}

std::vector<double> score_smc(const ModelParams& params, const Chunk& chunk, std::size_t L,
                              std::uint64_t seed, std::size_t pass_offset) {
    if (L < 1) throw std::invalid_argument("score_smc: L must be >= 1");
    const std::size_t m = chunk.m, w = chunk.w;
    std::vector<double> scores(m * w, 0.0);
    const double inv_l = 1.0 / static_cast<double>(L);
    for (std::size_t l = 0; l < L; ++l) {
        const auto noise =
            draw_noise(derive_seed(seed, pass_offset + l), w, params.config.z_dim);
        auto rollout = unroll(params, chunk, noise, UnrollMode::score);
        for (std::size_t t = 0; t < w; ++t) {
            const auto& mu = rollout.recon.mu[t]->values;
            const auto& sigma = rollout.recon.sigma[t]->values;
            for (std::size_t i = 0; i < m; ++i) {
                const double r = chunk.at(i, t) - mu[i];
                const double ll =
                    -kHalfLog2Pi - std::log(sigma[i]) - r * r / (2.0 * sigma[i] * sigma[i]);
                if (!std::isfinite(ll)) {
                    throw std::runtime_error("score_smc: non-finite density at series " +
                                             std::to_string(i) + ", t " + std::to_string(t));
                }
                scores[i * w + t] += -inv_l * ll;
            }
        }
    }
    return scores;
}

std::vector<double> score_error(const ModelParams& params, const Chunk& chunk,
                                std::uint64_t seed) {
    const std::size_t m = chunk.m, w = chunk.w;
    const auto noise = draw_noise(derive_seed(seed, 0), w, params.config.z_dim);
    auto rollout = unroll(params, chunk, noise, UnrollMode::score);
    std::vector<double> scores(m * w, 0.0);
    for (std::size_t t = 0; t < w; ++t) {
        const auto& mu = rollout.recon.mu[t]->values;
        for (std::size_t i = 0; i < m; ++i) {
            scores[i * w + t] = std::fabs(chunk.at(i, t) - mu[i]);
        }
    }
    return scores;
}

ScoreMatrix score_series(const ModelParams& params, const SeriesMatrix& series,
                         ScoreCriterion criterion, std::size_t L, std::uint64_t seed,
                         std::size_t window) {
    series.check();
    if (series.m != params.config.x_dim) {
        throw std::invalid_argument("score_series: series has " + std::to_string(series.m) +
                                    " rows but the model expects " +
                                    std::to_string(params.config.x_dim));
    }
    if (window < 1 || window > series.t) {
        throw std::invalid_argument("score_series: window " + std::to_string(window) +
                                    " exceeds series length " + std::to_string(series.t));
    }

    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + window <= series.t; s += window) starts.push_back(s);
    if (series.t % window != 0) starts.push_back(series.t - window);

    ScoreMatrix out;
    out.m = series.m;
    out.t = series.t;
    out.scores.assign(series.m * series.t, 0.0);
    out.covered.assign(series.m * series.t, 0);
    std::vector<std::uint8_t> hits(series.m * series.t, 0);

    for (std::size_t ci = 0; ci < starts.size(); ++ci) {
        Chunk chunk;
        chunk.start = starts[ci];
        chunk.m = series.m;
        chunk.w = window;
        chunk.values.resize(series.m * window);
        for (std::size_t i = 0; i < series.m; ++i) {
            for (std::size_t j = 0; j < window; ++j) {
                chunk.values[i * window + j] = series.at(i, chunk.start + j);
            }
        }
        const std::uint64_t chunk_seed = derive_seed(seed, ci);
        const auto chunk_scores = criterion == ScoreCriterion::prob
                                      ? score_smc(params, chunk, L, chunk_seed)
                                      : score_error(params, chunk, chunk_seed);
        for (std::size_t i = 0; i < series.m; ++i) {
            for (std::size_t j = 0; j < window; ++j) {
                const std::size_t pos = i * series.t + chunk.start + j;
                out.scores[pos] += chunk_scores[i * window + j];
                hits[pos] += 1;
                out.covered[pos] = 1;
            }
        }
    }
    for (std::size_t pos = 0; pos < out.scores.size(); ++pos) {
        if (hits[pos] > 1) out.scores[pos] /= static_cast<double>(hits[pos]);
    }
    return out;
}

std::vector<std::uint8_t> threshold(const ScoreMatrix& scores, double alpha) {
    std::vector<std::uint8_t> out(scores.scores.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (scores.covered[i] != 0 && scores.scores[i] > alpha) ? 1 : 0;
    }
    return out;
}

void write_scores_csv(const ScoreMatrix& scores, const std::vector<std::string>& ids,
                      const std::string& path) {
    if (ids.size() != scores.m) {
        throw std::invalid_argument("write_scores_csv: id count differs from row count");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_scores_csv: cannot open " + path);
    out << "series_id,t,score,covered\n";
    char buf[256];
    for (std::size_t i = 0; i < scores.m; ++i) {
        for (std::size_t j = 0; j < scores.t; ++j) {
            std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%d\n", ids[i].c_str(), j,
                          scores.at(i, j), scores.covered_at(i, j) ? 1 : 0);
            out << buf;
        }
    }
    if (!out) throw std::runtime_error("write_scores_csv: write failed for " + path);
}

ScoreMatrix load_scores_csv(const std::string& path, std::vector<std::string>* ids_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_scores_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("series_id,t,score,covered", 0) != 0) {
        throw std::runtime_error("load_scores_csv: bad header in " + path);
    }
    std::vector<std::string> ids;
    std::map<std::string, std::size_t> id_index;
    struct Cell {
        std::size_t row, col;
        double score;
        std::uint8_t covered;
    };
    std::vector<Cell> cells;
    std::size_t max_t = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, t_str, score_str, cov_str;
        if (!std::getline(ls, id, ',') || !std::getline(ls, t_str, ',') ||
            !std::getline(ls, score_str, ',') || !std::getline(ls, cov_str)) {
            throw std::runtime_error("load_scores_csv: malformed row at line " +
                                     std::to_string(line_no));
        }
        auto [it, inserted] = id_index.try_emplace(id, ids.size());
        if (inserted) ids.push_back(id);
        Cell c;
        c.row = it->second;
        c.col = std::stoul(t_str);
        double score = 0.0;
        auto rc = std::from_chars(score_str.data(), score_str.data() + score_str.size(), score);
        if (rc.ec != std::errc{}) {
            throw std::runtime_error("load_scores_csv: bad score at line " +
                                     std::to_string(line_no));
        }
        c.score = score;
        c.covered = cov_str == "1" ? 1 : 0;
        max_t = std::max(max_t, c.col + 1);
        cells.push_back(c);
    }
    ScoreMatrix out;
    out.m = ids.size();
    out.t = max_t;
    out.scores.assign(out.m * out.t, 0.0);
    out.covered.assign(out.m * out.t, 0);
    for (const auto& c : cells) {
        out.scores[c.row * out.t + c.col] = c.score;
        out.covered[c.row * out.t + c.col] = c.covered;
    }
    if (ids_out) *ids_out = std::move(ids);
    return out;
}

void write_detections_csv(const ScoreMatrix& scores, const std::vector<std::string>& ids,
                          double alpha, const std::string& path) {
    const auto flags = threshold(scores, alpha);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_detections_csv: cannot open " + path);
    out << "series_id,t,score,covered,alpha,flag\n";
    char buf[320];
    for (std::size_t i = 0; i < scores.m; ++i) {
        for (std::size_t j = 0; j < scores.t; ++j) {
            std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%d,%.17g,%d\n", ids[i].c_str(), j,
                          scores.at(i, j), scores.covered_at(i, j) ? 1 : 0, alpha,
                          flags[i * scores.t + j] ? 1 : 0);
            out << buf;
        }
    }
    if (!out) throw std::runtime_error("write_detections_csv: write failed for " + path);
}

}  // namespace sisvae
