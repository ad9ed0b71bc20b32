#include "sisvae/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace sisvae {

namespace {

void check_finite(const LabeledScores& data) {
    for (double s : data.scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("scores must be finite");
    }
}

// indices sorted by (score desc, index asc)
std::vector<std::size_t> rank_order(const LabeledScores& data) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return data.scores[a] > data.scores[b];
    });
    return idx;
}

}  // namespace

std::size_t LabeledScores::positives() const {
    std::size_t n = 0;
    for (auto l : labels) n += (l != 0);
    return n;
}

LabeledScores collect_labeled(const ScoreMatrix& scores, const SeriesMatrix& labeled) {
    labeled.check();
    if (!labeled.has_labels()) {
        throw std::invalid_argument("collect_labeled: series carries no label matrix");
    }
    if (scores.m != labeled.m || scores.t != labeled.t) {
        throw std::invalid_argument("collect_labeled: score matrix " + std::to_string(scores.m) +
                                    "x" + std::to_string(scores.t) + " vs labels " +
                                    std::to_string(labeled.m) + "x" + std::to_string(labeled.t));
    }
    LabeledScores out;
    for (std::size_t i = 0; i < scores.m; ++i) {
        for (std::size_t j = 0; j < scores.t; ++j) {
            if (!scores.covered_at(i, j)) continue;
            out.scores.push_back(scores.at(i, j));
            out.labels.push_back(labeled.label_at(i, j));
        }
    }
    return out;
}

double auroc(const LabeledScores& data) {
    check_finite(data);
    const std::size_t n = data.size();
    const std::size_t n_pos = data.positives();
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("auroc: both classes must be present");
    }

    // average ranks with ties, ascending by score
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return data.scores[a] < data.scores[b];
    });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && data.scores[idx[j]] == data.scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average
        for (std::size_t k = i; k < j; ++k) {
            if (data.labels[idx[k]]) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

PrResult pr_curve_and_auprc(const LabeledScores& data) {
    check_finite(data);
    const std::size_t n_pos = data.positives();
    if (n_pos == 0) throw std::invalid_argument("pr_curve_and_auprc: no positive labels");

    const auto idx = rank_order(data);
    PrResult out;
    std::size_t tp = 0, fp = 0;
    double prev_recall = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && data.scores[idx[j]] == data.scores[idx[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (data.labels[idx[k]]) ++tp;
            else ++fp;
        }
        PrPoint p;
        p.threshold = data.scores[idx[i]];
        p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        p.recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        out.curve.push_back(p);
        out.auprc += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
        if (p.precision + p.recall > 0.0) {
            out.best_f1 = std::max(out.best_f1,
                                   2.0 * p.precision * p.recall / (p.precision + p.recall));
        }
        i = j;
    }
    return out;
}

std::vector<RocPoint> roc_curve(const LabeledScores& data) {
    check_finite(data);
    const std::size_t n_pos = data.positives();
    const std::size_t n_neg = data.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("roc_curve: both classes must be present");
    }
    const auto idx = rank_order(data);
    std::vector<RocPoint> curve;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && data.scores[idx[j]] == data.scores[idx[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (data.labels[idx[k]]) ++tp;
            else ++fp;
        }
        curve.push_back({data.scores[idx[i]], static_cast<double>(tp) / n_pos,
                         static_cast<double>(fp) / n_neg});
        i = j;
    }
    return curve;
}

double precision_at_k(const LabeledScores& data, std::size_t k) {
    if (k < 1 || k > data.size()) {
        throw std::invalid_argument("precision_at_k: k = " + std::to_string(k) +
                                    " out of range [1, " + std::to_string(data.size()) + "]");
    }
    check_finite(data);
    const auto idx = rank_order(data);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += (data.labels[idx[i]] != 0);
    return static_cast<double>(hits) / static_cast<double>(k);
}

ScoreMatrix ha_baseline(const SeriesMatrix& series, bool causal) {
    series.check();
    ScoreMatrix out;
    out.m = series.m;
    out.t = series.t;
    out.scores.resize(series.m * series.t);
    out.covered.assign(series.m * series.t, 1);
    for (std::size_t i = 0; i < series.m; ++i) {
        if (causal) {
            double running = 0.0;
            for (std::size_t j = 0; j < series.t; ++j) {
                const double hist_mean = j == 0 ? 0.0 : running / static_cast<double>(j);
                out.scores[i * series.t + j] = std::fabs(series.at(i, j) - hist_mean);
                running += series.at(i, j);
            }
        } else {
            double mean = 0.0;
            for (std::size_t j = 0; j < series.t; ++j) mean += series.at(i, j);
            mean /= static_cast<double>(series.t);
            for (std::size_t j = 0; j < series.t; ++j) {
                out.scores[i * series.t + j] = std::fabs(series.at(i, j) - mean);
            }
        }
    }
    return out;
}

void write_roc_csv(const std::vector<RocPoint>& curve, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_roc_csv: cannot open " + path);
    out << "threshold,tpr,fpr\n";
    char buf[160];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.tpr, p.fpr);
        out << buf;
    }
    if (!out) throw std::runtime_error("write_roc_csv: write failed for " + path);
}

void write_pr_csv(const std::vector<PrPoint>& curve, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pr_csv: cannot open " + path);
    out << "threshold,precision,recall\n";
    char buf[160];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.precision, p.recall);
        out << buf;
    }
    if (!out) throw std::runtime_error("write_pr_csv: write failed for " + path);
}

}  // namespace sisvae
