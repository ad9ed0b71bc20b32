#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sisvae/scoring.hpp"
#include "sisvae/series.hpp"

namespace sisvae {

// Flat (score, label) pairs over the covered positions of a score matrix.
struct LabeledScores {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return scores.size(); }
    std::size_t positives() const;
};

LabeledScores collect_labeled(const ScoreMatrix& scores, const SeriesMatrix& labeled);

// Probability that a random positive outranks a random negative, ties
// counting one half. Requires both classes present.
double auroc(const LabeledScores& data);

struct PrPoint {
    double threshold;  // operating point detects score >= threshold
    double precision;
    double recall;
};

struct PrResult {
    std::vector<PrPoint> curve;
    double auprc = 0.0;   // average precision (step-wise interpolation)
    double best_f1 = 0.0;
};

PrResult pr_curve_and_auprc(const LabeledScores& data);

struct RocPoint {
    double threshold;
    double tpr;
    double fpr;
};

std::vector<RocPoint> roc_curve(const LabeledScores& data);

// Fraction of true anomalies among the k highest-scored points; ties break
// by (score desc, original index asc).
double precision_at_k(const LabeledScores& data, std::size_t k);

// History-average baseline. With causal=true each point scores its absolute
// deviation from the running mean of all earlier points (the first point
// scores |x|); causal=false uses the global row mean instead.
ScoreMatrix ha_baseline(const SeriesMatrix& series, bool causal = true);

void write_roc_csv(const std::vector<RocPoint>& curve, const std::string& path);
void write_pr_csv(const std::vector<PrPoint>& curve, const std::string& path);

}  // namespace sisvae
