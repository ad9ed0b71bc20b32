#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "sisvae/datagen.hpp"
#include "sisvae/evalkit.hpp"
#include "sisvae/rng.hpp"
#include "sisvae/scoring.hpp"
#include "sisvae/training.hpp"

using namespace sisvae;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.x_dim = 3;
    cfg.h_dim = 6;
    cfg.z_dim = 3;
    cfg.feat_dim = 6;
    return cfg;
}

Chunk random_chunk(Rng& rng, std::size_t m, std::size_t w) {
    Chunk c;
    c.m = m;
    c.w = w;
    c.values.resize(m * w);
    for (double& v : c.values) v = rng.uniform(-2.0, 2.0);
    return c;
}

SeriesMatrix random_series(Rng& rng, std::size_t m, std::size_t t) {
    SeriesMatrix s;
    s.m = m;
    s.t = t;
    s.values.resize(m * t);
    for (double& v : s.values) v = rng.uniform(-2.0, 2.0);
    s.series_ids = SeriesMatrix::default_ids(m);
    return s;
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("score_smc determinism and validation") {
    ModelParams p = ModelParams::init(tiny_config(), 50);
    Rng rng(51);
    Chunk c = random_chunk(rng, 3, 6);
    auto a = score_smc(p, c, 1, 99);
    auto b = score_smc(p, c, 1, 99);
    CHECK(a == b);
    auto other = score_smc(p, c, 1, 100);
    CHECK(a != other);
    CHECK_THROWS_AS(score_smc(p, c, 0, 1), std::invalid_argument);
}

TEST_CASE("per-point score is the negative log-density, minimized at x = mu") {
    const double half_log_2pi = 0.9189385332046727;
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 50);
    Rng rng(52);
    Chunk c = random_chunk(rng, cfg.x_dim, 4);
    const auto scores = score_smc(p, c, 1, 7);

    // reconstruct with the same noise stream the scorer used
    std::vector<double> noise(c.w * cfg.z_dim);
    Rng noise_rng(derive_seed(7, 0));
    for (double& v : noise) v = noise_rng.normal();
    auto rollout = unroll(p, c, noise, UnrollMode::score);

    for (std::size_t t = 0; t < c.w; ++t) {
        for (std::size_t i = 0; i < c.m; ++i) {
            const double mu = rollout.recon.mu[t]->values[i];
            const double sigma = rollout.recon.sigma[t]->values[i];
            const double r = c.at(i, t) - mu;
            const double expect =
                half_log_2pi + std::log(sigma) + r * r / (2.0 * sigma * sigma);
            CHECK(scores[i * c.w + t] == doctest::Approx(expect).epsilon(1e-12));
            // for its sigma, no x can score below the x = mu value
            CHECK(scores[i * c.w + t] >= half_log_2pi + std::log(sigma) - 1e-12);
        }
    }
    // at x = mu with sigma = 1 the score is exactly half_log_2pi
    CHECK(half_log_2pi + std::log(1.0) == doctest::Approx(half_log_2pi));
}

TEST_CASE("score_smc split-stream additivity") {
    ModelParams p = ModelParams::init(tiny_config(), 50);
    Rng rng(53);
    Chunk c = random_chunk(rng, 3, 5);
    const std::size_t a = 3, b = 5;
    auto joint = score_smc(p, c, a + b, 42);
    auto first = score_smc(p, c, a, 42, 0);
    auto second = score_smc(p, c, b, 42, a);
    for (std::size_t i = 0; i < joint.size(); ++i) {
        const double weighted = (a * first[i] + b * second[i]) / static_cast<double>(a + b);
        CHECK(joint[i] == doctest::Approx(weighted).epsilon(1e-12));
    }
}

TEST_CASE("monte-carlo averaging shrinks the spread") {
    ModelParams p = ModelParams::init(tiny_config(), 50);
    Rng rng(54);
    Chunk c = random_chunk(rng, 3, 4);
    auto spread = [&](std::size_t L) {
        const int reps = 20;
        std::vector<double> first_pos(reps);
        for (int r = 0; r < reps; ++r) {
            first_pos[r] = score_smc(p, c, L, derive_seed(1000, r))[0];
        }
        double mean = 0.0;
        for (double v : first_pos) mean += v;
        mean /= reps;
        double var = 0.0;
        for (double v : first_pos) var += (v - mean) * (v - mean);
        return std::sqrt(var / reps);
    };
    CHECK(spread(64) < spread(4));
}

TEST_CASE("score_error definition and non-negativity") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 60);
    Rng rng(55);
    Chunk c = random_chunk(rng, cfg.x_dim, 5);
    const auto scores = score_error(p, c, 31);
    std::vector<double> noise(c.w * cfg.z_dim);
    Rng noise_rng(derive_seed(31, 0));
    for (double& v : noise) v = noise_rng.normal();
    auto rollout = unroll(p, c, noise, UnrollMode::score);
    for (std::size_t t = 0; t < c.w; ++t) {
        for (std::size_t i = 0; i < c.m; ++i) {
            const double expect = std::fabs(c.at(i, t) - rollout.recon.mu[t]->values[i]);
            CHECK(scores[i * c.w + t] == doctest::Approx(expect).epsilon(1e-12));
            CHECK(scores[i * c.w + t] >= 0.0);
        }
    }
}

TEST_CASE("score_series coverage and tail averaging") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 61);
    Rng rng(56);

    SUBCASE("exact multiple: two windows, full coverage") {
        SeriesMatrix s = random_series(rng, cfg.x_dim, 24);
        auto scores = score_series(p, s, ScoreCriterion::prob, 2, 9, 12);
        CHECK(scores.m == 3);
        CHECK(scores.t == 24);
        for (auto cv : scores.covered) CHECK(cv == 1);
    }

    SUBCASE("remainder: anchored tail window, overlap averaged") {
        SeriesMatrix s = random_series(rng, cfg.x_dim, 25);
        // windows at 0, 12 and the anchored tail at 13; positions 13..23
        // are scored twice
        auto scores = score_series(p, s, ScoreCriterion::error, 1, 9, 12);
        for (auto cv : scores.covered) CHECK(cv == 1);
        for (std::size_t j = 0; j < 25; ++j) {
            CHECK(std::isfinite(scores.at(0, j)));
        }
    }

    SUBCASE("full coverage holds over random lengths") {
        for (int i = 0; i < 50; ++i) {
            const std::size_t w = 2 + rng.below(8);
            const std::size_t t = w + rng.below(30);
            SeriesMatrix s = random_series(rng, cfg.x_dim, t);
            auto scores = score_series(p, s, ScoreCriterion::error, 1, i, w);
            for (auto cv : scores.covered) CHECK(cv == 1);
        }
    }

    SUBCASE("window larger than the series throws") {
        SeriesMatrix s = random_series(rng, cfg.x_dim, 5);
        CHECK_THROWS_AS(score_series(p, s, ScoreCriterion::prob, 1, 9, 6),
                        std::invalid_argument);
    }

    SUBCASE("row mismatch names both dims") {
        SeriesMatrix s = random_series(rng, cfg.x_dim + 2, 24);
        CHECK_THROWS_AS(score_series(p, s, ScoreCriterion::prob, 1, 9, 12),
                        std::invalid_argument);
    }
}

TEST_CASE("literal window layouts: 240/120 disjoint, 250/120 averaged tail") {
    ModelConfig cfg;
    cfg.x_dim = 2;
    cfg.h_dim = 4;
    cfg.z_dim = 2;
    cfg.feat_dim = 4;
    ModelParams p = ModelParams::init(cfg, 62);
    Rng rng(58);

    SeriesMatrix even = random_series(rng, 2, 240);
    auto even_scores = score_series(p, even, ScoreCriterion::error, 1, 3, 120);
    for (auto cv : even_scores.covered) CHECK(cv == 1);
    // disjoint windows reproduce the per-chunk scores untouched
    Chunk head;
    head.start = 0;
    head.m = 2;
    head.w = 120;
    head.values.resize(240);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 120; ++j) head.values[i * 120 + j] = even.at(i, j);
    auto head_scores = score_error(p, head, derive_seed(3, 0));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 120; ++j)
            CHECK(even_scores.at(i, j) == head_scores[i * 120 + j]);

    SeriesMatrix odd = random_series(rng, 2, 250);
    auto odd_scores = score_series(p, odd, ScoreCriterion::error, 1, 3, 120);
    for (auto cv : odd_scores.covered) CHECK(cv == 1);
    // windows at 0 and 120 plus the tail anchored at 130: rebuild the two
    // overlapping chunks and check the mean rule on positions 130..239
    auto chunk_at = [&](std::size_t start) {
        Chunk c;
        c.start = start;
        c.m = 2;
        c.w = 120;
        c.values.resize(240);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 120; ++j) c.values[i * 120 + j] = odd.at(i, start + j);
        return c;
    };
    auto mid = score_error(p, chunk_at(120), derive_seed(3, 1));
    auto tail = score_error(p, chunk_at(130), derive_seed(3, 2));
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t t = 130; t < 240; ++t) {
            const double expect = 0.5 * (mid[i * 120 + (t - 120)] + tail[i * 120 + (t - 130)]);
            CHECK(odd_scores.at(i, t) == doctest::Approx(expect).epsilon(1e-15));
        }
        for (std::size_t t = 240; t < 250; ++t) {
            CHECK(odd_scores.at(i, t) == tail[i * 120 + (t - 130)]);
        }
    }
}

TEST_CASE("an injected spike outranks the chunk median after training") {
    SynthConfig gen;
    gen.m = 5;
    gen.t = 120;
    gen.kernel_lengthscale = 30.0;
    gen.noise_base = 0.1;
    gen.seed = 63;
    auto clean = gen_correlated_series(gen);
    auto series = inject_point_anomalies(clean, 0.02, 64);
    auto [normed, stats] = normalize(series);

    ModelConfig mc;
    mc.x_dim = 5;
    mc.h_dim = 16;
    mc.z_dim = 4;
    mc.feat_dim = 16;
    TrainConfig tc;
    tc.window_w = 30;
    tc.step_s = 30;
    tc.epochs = 60;
    tc.lr = 3e-3;
    tc.seed = 65;
    auto result = train(make_windows(normed, 30, 30), tc, mc);
    auto scores = score_series(result.params, normed, ScoreCriterion::prob, 32, 66, 30);

    // the sharpest injected spike, in row-sigma units
    std::size_t spike_i = 0, spike_j = 0;
    double spike_size = -1.0;
    for (std::size_t i = 0; i < series.m; ++i) {
        for (std::size_t j = 0; j < series.t; ++j) {
            if (!series.label_at(i, j)) continue;
            const double bump = std::fabs(series.at(i, j) - clean.at(i, j)) / stats.stdev[i];
            if (bump > spike_size) {
                spike_size = bump;
                spike_i = i;
                spike_j = j;
            }
        }
    }
    REQUIRE(spike_size > 0.5);

    // median score over the chunk holding the spike
    const std::size_t chunk_start = (spike_j / 30) * 30;
    std::vector<double> chunk_scores;
    for (std::size_t i = 0; i < series.m; ++i)
        for (std::size_t j = chunk_start; j < chunk_start + 30; ++j)
            chunk_scores.push_back(scores.at(i, j));
    std::sort(chunk_scores.begin(), chunk_scores.end());
    const double median = chunk_scores[chunk_scores.size() / 2];
    CHECK(scores.at(spike_i, spike_j) > median);
}

TEST_CASE("threshold flags strictly greater scores among covered positions") {
    ScoreMatrix s;
    s.m = 1;
    s.t = 5;
    s.scores = {0.1, 0.5, 0.9, 0.5, 0.2};
    s.covered = {1, 1, 1, 1, 0};

    auto low = threshold(s, 0.0);
    CHECK(low == std::vector<std::uint8_t>{1, 1, 1, 1, 0});
    auto high = threshold(s, 1.0);
    CHECK(high == std::vector<std::uint8_t>{0, 0, 0, 0, 0});
    auto mid = threshold(s, 0.5);
    CHECK(mid == std::vector<std::uint8_t>{0, 0, 1, 0, 0});

    // monotone: raising alpha never adds detections
    Rng rng(57);
    ScoreMatrix r;
    r.m = 2;
    r.t = 20;
    r.scores.resize(40);
    r.covered.assign(40, 1);
    for (double& v : r.scores) v = rng.uniform(-1, 1);
    double prev_alpha = -2.0;
    auto prev = threshold(r, prev_alpha);
    for (double alpha : {-0.5, 0.0, 0.3, 0.9, 2.0}) {
        auto cur = threshold(r, alpha);
        for (std::size_t i = 0; i < cur.size(); ++i) CHECK(cur[i] <= prev[i]);
        prev = cur;
    }
}

TEST_CASE("score CSV round trip") {
    ScoreMatrix s;
    s.m = 2;
    s.t = 3;
    s.scores = {0.125, 1.5, -0.75, 3.25, 0.0, 2.125};
    s.covered = {1, 1, 0, 1, 1, 1};
    const auto dir = std::filesystem::temp_directory_path() / "sisvae_score_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "scores.csv").string();
    write_scores_csv(s, {"a", "b"}, path);
    std::vector<std::string> ids;
    auto back = load_scores_csv(path, &ids);
    CHECK(ids == std::vector<std::string>{"a", "b"});
    CHECK(back.m == 2);
    CHECK(back.t == 3);
    CHECK(back.scores == s.scores);
    CHECK(back.covered == s.covered);
    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
