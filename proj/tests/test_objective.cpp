#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sisvae/objective.hpp"
#include "sisvae/rng.hpp"

using namespace sisvae;
using ad::make_scalar;
using ad::make_vector;
using ad::TensorPtr;

namespace {

DiagGaussianSeq random_seq(Rng& rng, std::size_t length, std::size_t dim,
                           bool equal_sigma = false) {
    DiagGaussianSeq s;
    s.length = length;
    s.dim = dim;
    s.means.resize(length * dim);
    s.stddevs.resize(length * dim);
    const double shared = rng.uniform(0.3, 2.0);
    for (std::size_t i = 0; i < length * dim; ++i) {
        s.means[i] = rng.uniform(-3.0, 3.0);
        s.stddevs[i] = equal_sigma ? shared : rng.uniform(0.2, 2.5);
    }
    return s;
}

DiagGaussianSeq reversed(const DiagGaussianSeq& s) {
    DiagGaussianSeq r = s;
    for (std::size_t t = 0; t < s.length; ++t) {
        for (std::size_t d = 0; d < s.dim; ++d) {
            r.means[t * s.dim + d] = s.means[(s.length - 1 - t) * s.dim + d];
            r.stddevs[t * s.dim + d] = s.stddevs[(s.length - 1 - t) * s.dim + d];
        }
    }
    return r;
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("kl_diag_gauss closed-form cases verified against quadrature") {
    // identical distributions
    CHECK(kl_diag_gauss(std::vector<double>{0.3}, std::vector<double>{1.2},
                        std::vector<double>{0.3}, std::vector<double>{1.2}) == 0.0);

    // N(1,1) vs N(0,1): quadrature gives 0.5
    const double unit_gap = oracles::kl_gauss_quadrature(1.0, 1.0, 0.0, 1.0);
    CHECK(unit_gap == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(kl_diag_gauss(std::vector<double>{1.0}, std::vector<double>{1.0},
                        std::vector<double>{0.0}, std::vector<double>{1.0}) ==
          doctest::Approx(0.5).epsilon(1e-12));

    // N(0, 2^2) vs N(0, 1): log(1/2) + 4/2 - 1/2 = 0.80685281944005469
    const double widened = oracles::kl_gauss_quadrature(0.0, 2.0, 0.0, 1.0);
    CHECK(widened == doctest::Approx(0.80685281944005469).epsilon(1e-9));
    CHECK(kl_diag_gauss(std::vector<double>{0.0}, std::vector<double>{2.0},
                        std::vector<double>{0.0}, std::vector<double>{1.0}) ==
          doctest::Approx(0.80685281944005469).epsilon(1e-12));
}

TEST_CASE("kl_diag_gauss agrees with quadrature across a parameter sweep") {
    Rng rng(404);
    for (int i = 0; i < 25; ++i) {
        const double mu_q = rng.uniform(-2.0, 2.0), mu_p = rng.uniform(-2.0, 2.0);
        const double sq = rng.uniform(0.3, 3.0), sp = rng.uniform(0.3, 3.0);
        const double impl = kl_diag_gauss(std::vector<double>{mu_q}, std::vector<double>{sq},
                                          std::vector<double>{mu_p}, std::vector<double>{sp});
        const double quad = oracles::kl_gauss_quadrature(mu_q, sq, mu_p, sp);
        CHECK(impl == doctest::Approx(quad).epsilon(1e-8));
        CHECK(impl >= 0.0);
    }
}

TEST_CASE("kl_diag_gauss input validation") {
    CHECK_THROWS_AS(kl_diag_gauss(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0},
                                  std::vector<double>{0.0}, std::vector<double>{1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(kl_diag_gauss(std::vector<double>{1.0}, std::vector<double>{0.0},
                                  std::vector<double>{0.0}, std::vector<double>{1.0}),
                    std::invalid_argument);
}

TEST_CASE("gauss_loglik value cases and density oracle") {
    CHECK(gauss_loglik(std::vector<double>{0.0}, std::vector<double>{0.0},
                       std::vector<double>{1.0}) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-15));

    // additivity across dimensions
    Rng rng(405);
    const double x0 = rng.uniform(-2, 2), x1 = rng.uniform(-2, 2);
    const double m0 = rng.uniform(-2, 2), m1 = rng.uniform(-2, 2);
    const double s0 = rng.uniform(0.2, 2), s1 = rng.uniform(0.2, 2);
    const double joint = gauss_loglik(std::vector<double>{x0, x1}, std::vector<double>{m0, m1},
                                      std::vector<double>{s0, s1});
    const double split = gauss_loglik(std::vector<double>{x0}, std::vector<double>{m0},
                                      std::vector<double>{s0}) +
                         gauss_loglik(std::vector<double>{x1}, std::vector<double>{m1},
                                      std::vector<double>{s1});
    CHECK(joint == doctest::Approx(split).epsilon(1e-14));

    // against the direct density
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-4, 4), mu = rng.uniform(-4, 4), s = rng.uniform(0.1, 3);
        const double ll =
            gauss_loglik(std::vector<double>{x}, std::vector<double>{mu}, std::vector<double>{s});
        CHECK(ll == doctest::Approx(std::log(oracles::gauss_pdf(x, mu, s))).epsilon(1e-10));
    }
}

TEST_CASE("smoothness_loss cases") {
    DiagGaussianSeq constant;
    constant.length = 4;
    constant.dim = 2;
    constant.means = {1, 2, 1, 2, 1, 2, 1, 2};
    constant.stddevs = {0.5, 0.7, 0.5, 0.7, 0.5, 0.7, 0.5, 0.7};
    CHECK(smoothness_loss(constant) == 0.0);

    DiagGaussianSeq step;
    step.length = 2;
    step.dim = 1;
    step.means = {0.0, 1.0};
    step.stddevs = {1.0, 1.0};
    CHECK(smoothness_loss(step) == doctest::Approx(0.5).epsilon(1e-12));

    DiagGaussianSeq single;
    single.length = 1;
    single.dim = 3;
    single.means = {1, 2, 3};
    single.stddevs = {1, 1, 1};
    CHECK(smoothness_loss(single) == 0.0);

    Rng rng(406);
    for (int i = 0; i < 100; ++i) {
        auto seq = random_seq(rng, 2 + rng.below(8), 1 + rng.below(4));
        CHECK(smoothness_loss(seq) >= 0.0);
    }
}

TEST_CASE("smoothness_loss is reversal-invariant when all sigmas are equal") {
    Rng rng(407);
    for (int i = 0; i < 30; ++i) {
        auto seq = random_seq(rng, 3 + rng.below(6), 1 + rng.below(3), /*equal_sigma=*/true);
        CHECK(smoothness_loss(seq) == doctest::Approx(smoothness_loss(reversed(seq)))
                                          .epsilon(1e-12));
    }
}

TEST_CASE("mean_smoothness_loss cases") {
    DiagGaussianSeq linear;
    linear.length = 5;
    linear.dim = 2;
    linear.means.resize(10);
    linear.stddevs.assign(10, 1.0);
    for (std::size_t t = 0; t < 5; ++t) {
        linear.means[t * 2 + 0] = 3.0 * t + 1.0;
        linear.means[t * 2 + 1] = -2.0 * t;
    }
    CHECK(mean_smoothness_loss(linear) == 0.0);

    DiagGaussianSeq kink;
    kink.length = 3;
    kink.dim = 1;
    kink.means = {0.0, 0.0, 1.0};
    kink.stddevs = {1.0, 1.0, 1.0};
    CHECK(mean_smoothness_loss(kink) == 1.0);

    DiagGaussianSeq tiny;
    tiny.length = 2;
    tiny.dim = 1;
    tiny.means = {0, 1};
    tiny.stddevs = {1, 1};
    CHECK_THROWS_AS(mean_smoothness_loss(tiny), std::invalid_argument);

    Rng rng(408);
    auto seq = random_seq(rng, 7, 3);
    double direct = 0.0;
    for (std::size_t t = 2; t < seq.length; ++t) {
        for (std::size_t d = 0; d < seq.dim; ++d) {
            const double dd =
                seq.mean_at(t, d) - 2.0 * seq.mean_at(t - 1, d) + seq.mean_at(t - 2, d);
            direct += dd * dd;
        }
    }
    CHECK(mean_smoothness_loss(seq) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("graph nodes match the value-level routes") {
    Rng rng(409);
    for (int i = 0; i < 20; ++i) {
        const std::size_t dim = 1 + rng.below(5);
        std::vector<double> mq(dim), sq(dim), mp(dim), sp(dim), x(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            mq[d] = rng.uniform(-2, 2);
            sq[d] = rng.uniform(0.2, 2);
            mp[d] = rng.uniform(-2, 2);
            sp[d] = rng.uniform(0.2, 2);
            x[d] = rng.uniform(-2, 2);
        }
        auto kl_node = kl_diag_gauss_node(make_vector(mq), make_vector(sq), make_vector(mp),
                                          make_vector(sp));
        CHECK(kl_node->values[0] == doctest::Approx(kl_diag_gauss(mq, sq, mp, sp))
                                        .epsilon(1e-12));
        auto ll_node = gauss_loglik_node(x, make_vector(mp), make_vector(sp));
        CHECK(ll_node->values[0] == doctest::Approx(gauss_loglik(x, mp, sp)).epsilon(1e-12));
    }
}

TEST_CASE("sisvae_loss assembly on a tiny model") {
    ModelConfig cfg;
    cfg.x_dim = 2;
    cfg.h_dim = 4;
    cfg.z_dim = 3;
    cfg.feat_dim = 4;
    ModelParams params = ModelParams::init(cfg, 77);
    Rng rng(410);
    Chunk chunk;
    chunk.m = 2;
    chunk.w = 3;
    chunk.values.resize(6);
    for (double& v : chunk.values) v = rng.uniform(-1.5, 1.5);
    std::vector<double> noise(chunk.w * cfg.z_dim);
    for (double& v : noise) v = rng.normal();

    auto rollout = unroll(params, chunk, noise, UnrollMode::train);

    SUBCASE("lambda 0 reduces to inference + reconstruction; none matches") {
        auto at_zero = sisvae_loss_nodes(rollout, chunk, 0.0, Regularizer::kl);
        CHECK(at_zero.breakdown.total ==
              at_zero.breakdown.inference_kl + at_zero.breakdown.neg_loglik);
        auto none = sisvae_loss_nodes(rollout, chunk, 0.7, Regularizer::none);
        CHECK(none.breakdown.smooth == 0.0);
        CHECK(at_zero.breakdown.total == none.breakdown.total);
    }

    SUBCASE("graph total matches the independent scalar recomputation") {
        for (auto reg : {Regularizer::kl, Regularizer::mean, Regularizer::none}) {
            auto nodes = sisvae_loss_nodes(rollout, chunk, 0.5, reg);
            auto direct = sisvae_loss(rollout.posterior.values(), rollout.prior.values(),
                                      rollout.recon.values(), chunk, 0.5, reg);
            CHECK(nodes.breakdown.total == doctest::Approx(direct.total).epsilon(1e-10));
            CHECK(nodes.breakdown.inference_kl ==
                  doctest::Approx(direct.inference_kl).epsilon(1e-10));
            CHECK(nodes.breakdown.neg_loglik ==
                  doctest::Approx(direct.neg_loglik).epsilon(1e-10));
            CHECK(nodes.breakdown.smooth == doctest::Approx(direct.smooth).epsilon(1e-10));
            CHECK(nodes.total->values[0] == doctest::Approx(direct.total).epsilon(1e-10));
            CHECK(direct.total ==
                  direct.inference_kl + direct.neg_loglik + direct.lambda * direct.smooth);
        }
    }
}

TEST_CASE("gauss_loglik is maximized over mu at mu = x (autodiff gradient vanishes)") {
    Rng rng(411);
    const std::vector<double> x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    ad::Tape tape;
    auto mu = make_vector(x, true);
    auto sigma = make_vector({0.7, 1.3});
    auto ll = gauss_loglik_node(x, mu, sigma);
    tape.backward(ll);
    for (double g : mu->grad) CHECK(std::fabs(g) < 1e-14);
}

TEST_CASE("full objective gradient matches finite differences on a seeded tiny model") {
    ModelConfig cfg;
    cfg.x_dim = 2;
    cfg.h_dim = 4;
    cfg.z_dim = 2;
    cfg.feat_dim = 3;
    Rng rng(20);
    Chunk chunk;
    chunk.m = 2;
    chunk.w = 3;
    chunk.values.resize(6);
    for (double& v : chunk.values) v = rng.uniform(-1.5, 1.5);
    std::vector<double> noise(chunk.w * cfg.z_dim);
    for (double& v : noise) v = rng.normal();

    for (auto reg : {Regularizer::kl, Regularizer::mean}) {
        auto loss_of = [&](const ad::TensorPtr& flat) {
            ModelParams view = ModelParams::from_flat(cfg, flat);
            auto rollout = unroll(view, chunk, noise, UnrollMode::train);
            return sisvae_loss_nodes(rollout, chunk, 0.5, reg).total;
        };
        const auto point = ModelParams::init(cfg, 120).flatten();
        CHECK(ad::grad_check(loss_of, point, 3e-4) < 1e-5);
    }
}

}  // TEST_SUITE
