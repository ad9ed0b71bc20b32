#include "sisvae/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace sisvae {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)

void check_lengths(const char* op, std::size_t a, std::size_t b) {
    if (a != b) {
        throw std::invalid_argument(std::string(op) + ": length mismatch: " + std::to_string(a) +
                                    " vs " + std::to_string(b));
    }
}

void check_positive(const char* op, std::span<const double> sigma) {
    for (double s : sigma) {
        if (!(s > 0.0)) {
            throw std::invalid_argument(std::string(op) + ": sigma must be > 0, got " +
                                        std::to_string(s));
        }
    }
}

}  // namespace

Regularizer parse_regularizer(const std::string& name) {
    if (name == "kl") return Regularizer::kl;
    if (name == "mean") return Regularizer::mean;
    if (name == "none") return Regularizer::none;
    throw std::invalid_argument("unknown regularizer '" + name + "' (expected kl, mean or none)");
}

std::string regularizer_name(Regularizer reg) {
    switch (reg) {
        case Regularizer::kl: return "kl";
        case Regularizer::mean: return "mean";
        case Regularizer::none: return "none";
    }
    return "?";
}

double kl_diag_gauss(std::span<const double> mu_q, std::span<const double> sigma_q,
                     std::span<const double> mu_p, std::span<const double> sigma_p) {
    check_lengths("kl_diag_gauss", mu_q.size(), sigma_q.size());
    check_lengths("kl_diag_gauss", mu_q.size(), mu_p.size());
    check_lengths("kl_diag_gauss", mu_q.size(), sigma_p.size());
    check_positive("kl_diag_gauss", sigma_q);
    check_positive("kl_diag_gauss", sigma_p);
    double acc = 0.0;
    for (std::size_t d = 0; d < mu_q.size(); ++d) {
        const double gap = mu_q[d] - mu_p[d];
        acc += std::log(sigma_p[d] / sigma_q[d]) +
               (sigma_q[d] * sigma_q[d] + gap * gap) / (2.0 * sigma_p[d] * sigma_p[d]) - 0.5;
    }
    return acc;
}

double gauss_loglik(std::span<const double> x, std::span<const double> mu,
                    std::span<const double> sigma) {
    check_lengths("gauss_loglik", x.size(), mu.size());
    check_lengths("gauss_loglik", x.size(), sigma.size());
    check_positive("gauss_loglik", sigma);
    double acc = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double r = x[d] - mu[d];
        acc += -kHalfLog2Pi - std::log(sigma[d]) - r * r / (2.0 * sigma[d] * sigma[d]);
    }
    return acc;
}

double smoothness_loss(const DiagGaussianSeq& recon) {
    if (recon.length < 1) {
        throw std::invalid_argument("smoothness_loss: sequence must have length >= 1");
    }
    double acc = 0.0;
    for (std::size_t t = 1; t < recon.length; ++t) {
        const std::size_t prev = (t - 1) * recon.dim;
        const std::size_t cur = t * recon.dim;
        acc += kl_diag_gauss({recon.means.data() + prev, recon.dim},
                             {recon.stddevs.data() + prev, recon.dim},
                             {recon.means.data() + cur, recon.dim},
                             {recon.stddevs.data() + cur, recon.dim});
    }
    return acc;
}

double mean_smoothness_loss(const DiagGaussianSeq& recon) {
    if (recon.length < 3) {
        throw std::invalid_argument("mean_smoothness_loss: sequence must have length >= 3, got " +
                                    std::to_string(recon.length));
    }
    double acc = 0.0;
    for (std::size_t t = 2; t < recon.length; ++t) {
        for (std::size_t d = 0; d < recon.dim; ++d) {
            const double dd = recon.mean_at(t, d) - 2.0 * recon.mean_at(t - 1, d) +
                              recon.mean_at(t - 2, d);
            acc += dd * dd;
        }
    }
    return acc;
}

LossBreakdown sisvae_loss(const DiagGaussianSeq& posterior, const DiagGaussianSeq& prior,
                          const DiagGaussianSeq& recon, const Chunk& x, double lambda,
                          Regularizer reg) {
    check_lengths("sisvae_loss", posterior.length, prior.length);
    check_lengths("sisvae_loss", posterior.length, recon.length);
    check_lengths("sisvae_loss", posterior.length, x.w);
    LossBreakdown out;
    out.lambda = lambda;
    for (std::size_t t = 0; t < posterior.length; ++t) {
        const std::size_t z_off = t * posterior.dim;
        out.inference_kl += kl_diag_gauss({posterior.means.data() + z_off, posterior.dim},
                                          {posterior.stddevs.data() + z_off, posterior.dim},
                                          {prior.means.data() + z_off, prior.dim},
                                          {prior.stddevs.data() + z_off, prior.dim});
        const std::size_t x_off = t * recon.dim;
        out.neg_loglik -= gauss_loglik(x.column(t), {recon.means.data() + x_off, recon.dim},
                                       {recon.stddevs.data() + x_off, recon.dim});
    }
    switch (reg) {
        case Regularizer::kl: out.smooth = smoothness_loss(recon); break;
        case Regularizer::mean: out.smooth = mean_smoothness_loss(recon); break;
        case Regularizer::none: out.smooth = 0.0; break;
    }
    out.total = out.inference_kl + out.neg_loglik + lambda * out.smooth;
    return out;
}

TensorPtr kl_diag_gauss_node(const TensorPtr& mu_q, const TensorPtr& sigma_q,
                             const TensorPtr& mu_p, const TensorPtr& sigma_p) {
    // log sp - log sq + (sq^2 + (mq - mp)^2) * exp(-2 log sp) / 2 - 1/2,
    // summed over dimensions; the division is expressed through exp/log.
    auto log_sq = ad::log(sigma_q);
    auto log_sp = ad::log(sigma_p);
    auto inv_var_p = ad::exp(ad::scalar_mul(log_sp, -2.0));
    auto quad = (ad::square(sigma_q) + ad::square(mu_q - mu_p)) * inv_var_p;
    auto per_dim = (log_sp - log_sq) + ad::scalar_mul(quad, 0.5);
    auto half = ad::make_scalar(0.5);
    return ad::sum(per_dim - half);
}

TensorPtr gauss_loglik_node(const std::vector<double>& x, const TensorPtr& mu,
                            const TensorPtr& sigma) {
    auto xs = ad::make_vector(x);
    auto log_s = ad::log(sigma);
    auto inv_var = ad::exp(ad::scalar_mul(log_s, -2.0));
    auto quad = ad::square(xs - mu) * inv_var;
    auto c = ad::make_scalar(kHalfLog2Pi);
    auto per_dim = ad::negate(log_s + ad::scalar_mul(quad, 0.5) + c);
    return ad::sum(per_dim);
}

TensorPtr smoothness_node(const DistSeqNodes& recon) {
    TensorPtr acc = ad::make_scalar(0.0);
    for (std::size_t t = 1; t < recon.mu.size(); ++t) {
        acc = acc + kl_diag_gauss_node(recon.mu[t - 1], recon.sigma[t - 1], recon.mu[t],
                                       recon.sigma[t]);
    }
    return acc;
}

TensorPtr mean_smoothness_node(const DistSeqNodes& recon) {
    if (recon.mu.size() < 3) {
        throw std::invalid_argument("mean_smoothness_node: sequence must have length >= 3");
    }
    TensorPtr acc = ad::make_scalar(0.0);
    for (std::size_t t = 2; t < recon.mu.size(); ++t) {
        auto dd = recon.mu[t] - ad::scalar_mul(recon.mu[t - 1], 2.0) + recon.mu[t - 2];
        acc = acc + ad::sum(ad::square(dd));
    }
    return acc;
}

LossNodes sisvae_loss_nodes(const UnrollResult& rollout, const Chunk& x, double lambda,
                            Regularizer reg) {
    const std::size_t w = rollout.posterior.mu.size();
    check_lengths("sisvae_loss_nodes", w, rollout.prior.mu.size());
    check_lengths("sisvae_loss_nodes", w, rollout.recon.mu.size());
    check_lengths("sisvae_loss_nodes", w, x.w);
    if (lambda < 0.0) throw std::invalid_argument("sisvae_loss_nodes: lambda must be >= 0");

    TensorPtr kl = ad::make_scalar(0.0);
    TensorPtr nll = ad::make_scalar(0.0);
    for (std::size_t t = 0; t < w; ++t) {
        kl = kl + kl_diag_gauss_node(rollout.posterior.mu[t], rollout.posterior.sigma[t],
                                     rollout.prior.mu[t], rollout.prior.sigma[t]);
        nll = nll - gauss_loglik_node(x.column(t), rollout.recon.mu[t], rollout.recon.sigma[t]);
    }

    LossNodes out;
    out.breakdown.lambda = lambda;
    out.breakdown.inference_kl = kl->values[0];
    out.breakdown.neg_loglik = nll->values[0];

    out.total = kl + nll;
    if (reg != Regularizer::none && lambda > 0.0) {
        auto smooth =
            reg == Regularizer::kl ? smoothness_node(rollout.recon)
                                   : mean_smoothness_node(rollout.recon);
        out.breakdown.smooth = smooth->values[0];
        out.total = out.total + ad::scalar_mul(smooth, lambda);
    } else if (reg != Regularizer::none) {
        // still report the smoothness value even though it gets no gradient
        const DiagGaussianSeq recon = rollout.recon.values();
        out.breakdown.smooth =
            reg == Regularizer::kl ? smoothness_loss(recon) : mean_smoothness_loss(recon);
    }
    out.breakdown.total = out.breakdown.inference_kl + out.breakdown.neg_loglik +
                          lambda * out.breakdown.smooth;
    return out;
}

}  // namespace sisvae
