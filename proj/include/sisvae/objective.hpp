#pragma once

#include <span>
#include <string>

#include "sisvae/nets.hpp"

namespace sisvae {

enum class Regularizer { kl, mean, none };

Regularizer parse_regularizer(const std::string& name);
std::string regularizer_name(Regularizer reg);

struct LossBreakdown {
    double inference_kl = 0.0;  // sum over t of KL(q || prior)
    double neg_loglik = 0.0;    // -sum over t of log p(x_t | mu_x, sigma_x)
    double smooth = 0.0;        // accumulated transition cost of the reconstruction
    double total = 0.0;         // inference_kl + neg_loglik + lambda * smooth
    double lambda = 0.0;
};

// KL( N(mu_q, diag sigma_q^2) || N(mu_p, diag sigma_p^2) ), summed over dims.
double kl_diag_gauss(std::span<const double> mu_q, std::span<const double> sigma_q,
                     std::span<const double> mu_p, std::span<const double> sigma_p);

// log N(x; mu, diag sigma^2), summed over dims.
double gauss_loglik(std::span<const double> x, std::span<const double> mu,
                    std::span<const double> sigma);

// Sum over t >= 2 and over every dimension of the scalar KL from the
// reconstruction distribution at t-1 to the one at t. The t = 1 term is the
// self-KL, which is zero, so a length-1 sequence scores 0.
double smoothness_loss(const DiagGaussianSeq& recon);

// Classical mean-only regularizer: sum of squared second differences of the
// reconstruction means. Requires length >= 3.
double mean_smoothness_loss(const DiagGaussianSeq& recon);

// Value-level assembly of the full objective from already-extracted
// distribution parameters. Serves as an independent route to the same number
// the graph version minimizes.
LossBreakdown sisvae_loss(const DiagGaussianSeq& posterior, const DiagGaussianSeq& prior,
                          const DiagGaussianSeq& recon, const Chunk& x, double lambda,
                          Regularizer reg);

// --- graph route (differentiable, used by training) ---

TensorPtr kl_diag_gauss_node(const TensorPtr& mu_q, const TensorPtr& sigma_q,
                             const TensorPtr& mu_p, const TensorPtr& sigma_p);
TensorPtr gauss_loglik_node(const std::vector<double>& x, const TensorPtr& mu,
                            const TensorPtr& sigma);
TensorPtr smoothness_node(const DistSeqNodes& recon);
TensorPtr mean_smoothness_node(const DistSeqNodes& recon);

struct LossNodes {
    TensorPtr total;  // scalar node to call backward on
    LossBreakdown breakdown;
};

// Builds the minimized objective over one chunk. When lambda is zero or the
// regularizer is `none`, no smoothness subgraph is constructed (its gradient
// contribution would be identically zero); the breakdown still reports the
// smoothness value for the selected regularizer.
LossNodes sisvae_loss_nodes(const UnrollResult& rollout, const Chunk& x, double lambda,
                            Regularizer reg);

}  // namespace sisvae
