#pragma once

#include <stdexcept>
#include <string>

#include "darkfield/image.hpp"

namespace darkfield {

/// Weights for the generator objective:
///   L_G = L_adv + lambda_fidelity * mean(nll) + lambda_residual * residual_term
/// The defaults bind 0.8 to the fidelity NLL and 0.001 to the residual
/// consistency term (the fidelity term has to dominate for the uncertainty
/// heads to train; the residual term is a texture-level regularizer).
struct LossWeights {
    double lambda_fidelity = 0.8;
    double lambda_residual = 0.001;
};

/// Raised when a loss component goes non-finite; training must stop rather
/// than continue silently. what() names the offending component.
class TrainingAbort : public std::runtime_error {
  public:
    explicit TrainingAbort(const std::string& msg) : std::runtime_error(msg) {}
};

/// mean |local_residual(pred, k) - local_residual(target, k)|.
double residual_consistency_loss(const Image2D& pred, const Image2D& target, int kernel);

/// Gradient of residual_consistency_loss with respect to pred (L1
/// subgradient, sign(0) = 0), pushed through the blur adjoint.
Image2D residual_consistency_grad(const Image2D& pred, const Image2D& target, int kernel);

struct GeneratorLossBreakdown {
    double adv = 0.0;
    double nll = 0.0;
    double residual = 0.0;
    double total = 0.0;
};

/// Least-squares adversarial term pushing fake scores toward the real
/// target: 0.5 * mean((d_fake - 1)^2). Non-negative by construction.
double lsgan_generator_term(const Image2D& d_scores_fake);

/// Composes the full generator objective from precomputed pieces.
/// Throws TrainingAbort naming the component if any piece is non-finite.
GeneratorLossBreakdown generator_loss(const Image2D& d_scores_fake, const Image2D& nll_map,
                                      double residual_term, const LossWeights& weights);

/// 0.5 * mean((d_real - 1)^2) + 0.5 * mean(d_fake^2).
double discriminator_loss(const Image2D& d_scores_real, const Image2D& d_scores_fake);

}  // namespace darkfield
