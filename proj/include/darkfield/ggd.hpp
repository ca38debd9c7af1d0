#pragma once

#include <cstdint>

#include "darkfield/image.hpp"

namespace darkfield {

// Shape-parameter box. Gamma(3/beta) overflows for tiny beta; the upper end
// admits near-uniform shapes, the lower end sub-Laplacian tails.
inline constexpr double kBetaMin = 0.3;
inline constexpr double kBetaMax = 10.0;

// |target - pred| is stabilized as sqrt(diff^2 + eps) so the gradient is
// defined at zero residual.
inline constexpr double kResidualEps = 1e-12;

/// Per-pixel generalized-Gaussian parameters: scale alpha > 0 and shape
/// beta in [kBetaMin, kBetaMax]. Maps must share the prediction's shape.
struct GgdParams {
    Image2D alpha;
    Image2D beta;
};

void validate_params(const GgdParams& params);

/// sigma = alpha * sqrt(Gamma(3/beta) / Gamma(1/beta)).
double effective_sigma(double alpha, double beta);
Image2D effective_sigma(const GgdParams& params);

struct NllResult {
    Image2D per_pixel;
    double mean = 0.0;
};

/// Canonical GGD negative log-likelihood with full normalization:
///   nll = (|t - p| / alpha)^beta + log alpha + log Gamma(1/beta) - log beta + log 2
/// The per-pixel map and its mean are both returned.
NllResult ggd_nll(const Image2D& target, const Image2D& pred, const GgdParams& params);

struct NllGrad {
    Image2D d_pred;
    Image2D d_alpha;
    Image2D d_beta;
};

/// Analytic partials of the per-pixel NLL (not of the mean).
NllGrad ggd_nll_grad(const Image2D& target, const Image2D& pred, const GgdParams& params);

// Scalar forms used by the network's loss layer.
double ggd_nll_scalar(double target, double pred, double alpha, double beta);
void ggd_nll_grad_scalar(double target, double pred, double alpha, double beta, double* d_pred,
                         double* d_alpha, double* d_beta);

/// i.i.d. zero-mean GGD noise field via the gamma-power transform:
/// draw G ~ Gamma(1/beta, 1), value = sign * alpha * G^(1/beta).
/// Deterministic for a given seed.
Image2D ggd_sample(int height, int width, const GgdParams& params, uint64_t seed);

}  // namespace darkfield
