#include "darkfield/ggd.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <stdexcept>

#include "darkfield/rng.hpp"

namespace darkfield {

namespace {

void check_beta(double beta) {
    if (!(beta >= kBetaMin && beta <= kBetaMax)) {
        throw std::invalid_argument("ggd: beta " + std::to_string(beta) + " outside [" +
                                    std::to_string(kBetaMin) + ", " + std::to_string(kBetaMax) +
                                    "]");
    }
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("ggd: alpha must be > 0, got " + std::to_string(alpha));
    }
}

}  // namespace

void validate_params(const GgdParams& params) {
    if (!params.alpha.same_shape(params.beta)) {
        throw std::invalid_argument("ggd: alpha and beta maps differ in shape");
    }
    for (double a : params.alpha.data) check_alpha(a);
    for (double b : params.beta.data) check_beta(b);
}

double effective_sigma(double alpha, double beta) {
    check_alpha(alpha);
    check_beta(beta);
    return alpha * std::exp(0.5 * (std::lgamma(3.0 / beta) - std::lgamma(1.0 / beta)));
}

Image2D effective_sigma(const GgdParams& params) {
    validate_params(params);
    Image2D out(params.alpha.height, params.alpha.width);
    for (size_t i = 0; i < out.size(); ++i) {
        const double b = params.beta.data[i];
        out.data[i] = params.alpha.data[i] *
                      std::exp(0.5 * (std::lgamma(3.0 / b) - std::lgamma(1.0 / b)));
    }
    return out;
}

double ggd_nll_scalar(double target, double pred, double alpha, double beta) {
    const double diff = target - pred;
    const double s = std::sqrt(diff * diff + kResidualEps);
    return std::pow(s / alpha, beta) + std::log(alpha) + std::lgamma(1.0 / beta) -
           std::log(beta) + std::log(2.0);
}

void ggd_nll_grad_scalar(double target, double pred, double alpha, double beta, double* d_pred,
                         double* d_alpha, double* d_beta) {
    const double diff = target - pred;
    const double s = std::sqrt(diff * diff + kResidualEps);
    const double ratio = s / alpha;
    const double pow_b = std::pow(ratio, beta);

    // d s / d pred = (pred - target) / s
    if (d_pred) *d_pred = beta * (pow_b / ratio) * (1.0 / alpha) * ((pred - target) / s);
    if (d_alpha) *d_alpha = -beta * pow_b / alpha + 1.0 / alpha;
    if (d_beta) {
        *d_beta = pow_b * std::log(ratio) -
                  boost::math::digamma(1.0 / beta) / (beta * beta) - 1.0 / beta;
    }
}

NllResult ggd_nll(const Image2D& target, const Image2D& pred, const GgdParams& params) {
    if (!target.same_shape(pred) || !target.same_shape(params.alpha)) {
        throw std::invalid_argument("ggd_nll: target/pred/param shapes differ");
    }
    validate_params(params);
    NllResult res;
    res.per_pixel = Image2D(target.height, target.width);
    double sum = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        const double v = ggd_nll_scalar(target.data[i], pred.data[i], params.alpha.data[i],
                                        params.beta.data[i]);
        res.per_pixel.data[i] = v;
        sum += v;
    }
    res.mean = sum / static_cast<double>(target.size());
    return res;
}

NllGrad ggd_nll_grad(const Image2D& target, const Image2D& pred, const GgdParams& params) {
    if (!target.same_shape(pred) || !target.same_shape(params.alpha)) {
        throw std::invalid_argument("ggd_nll_grad: target/pred/param shapes differ");
    }
    validate_params(params);
    NllGrad g;
    g.d_pred = Image2D(target.height, target.width);
    g.d_alpha = Image2D(target.height, target.width);
    g.d_beta = Image2D(target.height, target.width);
    for (size_t i = 0; i < target.size(); ++i) {
        ggd_nll_grad_scalar(target.data[i], pred.data[i], params.alpha.data[i],
                            params.beta.data[i], &g.d_pred.data[i], &g.d_alpha.data[i],
                            &g.d_beta.data[i]);
    }
    return g;
}

Image2D ggd_sample(int height, int width, const GgdParams& params, uint64_t seed) {
    if (params.alpha.height != height || params.alpha.width != width) {
        throw std::invalid_argument("ggd_sample: param shape differs from requested shape");
    }
    validate_params(params);
    Rng rng(mix_seed(seed, 0x99d5a3ULL));
    Image2D out(height, width);
    for (size_t i = 0; i < out.size(); ++i) {
        const double beta = params.beta.data[i];
        const double g = rng.gamma(1.0 / beta);
        out.data[i] = rng.sign() * params.alpha.data[i] * std::pow(g, 1.0 / beta);
    }
    return out;
}

}  // namespace darkfield
