#include "darkfield/losses.hpp"

#include <cmath>

namespace darkfield {

namespace {

double mean_of(const Image2D& img) {
    double acc = 0.0;
    for (double v : img.data) acc += v;
    return acc / static_cast<double>(img.size());
}

void check_finite(double v, const char* component) {
    if (!std::isfinite(v)) {
        throw TrainingAbort(std::string("non-finite loss component: ") + component);
    }
}

}  // namespace

double residual_consistency_loss(const Image2D& pred, const Image2D& target, int kernel) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("residual_consistency_loss: shape mismatch");
    }
    const Image2D rp = local_residual(pred, kernel);
    const Image2D rt = local_residual(target, kernel);
    double acc = 0.0;
    for (size_t i = 0; i < rp.size(); ++i) acc += std::abs(rp.data[i] - rt.data[i]);
    return acc / static_cast<double>(rp.size());
}

Image2D residual_consistency_grad(const Image2D& pred, const Image2D& target, int kernel) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("residual_consistency_grad: shape mismatch");
    }
    const Image2D rp = local_residual(pred, kernel);
    const Image2D rt = local_residual(target, kernel);
    const double inv_n = 1.0 / static_cast<double>(rp.size());

    Image2D sgn(pred.height, pred.width);
    for (size_t i = 0; i < sgn.size(); ++i) {
        const double d = rp.data[i] - rt.data[i];
        sgn.data[i] = (d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0));
    }
    // residual operator is I - B, so its adjoint is I - B^T
    const Image2D adj = box_blur_adjoint(sgn, kernel);
    Image2D grad(pred.height, pred.width);
    for (size_t i = 0; i < grad.size(); ++i) grad.data[i] = sgn.data[i] - adj.data[i];
    return grad;
}

double lsgan_generator_term(const Image2D& d_scores_fake) {
    double acc = 0.0;
    for (double s : d_scores_fake.data) acc += (s - 1.0) * (s - 1.0);
    return 0.5 * acc / static_cast<double>(d_scores_fake.size());
}

GeneratorLossBreakdown generator_loss(const Image2D& d_scores_fake, const Image2D& nll_map,
                                      double residual_term, const LossWeights& weights) {
    GeneratorLossBreakdown out;
    out.adv = lsgan_generator_term(d_scores_fake);
    check_finite(out.adv, "L_adv");
    out.nll = mean_of(nll_map);
    check_finite(out.nll, "L_nll");
    out.residual = residual_term;
    check_finite(out.residual, "L_res");
    out.total = out.adv + weights.lambda_fidelity * out.nll + weights.lambda_residual * out.residual;
    check_finite(out.total, "L_total");
    return out;
}

double discriminator_loss(const Image2D& d_scores_real, const Image2D& d_scores_fake) {
    double acc_r = 0.0, acc_f = 0.0;
    for (double s : d_scores_real.data) acc_r += (s - 1.0) * (s - 1.0);
    for (double s : d_scores_fake.data) acc_f += s * s;
    const double loss = 0.5 * acc_r / static_cast<double>(d_scores_real.size()) +
                        0.5 * acc_f / static_cast<double>(d_scores_fake.size());
    check_finite(loss, "L_disc");
    return loss;
}

}  // namespace darkfield
