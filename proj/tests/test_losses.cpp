#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "darkfield/losses.hpp"
#include "test_support.hpp"

using darkfield::Image2D;
using testsup::lcg_image;

TEST_CASE("least-squares adversarial terms at fixed score levels") {
    const Image2D ones(4, 4, 1.0);
    const Image2D zeros(4, 4, 0.0);
    const Image2D halves(4, 4, 0.5);

    // generator: 0.5 * mean((d_fake - 1)^2)
    CHECK(darkfield::lsgan_generator_term(ones) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(darkfield::lsgan_generator_term(zeros) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(darkfield::lsgan_generator_term(halves) == doctest::Approx(0.125).epsilon(1e-15));

    // discriminator: 0.5 * mean((d_real - 1)^2) + 0.5 * mean(d_fake^2)
    CHECK(darkfield::discriminator_loss(ones, zeros) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(darkfield::discriminator_loss(zeros, ones) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(darkfield::discriminator_loss(halves, halves) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("residual consistency loss on a known impulse fixture") {
    // pred = target except for a unit impulse at the center of a 16x16 field.
    // The 3x3 local residual of that impulse has |center| = 8/9 and eight
    // neighbors of 1/9, so the mean absolute difference is (16/9) / 256.
    const int n = 16 * 16;
    Image2D target(16, 16, 0.0);
    Image2D pred(16, 16, 0.0);
    pred.at(8, 8) = 1.0;
    const double want = (8.0 / 9.0 + 8.0 * (1.0 / 9.0)) / n;
    CHECK(darkfield::residual_consistency_loss(pred, target, 3) ==
          doctest::Approx(want).epsilon(1e-10));

    // identical images produce exactly zero loss and gradient
    const Image2D x = lcg_image(5, 12, 12);
    CHECK(darkfield::residual_consistency_loss(x, x, 5) == 0.0);
    for (double g : darkfield::residual_consistency_grad(x, x, 5).data) CHECK(g == 0.0);
}

TEST_CASE("residual consistency gradient matches finite differences") {
    const Image2D target = lcg_image(6, 8, 8);
    Image2D pred = lcg_image(7, 8, 8);
    const Image2D grad = darkfield::residual_consistency_grad(pred, target, 3);
    const double eps = 1e-6;
    uint64_t lcg = 99;
    for (int trial = 0; trial < 20; ++trial) {
        const size_t i = static_cast<size_t>(testsup::lcg_next(lcg) * pred.size());
        const double keep = pred.data[i];
        pred.data[i] = keep + eps;
        const double up = darkfield::residual_consistency_loss(pred, target, 3);
        pred.data[i] = keep - eps;
        const double dn = darkfield::residual_consistency_loss(pred, target, 3);
        pred.data[i] = keep;
        CHECK(grad.data[i] == doctest::Approx((up - dn) / (2 * eps)).epsilon(1e-4));
    }
}

TEST_CASE("generator_loss composes the weighted objective") {
    const Image2D d_fake(2, 2, 0.5);       // adv = 0.125
    const Image2D nll_map(3, 3, 1.7);      // mean nll = 1.7
    const double residual_term = 0.04;
    darkfield::LossWeights w;
    w.lambda_fidelity = 0.8;
    w.lambda_residual = 0.001;
    const auto b = darkfield::generator_loss(d_fake, nll_map, residual_term, w);
    CHECK(b.adv == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(b.nll == doctest::Approx(1.7).epsilon(1e-15));
    CHECK(b.residual == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(b.total == doctest::Approx(0.125 + 0.8 * 1.7 + 0.001 * 0.04).epsilon(1e-12));
}

TEST_CASE("default loss weights bind fidelity 0.8 and residual 0.001") {
    const darkfield::LossWeights w;
    CHECK(w.lambda_fidelity == 0.8);
    CHECK(w.lambda_residual == 0.001);
}

TEST_CASE("non-finite components abort training with the component named") {
    const Image2D ok(2, 2, 0.5);
    Image2D bad_nll(2, 2, 1.0);
    bad_nll.data[3] = std::numeric_limits<double>::quiet_NaN();
    darkfield::LossWeights w;
    CHECK_THROWS_WITH_AS(darkfield::generator_loss(ok, bad_nll, 0.0, w),
                         doctest::Contains("nll"), darkfield::TrainingAbort);

    Image2D bad_scores(2, 2, 0.5);
    bad_scores.data[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(darkfield::generator_loss(bad_scores, ok, 0.0, w), darkfield::TrainingAbort);
    CHECK_THROWS_AS(darkfield::generator_loss(ok, ok,
                                              std::numeric_limits<double>::quiet_NaN(), w),
                    darkfield::TrainingAbort);
}
