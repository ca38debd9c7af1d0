#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "darkfield/ggd.hpp"
#include "test_support.hpp"

using darkfield::GgdParams;
using darkfield::Image2D;

namespace {

GgdParams flat_params(int h, int w, double alpha, double beta) {
    return {Image2D(h, w, alpha), Image2D(h, w, beta)};
}

}  // namespace

TEST_CASE("effective_sigma closed forms") {
    // beta = 2 is a Gaussian with sigma = alpha / sqrt(2); beta = 1 is a
    // Laplacian with sigma = alpha * sqrt(2).
    CHECK(darkfield::effective_sigma(1.0, 2.0) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(darkfield::effective_sigma(1.0, 1.0) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    // independently computed reference values
    CHECK(darkfield::effective_sigma(0.3, 0.8) == doctest::Approx(0.6627025070449892).epsilon(1e-12));
    CHECK(darkfield::effective_sigma(2.5, 5.0) == doctest::Approx(1.423866060165431).epsilon(1e-12));
    // scale linearity in alpha
    CHECK(darkfield::effective_sigma(3.0, 1.7) ==
          doctest::Approx(3.0 * darkfield::effective_sigma(1.0, 1.7)).epsilon(1e-12));
}

TEST_CASE("nll matches independently computed reference values") {
    // zero residual, unit scale, Gaussian shape: log Gamma(1/2) = log sqrt(pi)
    CHECK(darkfield::ggd_nll_scalar(0.4, 0.4, 1.0, 2.0) ==
          doctest::Approx(0.5723649429257).epsilon(1e-10));
    CHECK(darkfield::ggd_nll_scalar(0.3, 0.1, 0.2, 1.7) ==
          doctest::Approx(-0.030305809874256684).epsilon(1e-9));
    CHECK(darkfield::ggd_nll_scalar(0.55, 0.2, 0.07, 0.8) ==
          doctest::Approx(1.7826571769198751).epsilon(1e-10));
    CHECK(darkfield::ggd_nll_scalar(0.9, 0.4, 0.5, 3.0) ==
          doctest::Approx(0.8868083582656571).epsilon(1e-10));
    // a unit residual at unit scale adds exactly 1 regardless of shape
    // (tolerance covers the stabilized |t - p| at zero residual)
    for (double beta : {1.0, 2.0, 4.0}) {
        const double base = darkfield::ggd_nll_scalar(0.0, 0.0, 1.0, beta);
        CHECK(darkfield::ggd_nll_scalar(1.0, 0.0, 1.0, beta) ==
              doctest::Approx(base + 1.0).epsilon(1e-5));
    }
}

TEST_CASE("map-form nll equals the scalar form and reports the mean") {
    const Image2D target = testsup::lcg_image(7, 6, 5);
    const Image2D pred = testsup::lcg_image(8, 6, 5);
    GgdParams params = flat_params(6, 5, 0.15, 1.9);
    const auto res = darkfield::ggd_nll(target, pred, params);
    double acc = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        const double want = darkfield::ggd_nll_scalar(target.data[i], pred.data[i], 0.15, 1.9);
        CHECK(res.per_pixel.data[i] == doctest::Approx(want).epsilon(1e-12));
        acc += want;
    }
    CHECK(res.mean == doctest::Approx(acc / target.size()).epsilon(1e-12));
}

TEST_CASE("for fixed shape the nll is minimized at alpha* = r * beta^(1/beta)") {
    // d/d alpha [(r/alpha)^beta + log alpha] = 0  =>  alpha* = r beta^{1/beta}
    const double r = 0.23;
    for (double beta : {0.7, 1.0, 2.0, 3.5}) {
        const double alpha_star = r * std::pow(beta, 1.0 / beta);
        const double at_star = darkfield::ggd_nll_scalar(r, 0.0, alpha_star, beta);
        for (double f : {0.8, 0.9, 1.1, 1.25}) {
            CHECK(darkfield::ggd_nll_scalar(r, 0.0, alpha_star * f, beta) > at_star);
        }
        double dp, da, db;
        darkfield::ggd_nll_grad_scalar(r, 0.0, alpha_star, beta, &dp, &da, &db);
        CHECK(da == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("analytic gradients match finite differences and reference values") {
    // independently computed partials at (t,p,alpha,beta) = (.3,.1,.2,1.7)
    double dp, da, db;
    darkfield::ggd_nll_grad_scalar(0.3, 0.1, 0.2, 1.7, &dp, &da, &db);
    CHECK(dp == doctest::Approx(-8.499999999968125).epsilon(1e-8));
    CHECK(da == doctest::Approx(-3.5000000001806217).epsilon(1e-8));
    CHECK(db == doctest::Approx(-0.04010355103556407).epsilon(1e-6));

    const double eps = 1e-6;
    uint64_t lcg = 77;
    for (int trial = 0; trial < 30; ++trial) {
        const double t = testsup::lcg_next(lcg);
        const double p = testsup::lcg_next(lcg);
        const double alpha = 0.05 + 0.5 * testsup::lcg_next(lcg);
        const double beta = 0.5 + 3.0 * testsup::lcg_next(lcg);
        darkfield::ggd_nll_grad_scalar(t, p, alpha, beta, &dp, &da, &db);
        const auto f = [&](double pp, double aa, double bb) {
            return darkfield::ggd_nll_scalar(t, pp, aa, bb);
        };
        CHECK(dp == doctest::Approx((f(p + eps, alpha, beta) - f(p - eps, alpha, beta)) / (2 * eps))
                        .epsilon(1e-4));
        CHECK(da == doctest::Approx((f(p, alpha + eps, beta) - f(p, alpha - eps, beta)) / (2 * eps))
                        .epsilon(1e-4));
        CHECK(db == doctest::Approx((f(p, alpha, beta + eps) - f(p, alpha, beta - eps)) / (2 * eps))
                        .epsilon(1e-4));
    }
}

TEST_CASE("map-form gradients agree with the scalar partials") {
    const Image2D target = testsup::lcg_image(101, 5, 4);
    const Image2D pred = testsup::lcg_image(102, 5, 4);
    GgdParams params{testsup::lcg_image(103, 5, 4), testsup::lcg_image(104, 5, 4)};
    for (auto& v : params.alpha.data) v = 0.05 + 0.4 * v;
    for (auto& v : params.beta.data) v = 0.6 + 3.0 * v;
    const auto g = darkfield::ggd_nll_grad(target, pred, params);
    for (size_t i = 0; i < target.size(); ++i) {
        double dp, da, db;
        darkfield::ggd_nll_grad_scalar(target.data[i], pred.data[i], params.alpha.data[i],
                                       params.beta.data[i], &dp, &da, &db);
        CHECK(g.d_pred.data[i] == doctest::Approx(dp).epsilon(1e-12));
        CHECK(g.d_alpha.data[i] == doctest::Approx(da).epsilon(1e-12));
        CHECK(g.d_beta.data[i] == doctest::Approx(db).epsilon(1e-12));
    }
}

TEST_CASE("parameter validation rejects out-of-box values") {
    GgdParams ok = flat_params(3, 3, 0.1, 2.0);
    CHECK_NOTHROW(darkfield::validate_params(ok));
    GgdParams bad_alpha = flat_params(3, 3, 0.0, 2.0);
    CHECK_THROWS_AS(darkfield::validate_params(bad_alpha), std::invalid_argument);
    GgdParams bad_beta = flat_params(3, 3, 0.1, darkfield::kBetaMax + 0.5);
    CHECK_THROWS_AS(darkfield::validate_params(bad_beta), std::invalid_argument);
    GgdParams low_beta = flat_params(3, 3, 0.1, darkfield::kBetaMin / 2);
    CHECK_THROWS_AS(darkfield::validate_params(low_beta), std::invalid_argument);
}

TEST_CASE("sampled noise is deterministic with zero mean and the stated sigma") {
    for (double beta : {1.0, 2.0, 4.0}) {
        const double alpha = 0.8;
        const GgdParams params = flat_params(128, 128, alpha, beta);
        const Image2D noise = darkfield::ggd_sample(128, 128, params, 42);
        const Image2D again = darkfield::ggd_sample(128, 128, params, 42);
        for (size_t i = 0; i < noise.size(); ++i) CHECK(noise.data[i] == again.data[i]);

        double mean = 0.0;
        for (double v : noise.data) mean += v;
        mean /= noise.size();
        double var = 0.0;
        for (double v : noise.data) var += (v - mean) * (v - mean);
        var /= noise.size();
        const double sigma = darkfield::effective_sigma(alpha, beta);
        // 16384 draws: the sample std sits within ~2% of the target
        CHECK(std::abs(mean) < 0.03 * sigma + 0.02);
        CHECK(std::sqrt(var) == doctest::Approx(sigma).epsilon(0.02));

        const Image2D other = darkfield::ggd_sample(128, 128, params, 43);
        size_t diff = 0;
        for (size_t i = 0; i < noise.size(); ++i) diff += noise.data[i] != other.data[i];
        CHECK(diff > noise.size() / 2);
    }
}
