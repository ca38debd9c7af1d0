#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "darkfield/nn.hpp"
#include "darkfield/rng.hpp"
#include "test_support.hpp"

using darkfield::Conv2d;
using darkfield::Tensor;

namespace {

Tensor lcg_tensor(uint64_t seed, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
    Tensor t(c, h, w);
    uint64_t x = seed;
    for (auto& v : t.v) v = lo + (hi - lo) * testsup::lcg_next(x);
    return t;
}

double sum_mul(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

// Scalar objective L = sum(w_out * f(x)) used by every finite-difference
// check below; w_out is a fixed random weighting.
double probe_loss(Conv2d& conv, const Tensor& x, const Tensor& w_out) {
    return sum_mul(conv.forward(x), w_out);
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces its input") {
    Conv2d conv(1, 1, 3, 1, 1, "id");
    std::fill(conv.weights().begin(), conv.weights().end(), 0.0);
    conv.weights()[4] = 1.0;  // center tap
    conv.bias()[0] = 0.0;
    const Tensor x = lcg_tensor(7, 1, 6, 5);
    const Tensor y = conv.forward(x);
    REQUIRE(y.same_shape(x));
    for (size_t i = 0; i < x.size(); ++i) CHECK(y.v[i] == doctest::Approx(x.v[i]).epsilon(1e-15));
}

TEST_CASE("conv2d matches a hand-computed 2x2 valid convolution") {
    Conv2d conv(1, 1, 2, 1, 0, "k2");
    conv.weights() = {1.0, 2.0, 3.0, 4.0};
    conv.bias()[0] = 0.5;
    Tensor x(1, 2, 3);
    x.v = {1, 2, 3, 4, 5, 6};
    const Tensor y = conv.forward(x);
    REQUIRE(y.h == 1);
    REQUIRE(y.w == 2);
    // window [1,2;4,5] -> 1+4+12+20 = 37; window [2,3;5,6] -> 2+6+15+24 = 47
    CHECK(y.v[0] == doctest::Approx(37.5).epsilon(1e-15));
    CHECK(y.v[1] == doctest::Approx(47.5).epsilon(1e-15));
}

TEST_CASE("conv2d stride-2 output extent follows the downsampling formula") {
    Conv2d conv(2, 3, 4, 2, 1, "down");
    conv.init_he(5);
    const Tensor x = lcg_tensor(8, 2, 16, 16);
    const Tensor y = conv.forward(x);
    CHECK(y.c == 3);
    CHECK(y.h == 8);
    CHECK(y.w == 8);
    CHECK(conv.out_extent(16) == 8);
    CHECK(conv.out_extent(15) == 7);
}

TEST_CASE("conv2d backward gradients match finite differences") {
    Conv2d conv(2, 3, 3, 1, 1, "fd");
    conv.init_he(11);
    Tensor x = lcg_tensor(13, 2, 5, 6);
    const Tensor w_out = lcg_tensor(14, 3, 5, 6);

    conv.zero_grad();
    conv.forward(x);
    const Tensor dx = conv.backward(w_out);
    auto params = conv.params();

    const double eps = 1e-6;
    uint64_t lcg = 17;
    // input gradient
    for (int trial = 0; trial < 12; ++trial) {
        const size_t i = static_cast<size_t>(testsup::lcg_next(lcg) * x.size());
        const double keep = x.v[i];
        x.v[i] = keep + eps;
        const double up = probe_loss(conv, x, w_out);
        x.v[i] = keep - eps;
        const double dn = probe_loss(conv, x, w_out);
        x.v[i] = keep;
        CHECK(dx.v[i] == doctest::Approx((up - dn) / (2 * eps)).epsilon(1e-5));
    }
    // weight and bias gradients
    for (auto& p : params) {
        for (int trial = 0; trial < 8; ++trial) {
            const size_t i = static_cast<size_t>(testsup::lcg_next(lcg) * p.w->size());
            const double keep = (*p.w)[i];
            (*p.w)[i] = keep + eps;
            const double up = probe_loss(conv, x, w_out);
            (*p.w)[i] = keep - eps;
            const double dn = probe_loss(conv, x, w_out);
            (*p.w)[i] = keep;
            CHECK((*p.g)[i] == doctest::Approx((up - dn) / (2 * eps)).epsilon(1e-5));
        }
    }
}

TEST_CASE("conv2d backward accumulates across calls and zero_grad resets") {
    Conv2d conv(1, 1, 3, 1, 1, "acc");
    conv.init_he(3);
    const Tensor x = lcg_tensor(4, 1, 4, 4);
    const Tensor g = lcg_tensor(5, 1, 4, 4);

    conv.zero_grad();
    conv.forward(x);
    conv.backward(g);
    const std::vector<double> once = *conv.params()[0].g;
    conv.forward(x);
    conv.backward(g);
    const std::vector<double> twice = *conv.params()[0].g;
    for (size_t i = 0; i < once.size(); ++i) {
        CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
    }
    conv.zero_grad();
    for (double v : *conv.params()[0].g) CHECK(v == 0.0);
}

TEST_CASE("conv2d with caching off refuses backward") {
    Conv2d conv(1, 1, 3, 1, 1, "nocache");
    conv.init_he(6);
    conv.set_cache_inputs(false);
    const Tensor x = lcg_tensor(6, 1, 4, 4);
    conv.forward(x);
    CHECK_THROWS_AS(conv.backward(x), std::logic_error);
    conv.set_cache_inputs(true);
    conv.forward(x);
    CHECK_NOTHROW(conv.backward(x));
}

TEST_CASE("he init is deterministic per (seed, name) and scales with fan-in") {
    Conv2d a(4, 4, 3, 1, 1, "probe");
    Conv2d b(4, 4, 3, 1, 1, "probe");
    a.init_he(42);
    b.init_he(42);
    CHECK(a.weights() == b.weights());
    b.init_he(43);
    CHECK(a.weights() != b.weights());
    // the layer name is folded into the stream, so sibling layers differ
    Conv2d c(4, 4, 3, 1, 1, "other");
    c.init_he(42);
    CHECK(a.weights() != c.weights());

    // empirical std ~ sqrt(2 / fan_in), fan_in = 4*3*3 = 36
    double var = 0.0;
    for (double w : a.weights()) var += w * w;
    var /= a.weights().size();
    CHECK(std::sqrt(var) == doctest::Approx(std::sqrt(2.0 / 36.0)).epsilon(0.25));
    for (double v : a.bias()) CHECK(v == 0.0);
}

TEST_CASE("leaky relu forward and backward") {
    darkfield::LeakyReLU act(0.2);
    Tensor x(1, 1, 4);
    x.v = {-2.0, -0.5, 0.0, 3.0};
    const Tensor y = act.forward(x);
    CHECK(y.v[0] == doctest::Approx(-0.4));
    CHECK(y.v[1] == doctest::Approx(-0.1));
    CHECK(y.v[2] == 0.0);
    CHECK(y.v[3] == 3.0);
    Tensor g(1, 1, 4, 1.0);
    const Tensor dx = act.backward(g);
    CHECK(dx.v[0] == doctest::Approx(0.2));
    CHECK(dx.v[3] == doctest::Approx(1.0));
}

TEST_CASE("dropout is seed-deterministic, inverted, and identity at rate 0") {
    darkfield::Dropout drop(0.5);
    drop.set_seed(123);
    const Tensor x = lcg_tensor(9, 2, 8, 8, 0.5, 1.5);
    const Tensor y1 = drop.forward(x);
    drop.set_seed(123);
    const Tensor y2 = drop.forward(x);
    CHECK(y1.v == y2.v);

    // inverted scaling: surviving entries are x / (1 - rate)
    size_t kept = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (y1.v[i] != 0.0) {
            CHECK(y1.v[i] == doctest::Approx(x.v[i] / 0.5).epsilon(1e-12));
            ++kept;
        }
    }
    CHECK(kept > x.size() / 4);
    CHECK(kept < 3 * x.size() / 4);

    drop.set_seed(124);
    const Tensor y3 = drop.forward(x);
    CHECK(y1.v != y3.v);

    darkfield::Dropout off(0.0);
    off.set_seed(5);
    const Tensor same = off.forward(x);
    CHECK(same.v == x.v);
}

TEST_CASE("dropout backward masks the gradient with the forward pattern") {
    darkfield::Dropout drop(0.4);
    drop.set_seed(77);
    const Tensor x = lcg_tensor(10, 1, 6, 6, 1.0, 2.0);
    const Tensor y = drop.forward(x);
    Tensor g(1, 6, 6, 1.0);
    const Tensor dx = drop.backward(g);
    for (size_t i = 0; i < x.size(); ++i) {
        if (y.v[i] == 0.0) {
            CHECK(dx.v[i] == 0.0);
        } else {
            CHECK(dx.v[i] == doctest::Approx(1.0 / 0.6).epsilon(1e-12));
        }
    }
}

TEST_CASE("upsample2x repeats pixels and its backward sums 2x2 blocks") {
    Tensor x(1, 2, 2);
    x.v = {1, 2, 3, 4};
    const Tensor y = darkfield::upsample2x(x);
    REQUIRE(y.h == 4);
    REQUIRE(y.w == 4);
    CHECK(y.at(0, 0, 0) == 1);
    CHECK(y.at(0, 0, 1) == 1);
    CHECK(y.at(0, 1, 1) == 1);
    CHECK(y.at(0, 2, 3) == 4);

    Tensor g(1, 4, 4, 0.25);
    const Tensor dx = darkfield::upsample2x_backward(g);
    REQUIRE(dx.h == 2);
    for (double v : dx.v) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("concat_channels and split_channels are inverse operations") {
    const Tensor a = lcg_tensor(20, 2, 3, 3);
    const Tensor b = lcg_tensor(21, 3, 3, 3);
    const Tensor cat = darkfield::concat_channels(a, b);
    REQUIRE(cat.c == 5);
    Tensor ga, gb;
    darkfield::split_channels(cat, 2, &ga, &gb);
    CHECK(ga.v == a.v);
    CHECK(gb.v == b.v);
}

TEST_CASE("adam takes the reference first and second steps") {
    // with constant gradient g, bias correction makes each early step
    // -lr * g / (|g| + eps)
    std::vector<double> w{0.0};
    std::vector<double> g{0.37};
    darkfield::Adam opt({{"w", &w, &g}}, 0.5, 0.999);
    opt.step(1e-3);
    CHECK(w[0] == doctest::Approx(-0.0009999999729729738).epsilon(1e-12));
    opt.step(1e-3);
    CHECK(w[0] == doctest::Approx(-0.00199999994594594).epsilon(1e-12));

    // direction flips with the gradient sign
    std::vector<double> w2{1.0};
    std::vector<double> g2{-2.0};
    darkfield::Adam opt2({{"w2", &w2, &g2}}, 0.5, 0.999);
    opt2.step(0.01);
    CHECK(w2[0] > 1.0);
    CHECK(opt2.state_elements() == 2);  // m and v for one scalar
}
