#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "focalforge/autograd.hpp"
#include "focalforge/nn.hpp"
#include "focalforge/rng.hpp"

using namespace focalforge;
using ag::Var;

namespace {

// Central finite differences of a scalar graph w.r.t. one leaf, compared
// against the analytic gradient from backward().
void check_gradients(const std::vector<Var>& leaves, const std::function<Var()>& build,
                     double tol = 1e-6, double h = 1e-6) {
    for (const Var& leaf : leaves) {
        leaf->ensure_grad();
        leaf->grad.fill(0.0);
    }
    Var loss = build();
    ag::backward(loss);
    for (const Var& leaf : leaves) {
        for (std::int64_t i = 0; i < leaf->value.size(); ++i) {
            const double analytic = leaf->grad[i];
            const double orig = leaf->value[i];
            leaf->value[i] = orig + h;
            const double up = ag::scalar(build());
            leaf->value[i] = orig - h;
            const double dn = ag::scalar(build());
            leaf->value[i] = orig;
            const double numeric = (up - dn) / (2 * h);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
            CHECK(std::abs(analytic - numeric) / denom < tol);
        }
    }
}

Var random_param(Rng& rng, std::vector<int> shape, double std = 1.0) {
    return ag::param(rng.normal_tensor(std::move(shape), std));
}

}  // namespace

TEST_CASE("elementwise ops gradients") {
    Rng rng(1);
    Var a = random_param(rng, {3, 4});
    Var b = random_param(rng, {3, 4});
    check_gradients({a, b}, [&] {
        using namespace ag;
        Var x = add(mul(a, b), scale(sub(a, b), 0.7));
        x = add_scalar(x, 0.3);
        return mean_all(mul(x, x));
    });
}

TEST_CASE("activations gradients") {
    Rng rng(2);
    Var a = random_param(rng, {2, 5});
    check_gradients({a}, [&] {
        using namespace ag;
        return mean_all(add(silu(a), add(sigmoid(a), exp_(scale(a, 0.3)))));
    });
    Var b = random_param(rng, {2, 5});
    check_gradients({b}, [&] {
        using namespace ag;
        return sum_all(relu(b));
    }, 1e-5);
}

TEST_CASE("matmul/linear/bmm gradients") {
    Rng rng(3);
    Var a = random_param(rng, {3, 4});
    Var b = random_param(rng, {4, 2});
    check_gradients({a, b}, [&] { return ag::mean_all(ag::matmul(a, b)); });

    Var x = random_param(rng, {5, 3});
    Var w = random_param(rng, {2, 3});
    Var bias = random_param(rng, {2});
    check_gradients({x, w, bias}, [&] {
        return ag::mean_all(ag::mul(ag::linear(x, w, bias), ag::linear(x, w, bias)));
    });

    Var p = random_param(rng, {2, 3, 4});
    Var q = random_param(rng, {2, 4, 3});
    check_gradients({p, q}, [&] { return ag::mean_all(ag::bmm(p, q)); });
    check_gradients({p, q}, [&] { return ag::mean_all(ag::bmm(p, q, /*sorted_inner=*/true)); });
}

TEST_CASE("bmm sorted_inner matches plain bmm values") {
    Rng rng(4);
    Var p = random_param(rng, {3, 5, 7});
    Var q = random_param(rng, {3, 7, 2});
    Tensor plain = ag::bmm(p, q)->value;
    Tensor sorted = ag::bmm(p, q, true)->value;
    for (std::int64_t i = 0; i < plain.size(); ++i)
        CHECK(plain[i] == doctest::Approx(sorted[i]).epsilon(1e-12));
}

TEST_CASE("conv2d gradients") {
    Rng rng(5);
    Var x = random_param(rng, {2, 3, 6, 6});
    Var w = random_param(rng, {4, 3, 3, 3}, 0.5);
    Var b = random_param(rng, {4});
    check_gradients({x, w, b}, [&] {
        Var y = ag::conv2d(x, w, b, 1, 1);
        return ag::mean_all(ag::mul(y, y));
    }, 1e-5);
    check_gradients({x, w, b}, [&] {
        Var y = ag::conv2d(x, w, b, 2, 1);
        return ag::mean_all(ag::mul(y, y));
    }, 1e-5);
}

TEST_CASE("pool/upsample/pad/crop gradients") {
    Rng rng(6);
    Var x = random_param(rng, {2, 3, 4, 4});
    check_gradients({x}, [&] {
        Var y = ag::avg_pool2d(x, 2);
        return ag::mean_all(ag::mul(y, y));
    });
    check_gradients({x}, [&] {
        Var y = ag::bilinear_upsample(x, 7, 9);
        return ag::mean_all(ag::mul(y, y));
    });
    check_gradients({x}, [&] {
        Var y = ag::crop_hw(ag::pad_hw(x, 2, 1), 3, 4);
        return ag::mean_all(ag::mul(y, y));
    });
}

TEST_CASE("norm gradients") {
    Rng rng(7);
    Var x = random_param(rng, {4, 6});
    Var g = random_param(rng, {6}, 0.2);
    Var be = random_param(rng, {6}, 0.2);
    check_gradients({x, g, be}, [&] {
        Var y = ag::layer_norm_lastdim(x, g, be);
        return ag::mean_all(ag::mul(y, y));
    }, 1e-5);

    Var xn = random_param(rng, {2, 4, 3, 3});
    Var gg = random_param(rng, {4}, 0.2);
    Var gb = random_param(rng, {4}, 0.2);
    check_gradients({xn, gg, gb}, [&] {
        Var y = ag::group_norm(xn, 2, gg, gb);
        return ag::mean_all(ag::mul(y, y));
    }, 1e-5);
}

TEST_CASE("softmax/CE/losses gradients") {
    Rng rng(8);
    Var x = random_param(rng, {5, 4});
    check_gradients({x}, [&] {
        Var y = ag::softmax_lastdim(x);
        return ag::mean_all(ag::mul(y, y));
    });
    std::vector<int> targets{0, 2, 1, 3, 2};
    check_gradients({x}, [&] { return ag::cross_entropy_rows(x, targets); });

    Var a = random_param(rng, {3, 3});
    Var b = random_param(rng, {3, 3});
    check_gradients({a, b}, [&] { return ag::mse_loss(a, b); });
    check_gradients({a, b}, [&] { return ag::l1_loss(a, b); }, 1e-4);
}

TEST_CASE("softmax rows sum to one and are order-invariant") {
    Rng rng(9);
    Var x = random_param(rng, {7, 5});
    Tensor y = ag::softmax_lastdim(x)->value;
    for (int r = 0; r < 7; ++r) {
        double s = 0;
        for (int c = 0; c < 5; ++c) s += y.at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }

    // Permuting the last axis must permute the output bitwise.
    Tensor xp(x->value.shape());
    const int perm[5] = {3, 0, 4, 1, 2};
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c) xp.at(r, c) = x->value.at(r, perm[c]);
    Tensor yp = ag::softmax_lastdim(ag::constant(xp))->value;
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c) CHECK(yp.at(r, c) == y.at(r, perm[c]));
}

TEST_CASE("shape ops round-trip gradients") {
    Rng rng(10);
    Var x = random_param(rng, {2, 3, 4, 5});
    check_gradients({x}, [&] {
        Var y = ag::permute(x, {2, 0, 3, 1});
        y = ag::reshape(y, {4, 2, 5, 3});
        return ag::mean_all(ag::mul(y, y));
    });

    Var a = random_param(rng, {2, 2, 3, 3});
    Var b = random_param(rng, {2, 3, 3, 3});
    check_gradients({a, b}, [&] {
        Var y = ag::concat_channels(a, b);
        Var s = ag::slice_channels(y, 1, 4);
        return ag::mean_all(ag::mul(s, s));
    });
}

TEST_CASE("bias helpers gradients") {
    Rng rng(11);
    Var x = random_param(rng, {2, 3, 4, 4});
    Var b = random_param(rng, {3});
    Var rb = random_param(rng, {2, 3});
    check_gradients({x, b}, [&] {
        Var y = ag::add_bias_nchw(x, b);
        return ag::mean_all(ag::mul(y, y));
    });
    check_gradients({x, rb}, [&] {
        Var y = ag::add_rowbias_nchw(x, rb);
        return ag::mean_all(ag::mul(y, y));
    });
}

TEST_CASE("weighted_layer_sum gradients and order invariance") {
    Rng rng(12);
    const int L = 4, C = 3, H = 2, W = 3, P = H * W;
    Var probs = ag::param(rng.uniform_tensor({P, L}, 0.01, 1.0));
    Tensor layers = rng.uniform_tensor({L, C, H, W}, 0.0, 1.0);
    Var lay = ag::constant(layers);
    check_gradients({probs}, [&] { return ag::mean_all(ag::weighted_layer_sum(probs, lay)); });

    // Permute the L axis of both operands: result must be bitwise identical.
    const int perm[4] = {2, 0, 3, 1};
    Tensor probs_p({P, L});
    Tensor layers_p({L, C, H, W});
    for (int p = 0; p < P; ++p)
        for (int l = 0; l < L; ++l) probs_p.at(p, l) = probs->value.at(p, perm[l]);
    for (int l = 0; l < L; ++l)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(C) * H * W; ++i)
            layers_p[static_cast<std::int64_t>(l) * C * H * W + i] =
                layers[static_cast<std::int64_t>(perm[l]) * C * H * W + i];
    Tensor out = ag::weighted_layer_sum(probs, lay)->value;
    Tensor out_p =
        ag::weighted_layer_sum(ag::constant(probs_p), ag::constant(layers_p))->value;
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == out_p[i]);
}

TEST_CASE("AdamW decreases a quadratic") {
    nn::ParamMap pm;
    Rng rng(13);
    Var w = pm.add("w", rng.normal_tensor({8}, 1.0), true);
    nn::AdamW opt(pm, 0.05);
    double first = 0;
    for (int step = 0; step < 200; ++step) {
        Var loss = ag::mean_all(ag::mul(w, w));
        if (step == 0) first = ag::scalar(loss);
        opt.zero_grad();
        ag::backward(loss);
        opt.step();
    }
    const double last = ag::scalar(ag::mean_all(ag::mul(w, w)));
    CHECK(last < first * 0.01);
}

TEST_CASE("gradient accumulation across graphs") {
    Rng rng(14);
    Var w = ag::param(rng.normal_tensor({4}, 1.0));
    ag::backward(ag::sum_all(w));
    ag::backward(ag::sum_all(ag::scale(w, 2.0)));
    for (int i = 0; i < 4; ++i) CHECK(w->grad[i] == doctest::Approx(3.0));
}
