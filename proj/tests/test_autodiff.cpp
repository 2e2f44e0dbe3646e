#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "racam/gradcheck.hpp"
#include "racam/model.hpp"
#include "racam/ops.hpp"
#include "racam/tape.hpp"
#include "test_helpers.hpp"

using namespace racam;
using namespace racam::test;

namespace {

// R-weighted scalar head for op-level gradient checks.
float dot(const Tensor& r, const Tensor& x) {
    double s = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) s += double(r[i]) * double(x[i]);
    return float(s);
}

// Keeps every element at least `margin` away from the nearest kink so
// central differences stay on one branch.
Tensor away_from_kinks(std::vector<int> shape, SplitMix64& rng, float margin) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        float v;
        do {
            v = rng.uniform(-1.0f, 1.0f);
        } while (std::fabs(v) < margin);
        t[i] = v;
    }
    return t;
}

// Pool inputs with well-separated values, so h-perturbations cannot flip
// an argmax.
Tensor separated_values(std::vector<int> shape, SplitMix64& rng) {
    Tensor t(std::move(shape));
    std::vector<int> order(std::size_t(t.numel()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[std::size_t(rng.uniform_int(0, int(i)))]);
    }
    for (std::int64_t i = 0; i < t.numel(); ++i) t[order[std::size_t(i)]] = 0.1f * float(i) + 0.05f;
    return t;
}

constexpr float kFdTol = 1e-3f;

float fd_step(const Tensor&) { return 1e-2f; }  // inputs here are O(1)

}  // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("finite differences: analytic cases") {
    const Tensor x = Tensor::from_data({4}, {1.0f, -2.0f, 0.5f, 3.0f});
    const auto sum_f = [](const Tensor& t) {
        double s = 0.0;
        for (std::int64_t i = 0; i < t.numel(); ++i) s += double(t[i]);
        return float(s);
    };
    for (float h : {1e-1f, 1e-2f, 1e-3f}) {
        const Tensor g = finite_diff_gradient(sum_f, x, h);
        for (std::int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == doctest::Approx(1.0).epsilon(1e-4));
    }

    // central differences are exact for quadratics; a power-of-two step
    // keeps the float32 evaluations exact as well
    const Tensor x3 = Tensor::from_data({1}, {3.0f});
    const auto square = [](const Tensor& t) { return t[0] * t[0]; };
    CHECK(finite_diff_gradient(square, x3, 0.25f)[0] == 6.0f);
    CHECK(finite_diff_gradient(square, x3, 1e-3f)[0] == doctest::Approx(6.0).epsilon(1e-3));

    CHECK_THROWS_AS(finite_diff_gradient(sum_f, x, 0.0f), std::invalid_argument);
}

TEST_CASE("conv2d backward matches finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SplitMix64 rng(100 + seed);
        const Tensor x = random_tensor({2, 5, 6}, rng);
        const Tensor w = random_tensor({3, 2, 3, 3}, rng);
        const Tensor b = random_tensor({3}, rng);
        const Tensor r = random_tensor({3, 5, 6}, rng);

        const Conv2dGrads g = conv2d_backward(r, x, w, 1, 1);
        const auto f_x = [&](const Tensor& t) { return dot(r, conv2d(t, w, b, 1, 1)); };
        const auto f_w = [&](const Tensor& t) { return dot(r, conv2d(x, t, b, 1, 1)); };
        const auto f_b = [&](const Tensor& t) { return dot(r, conv2d(x, w, t, 1, 1)); };
        CHECK(max_rel_err(g.input, finite_diff_gradient(f_x, x, fd_step(x))) < kFdTol);
        CHECK(max_rel_err(g.weight, finite_diff_gradient(f_w, w, fd_step(w))) < kFdTol);
        CHECK(max_rel_err(g.bias, finite_diff_gradient(f_b, b, fd_step(b))) < kFdTol);
    }
}

TEST_CASE("strided conv2d backward matches finite differences") {
    SplitMix64 rng(321);
    const Tensor x = random_tensor({2, 6, 6}, rng);
    const Tensor w = random_tensor({2, 2, 2, 2}, rng);
    const Tensor b = random_tensor({2}, rng);
    const Tensor r = random_tensor({2, 3, 3}, rng);
    const Conv2dGrads g = conv2d_backward(r, x, w, 2, 0);
    CHECK(max_rel_err(g.input, finite_diff_gradient(
                                   [&](const Tensor& t) { return dot(r, conv2d(t, w, b, 2, 0)); }, x,
                                   1e-2f)) < kFdTol);
    CHECK(max_rel_err(g.weight, finite_diff_gradient(
                                    [&](const Tensor& t) { return dot(r, conv2d(x, t, b, 2, 0)); }, w,
                                    1e-2f)) < kFdTol);
}

TEST_CASE("maxpool / gap / linear / leaky_relu backward match finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SplitMix64 rng(200 + seed);

        const Tensor xp = separated_values({2, 4, 6}, rng);
        const Tensor rp = random_tensor({2, 2, 3}, rng);
        const MaxPoolResult mp = maxpool2d(xp, 2, 2);
        CHECK(max_rel_err(maxpool2d_backward(rp, xp, mp.argmax),
                          finite_diff_gradient(
                              [&](const Tensor& t) { return dot(rp, maxpool2d(t, 2, 2).output); }, xp,
                              1e-3f)) < kFdTol);

        const Tensor xg = random_tensor({3, 4, 4}, rng);
        const Tensor rg = random_tensor({3}, rng);
        CHECK(max_rel_err(global_avg_pool_backward(rg, xg),
                          finite_diff_gradient(
                              [&](const Tensor& t) { return dot(rg, global_avg_pool(t)); }, xg,
                              1e-2f)) < kFdTol);

        const Tensor xl = random_tensor({6}, rng);
        const Tensor wl = random_tensor({4, 6}, rng);
        const Tensor rl = random_tensor({4}, rng);
        const LinearGrads lg = linear_backward(rl, xl, wl);
        CHECK(max_rel_err(lg.input, finite_diff_gradient(
                                        [&](const Tensor& t) { return dot(rl, linear(t, wl, Tensor({4}))); },
                                        xl, 1e-2f)) < kFdTol);
        CHECK(max_rel_err(lg.weight, finite_diff_gradient(
                                         [&](const Tensor& t) { return dot(rl, linear(xl, t, Tensor({4}))); },
                                         wl, 1e-2f)) < kFdTol);

        const Tensor xa = away_from_kinks({24}, rng, 0.05f);
        const Tensor ra = random_tensor({24}, rng);
        CHECK(max_rel_err(
                  activation_backward(ra, xa, PropagationMode::standard(), 0.01f),
                  finite_diff_gradient(
                      [&](const Tensor& t) { return dot(ra, leaky_relu(t, 0.01f)); }, xa, 1e-2f)) <
              kFdTol);

        const Tensor logits = random_tensor({5}, rng, -2.0f, 2.0f);
        CHECK(max_rel_err(softmax_cross_entropy_backward(logits, 2),
                          finite_diff_gradient(
                              [&](const Tensor& t) { return softmax_cross_entropy(t, 2); }, logits,
                              1e-3f)) < kFdTol);

        const Tensor xr = random_tensor({2, 3, 5}, rng);
        const Tensor rr = random_tensor({2, 7, 4}, rng);
        CHECK(max_rel_err(bilinear_resize_backward(rr, 3, 5),
                          finite_diff_gradient(
                              [&](const Tensor& t) { return dot(rr, bilinear_resize(t, 7, 4)); }, xr,
                              1e-2f)) < kFdTol);
    }
}

TEST_CASE("backward through a single linear layer returns the weight row") {
    SplitMix64 rng(11);
    const Tensor x = random_tensor({5}, rng);
    const Tensor w = random_tensor({2, 5}, rng);
    Tape tape;
    const int xi = tape.add_input(x);
    const int wi = tape.add_param(w);
    const int bi = tape.add_param(Tensor({2}));
    const int y = tape.add_linear(xi, wi, bi);
    tape.set_output(y);

    Tensor seed({2});
    seed[0] = 1.0f;
    const std::vector<Tensor> grads = backward_nodes(tape, y, seed, PropagationMode::standard());
    for (int j = 0; j < 5; ++j) CHECK(grads[std::size_t(xi)][j] == w[j]);
}

TEST_CASE("every parameter gradient of a composite stack matches finite differences") {
    for (std::uint64_t seed : {42ULL, 43ULL}) {
        ModelState m = smooth_composite(seed);
        SplitMix64 rng(900 + seed);
        const Tensor img = random_tensor({1, 8, 16}, rng, 0.0f, 1.0f);
        enforce_kink_margins(m, img, 0.02f);
        const int label = 1;
        const float h = 1e-3f;

        ForwardResult fr = forward_with_loss(m, img, label);
        const std::vector<Tensor> grads = backward_loss(fr.tape);

        for (std::size_t p = 0; p < m.params.size(); ++p) {
            const Tensor& analytic = grads[std::size_t(fr.param_node[p])];
            REQUIRE(!analytic.empty());
            const Tensor numeric = finite_diff_gradient(
                [&](const Tensor& t) {
                    ModelState probe = m;
                    probe.params[p] = t;
                    return softmax_cross_entropy(forward_logits(probe, img), label);
                },
                m.params[p], h);
            CHECK(max_rel_err(analytic, numeric) < kFdTol);
        }

        // input gradient as the cross-oracle case
        const Tensor in_numeric = finite_diff_gradient(
            [&](const Tensor& t) { return softmax_cross_entropy(forward_logits(m, t), label); }, img,
            h);
        CHECK(max_rel_err(grads[std::size_t(fr.input_node)], in_numeric) < kFdTol);
    }
}

TEST_CASE("fgbp with delta=0 propagates bitwise like guided backprop") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ModelState m = small_stack(seed);
        SplitMix64 rng(500 + seed);
        const Tensor img = random_tensor({1, 8, 8}, rng, 0.0f, 1.0f);
        ForwardResult fr = forward(m, img);

        FgbpConfig cfg;
        cfg.delta = 0.0;
        const auto guided = backward(fr.tape, 1, PropagationMode::guided());
        const auto filtered = backward(fr.tape, 1, PropagationMode::filtered(cfg));
        REQUIRE(guided.size() == filtered.size());
        for (const auto& [layer, g] : guided) {
            CHECK(bitwise_equal(g, filtered.at(layer)));
        }
    }
}

TEST_CASE("replaying a tape reproduces saved activations bitwise") {
    ModelState m = small_stack(7);
    SplitMix64 rng(77);
    const Tensor img = random_tensor({1, 8, 16}, rng, 0.0f, 1.0f);
    ForwardResult fr = forward_with_loss(m, img, 0);
    const std::vector<Tensor> replayed = fr.tape.replay_values();
    for (int id = 0; id < fr.tape.size(); ++id) {
        CHECK(bitwise_equal(replayed[std::size_t(id)], fr.tape.node(id).value));
    }
}

TEST_CASE("backward rejects invalid requests") {
    ModelState m = small_stack(1);
    const Tensor img = Tensor::full({1, 8, 8}, 0.5f);
    ForwardResult fr = forward(m, img);
    CHECK_THROWS_AS(backward(fr.tape, 2, PropagationMode::standard()), std::invalid_argument);
    CHECK_THROWS_AS(backward(fr.tape, -1, PropagationMode::standard()), std::invalid_argument);

    ForwardResult with_loss = forward_with_loss(m, img, 0);
    CHECK_THROWS_AS(backward(with_loss.tape, 0, PropagationMode::standard()), std::invalid_argument);

    // unknown layer id
    const auto grads = backward(fr.tape, 1, PropagationMode::standard());
    CHECK(grads.find(999) == grads.end());
    CHECK_THROWS_AS(fgbp_filtered_grads(fr, 1, {999}, FgbpConfig{}), std::invalid_argument);
}

TEST_SUITE_END();
