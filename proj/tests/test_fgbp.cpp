#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <limits>

#include "racam/fgbp.hpp"
#include "racam/model.hpp"
#include "racam/tape.hpp"
#include "test_helpers.hpp"

using namespace racam;
using namespace racam::test;

TEST_SUITE_BEGIN("fgbp-rules");

TEST_CASE("percentile_positive follows the nearest-rank rule") {
    const Tensor v = Tensor::from_data({6}, {4.0f, -1.0f, 2.0f, 0.0f, 1.0f, 3.0f});
    // positives {1,2,3,4}: rank ceil(0.5*4) = 2 -> value 2
    CHECK(percentile_positive(v, 50.0) == 2.0f);
    CHECK(percentile_positive(v, 100.0) == 4.0f);
    CHECK(percentile_positive(v, 25.0) == 1.0f);
    CHECK(percentile_positive(v, 26.0) == 2.0f);
    CHECK(percentile_positive(v, 0.0) == 0.0f);

    const Tensor none = Tensor::from_data({3}, {-1.0f, 0.0f, -5.0f});
    CHECK(std::isinf(percentile_positive(none, 50.0)));
    CHECK(std::isinf(percentile_positive(none, 0.0)));

    CHECK_THROWS_AS(percentile_positive(v, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(percentile_positive(v, 100.5), std::invalid_argument);
}

TEST_CASE("percentile_positive stays within (0, max] for positive delta") {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor v = random_tensor({rng.uniform_int(1, 64)}, rng, -1.0f, 1.0f);
        const double delta = rng.next_double() * 99.9 + 0.1;
        const float thr = percentile_positive(v, delta);
        if (std::isinf(thr)) {
            for (std::int64_t i = 0; i < v.numel(); ++i) CHECK(v[i] <= 0.0f);
        } else {
            CHECK(thr > 0.0f);
            CHECK(thr <= v.max());
        }
    }
}

TEST_CASE("activation_backward applies the three rules") {
    const Tensor grad = Tensor::from_data({4}, {-1.0f, 0.5f, 2.0f, 3.0f});
    const Tensor act_in = Tensor::full({4}, 1.0f);

    FgbpConfig cfg;
    cfg.delta = 50.0;
    cfg.scope = FgbpScope::PerLayer;
    // positives {0.5,2,3}: rank ceil(1.5)=2 -> threshold 2
    const Tensor out = activation_backward(grad, act_in, PropagationMode::filtered(cfg), 0.0f);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 0.0f);
    CHECK(out[2] == 2.0f);
    CHECK(out[3] == 3.0f);

    cfg.delta = 0.0;
    const Tensor guided = activation_backward(grad, act_in, PropagationMode::guided(), 0.0f);
    CHECK(bitwise_equal(activation_backward(grad, act_in, PropagationMode::filtered(cfg), 0.0f),
                        guided));
    CHECK(guided[0] == 0.0f);
    CHECK(guided[1] == 0.5f);
    CHECK(guided[2] == 2.0f);
    CHECK(guided[3] == 3.0f);

    // closed activation gate kills the gradient under every mode
    const Tensor neg_in = Tensor::from_data({4}, {-1.0f, 0.0f, -0.5f, -2.0f});
    for (const PropagationMode& mode :
         {PropagationMode::standard(), PropagationMode::guided(), PropagationMode::filtered({})}) {
        const Tensor z = activation_backward(grad, neg_in, mode, 0.0f);
        for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0f);
    }

    // standard mode keeps the leak path
    const Tensor leak = activation_backward(grad, neg_in, PropagationMode::standard(), 0.1f);
    CHECK(leak[0] == doctest::Approx(-0.1f));

    CHECK_THROWS_AS(activation_backward(grad, Tensor({3}), PropagationMode::standard(), 0.0f),
                    std::invalid_argument);
}

TEST_CASE("per-channel scope thresholds each channel slice on its own") {
    // channel 0 positives {1,2}, channel 1 positives {10,20}
    const Tensor grad = Tensor::from_data({2, 1, 2}, {1.0f, 2.0f, 10.0f, 20.0f});
    const Tensor act_in = Tensor::full({2, 1, 2}, 1.0f);
    FgbpConfig cfg;
    cfg.delta = 100.0;
    cfg.scope = FgbpScope::PerChannel;
    const Tensor out = activation_backward(grad, act_in, PropagationMode::filtered(cfg), 0.0f);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 2.0f);
    CHECK(out[2] == 0.0f);
    CHECK(out[3] == 20.0f);

    cfg.scope = FgbpScope::PerLayer;
    const Tensor flat = activation_backward(grad, act_in, PropagationMode::filtered(cfg), 0.0f);
    CHECK(flat[1] == 0.0f);  // 2 < global max 20
    CHECK(flat[3] == 20.0f);
}

TEST_CASE("filter_gradient_field keeps values at or above the threshold") {
    const Tensor g = Tensor::from_data({1, 2, 3}, {-0.5f, 0.1f, 0.4f, 0.2f, 0.9f, 0.0f});
    FgbpConfig cfg;
    cfg.delta = 50.0;
    const Tensor out = filter_gradient_field(g, cfg);
    // positives {0.1,0.2,0.4,0.9}: rank ceil(2)=2 -> threshold 0.2
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 0.0f);
    CHECK(out[2] == 0.4f);
    CHECK(out[3] == 0.2f);
    CHECK(out[4] == 0.9f);
    CHECK(out[5] == 0.0f);
}

TEST_CASE("filtered_gradient at delta=0 is the rectified guided gradient") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ModelState m = small_stack(seed);
        SplitMix64 rng(600 + seed);
        const Tensor img = random_tensor({1, 8, 16}, rng, 0.0f, 1.0f);

        FgbpConfig cfg;
        cfg.delta = 0.0;
        for (int layer : m.spec.stage_end_act) {
            const Tensor filt = filtered_gradient(m, img, 1, layer, cfg);
            ForwardResult fr = forward(m, img);
            const Tensor guided = backward(fr.tape, 1, PropagationMode::guided()).at(layer);
            CHECK(bitwise_equal(filt, relu(guided)));
        }
    }
}

TEST_CASE("delta=100 keeps only the channel maximum when values are distinct") {
    SplitMix64 rng(701);
    FgbpConfig cfg;
    cfg.delta = 100.0;
    for (int trial = 0; trial < 20; ++trial) {
        // all-distinct gradient values per construction
        Tensor g({3, 4, 5});
        std::vector<int> order(std::size_t(g.numel()));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[std::size_t(rng.uniform_int(0, int(i)))]);
        }
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            g[order[std::size_t(i)]] = 0.01f * float(i + 1) - 0.3f;
        }
        const Tensor filt = filter_gradient_field(g, cfg);
        const std::int64_t hw = 20;
        for (int c = 0; c < 3; ++c) {
            std::int64_t nonzero = 0;
            for (std::int64_t p = 0; p < hw; ++p) nonzero += filt[c * hw + p] != 0.0f;
            CHECK(nonzero <= 1);
        }
    }
}

TEST_CASE("filtered_gradient at delta=100 keeps exactly the tied channel maxima") {
    ModelState m = small_stack(2);
    SplitMix64 rng(702);
    const Tensor img = random_tensor({1, 8, 16}, rng, 0.0f, 1.0f);
    FgbpConfig cfg;
    cfg.delta = 100.0;
    const int last = m.spec.stage_end_act.back();
    const Tensor filt = filtered_gradient(m, img, 1, last, cfg);
    ForwardResult fr = forward(m, img);
    const Tensor arriving = backward(fr.tape, 1, PropagationMode::filtered(cfg)).at(last);
    const std::int64_t hw = std::int64_t(filt.dim(1)) * filt.dim(2);
    for (int c = 0; c < filt.dim(0); ++c) {
        float mx = 0.0f;
        for (std::int64_t p = 0; p < hw; ++p) mx = std::max(mx, arriving[c * hw + p]);
        for (std::int64_t p = 0; p < hw; ++p) {
            const float expect = (mx > 0.0f && arriving[c * hw + p] == mx) ? mx : 0.0f;
            CHECK(filt[c * hw + p] == expect);
        }
    }
}

TEST_CASE("nonzero count of filtered_gradient is non-increasing in delta") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        ModelState m = small_stack(seed);
        SplitMix64 rng(800 + seed);
        const Tensor img = random_tensor({1, 8, 16}, rng, 0.0f, 1.0f);
        const int layer = m.spec.stage_end_act[std::size_t(seed % 3)];

        std::int64_t prev = std::numeric_limits<std::int64_t>::max();
        for (double delta : {0.0, 25.0, 50.0, 75.0, 100.0}) {
            FgbpConfig cfg;
            cfg.delta = delta;
            const std::int64_t count = filtered_gradient(m, img, 1, layer, cfg).count_nonzero();
            CHECK(count <= prev);
            prev = count;
        }
    }
}

TEST_CASE("filtered_gradient values are non-negative and at or above the slice threshold") {
    ModelState m = small_stack(3);
    SplitMix64 rng(55);
    const Tensor img = random_tensor({1, 8, 16}, rng, 0.0f, 1.0f);
    const int layer = m.spec.stage_end_act[1];

    FgbpConfig cfg;
    cfg.delta = 60.0;
    ForwardResult fr = forward(m, img);
    const Tensor arriving = backward(fr.tape, 1, PropagationMode::filtered(cfg)).at(layer);
    const Tensor filt = filtered_gradient(m, img, 1, layer, cfg);

    const std::int64_t hw = std::int64_t(filt.dim(1)) * filt.dim(2);
    for (int c = 0; c < filt.dim(0); ++c) {
        const float thr = percentile_positive(arriving.data() + c * hw, hw, cfg.delta);
        for (std::int64_t p = 0; p < hw; ++p) {
            const float v = filt[c * hw + p];
            CHECK(v >= 0.0f);
            if (v != 0.0f) CHECK(v >= thr);
        }
    }
}

TEST_CASE("filtered_gradient rejects non-activation layers") {
    ModelState m = small_stack(0);
    const Tensor img = Tensor::full({1, 8, 8}, 0.3f);
    CHECK_THROWS_AS(filtered_gradient(m, img, 1, 0, FgbpConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(filtered_gradient(m, img, 1, 99, FgbpConfig{}), std::invalid_argument);
}

TEST_SUITE_END();
