#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "racam/postprocess.hpp"
#include "racam/tensor.hpp"
#include "test_helpers.hpp"

using namespace racam;
using namespace racam::test;

namespace {

// Exhaustive oracle: recompute both class populations from scratch for
// every candidate split and compare the between-class variances as exact
// rationals, so ties break precisely at the smallest t.
int otsu_oracle_t(const Tensor& map) {
    std::vector<int> bins;
    bins.reserve(std::size_t(map.numel()));
    for (std::int64_t i = 0; i < map.numel(); ++i) {
        bins.push_back(std::clamp(int(std::floor(255.0 * double(map[i]) + 0.5)), 0, 255));
    }
    int best_t = 0;
    __int128 best_num = 0;
    long long best_den = 0;
    bool have = false;
    for (int t = 0; t < 256; ++t) {
        long long n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (int b : bins) {
            if (b <= t) {
                ++n0;
                s0 += b;
            } else {
                ++n1;
                s1 += b;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        // variance ~ (mu0-mu1)^2 * w0 * w1 = (s0*n1 - s1*n0)^2 / (n0*n1*N^2)
        const __int128 diff = __int128(s0) * n1 - __int128(s1) * n0;
        const __int128 num = diff * diff;
        const long long den = n0 * n1;
        if (!have || num * best_den > best_num * den) {
            best_num = num;
            best_den = den;
            best_t = t;
            have = true;
        }
    }
    return best_t;
}

int threshold_to_t(float threshold) { return int(std::lround(threshold * 255.0f - 0.5f)); }

}  // namespace

TEST_SUITE_BEGIN("postprocess");

TEST_CASE("normalize_minmax conventions") {
    const Tensor c = normalize_minmax(Tensor::full({1, 2, 2}, 0.7f));
    for (std::int64_t i = 0; i < c.numel(); ++i) CHECK(c[i] == 0.0f);

    const Tensor already = Tensor::from_data({4}, {0.0f, 0.25f, 0.75f, 1.0f});
    CHECK(bitwise_equal(normalize_minmax(already), already));

    const Tensor out = normalize_minmax(Tensor::from_data({3}, {2.0f, 4.0f, 6.0f}));
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 0.5f);
    CHECK(out[2] == 1.0f);
}

TEST_CASE("otsu on a two-level map splits at the lower level") {
    std::vector<float> v(10, 0.0f);
    for (int i = 5; i < 10; ++i) v[std::size_t(i)] = 1.0f;
    const float thr = otsu_threshold(Tensor::from_data({10}, std::move(v)));
    // every t in [0,254] separates the levels; smallest wins
    CHECK(thr == doctest::Approx(0.5 / 255.0));
}

TEST_CASE("otsu degenerate constant map returns the smallest threshold") {
    CHECK(otsu_threshold(Tensor::full({4}, 0.33f)) == doctest::Approx(0.5 / 255.0));
    CHECK(otsu_threshold(Tensor({1, 3, 3})) == doctest::Approx(0.5 / 255.0));
    CHECK_THROWS_AS(otsu_threshold(Tensor()), std::invalid_argument);
    CHECK_THROWS_AS(otsu_threshold(Tensor::from_data({2}, {0.5f, 1.5f})), std::invalid_argument);
}

TEST_CASE("otsu equals the exhaustive 256-split oracle on 1000 random maps") {
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = rng.uniform_int(2, 300);
        Tensor map({n});
        const int kind = rng.uniform_int(0, 3);
        for (int i = 0; i < n; ++i) {
            switch (kind) {
                case 0:  // uniform
                    map[i] = rng.next_float();
                    break;
                case 1:  // bimodal
                    map[i] = rng.next_bool() ? rng.uniform(0.0f, 0.3f) : rng.uniform(0.6f, 1.0f);
                    break;
                case 2:  // quantized
                    map[i] = float(rng.uniform_int(0, 255)) / 255.0f;
                    break;
                default:  // heavy ties
                    map[i] = float(rng.uniform_int(0, 4)) / 4.0f;
                    break;
            }
        }
        const int got = threshold_to_t(otsu_threshold(map));
        const int want = otsu_oracle_t(map);
        REQUIRE_MESSAGE(got == want, "trial ", trial, " kind ", kind);
    }
}

TEST_CASE("to_mask marks exactly the bright level of a two-level map") {
    Tensor heat({1, 2, 4});
    for (int j = 0; j < 4; ++j) {
        heat.at(0, 0, j) = 0.1f;
        heat.at(0, 1, j) = 0.9f;
    }
    const BinaryMask mask = to_mask(heat);
    for (int j = 0; j < 4; ++j) {
        CHECK(mask.values.at(0, 0, j) == 0.0f);
        CHECK(mask.values.at(0, 1, j) == 1.0f);
    }

    // complement symmetry
    Tensor inv = heat;
    for (std::int64_t i = 0; i < inv.numel(); ++i) inv[i] = 1.0f - inv[i];
    const BinaryMask inv_mask = to_mask(inv);
    for (std::int64_t i = 0; i < inv.numel(); ++i) {
        CHECK(inv_mask.values[i] == 1.0f - mask.values[i]);
    }

    // same structure on 8-bit aligned levels, as the heatmap writer emits
    Tensor quant({1, 2, 4});
    for (int j = 0; j < 4; ++j) {
        quant.at(0, 0, j) = 26.0f / 255.0f;
        quant.at(0, 1, j) = 230.0f / 255.0f;
    }
    const BinaryMask qmask = to_mask(quant);
    for (int j = 0; j < 4; ++j) {
        CHECK(qmask.values.at(0, 0, j) == 0.0f);
        CHECK(qmask.values.at(0, 1, j) == 1.0f);
    }
}

TEST_CASE("to_mask of an all-zero heatmap is empty") {
    CHECK(to_mask(Tensor({1, 4, 4})).positive_count() == 0);
}

TEST_CASE("mask positives are exactly the values at or above the threshold") {
    SplitMix64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor map = random_tensor({1, 6, 9}, rng, 0.0f, 1.0f);
        const float thr = otsu_threshold(map);
        const BinaryMask mask = to_mask(map);
        for (std::int64_t i = 0; i < map.numel(); ++i) {
            CHECK(mask.values[i] == (map[i] >= thr ? 1.0f : 0.0f));
        }
    }
}

TEST_CASE("to_mask is invariant under exact affine rescaling plus renormalization") {
    SplitMix64 rng(78);
    Tensor map({1, 5, 8});
    for (std::int64_t i = 0; i < map.numel(); ++i) {
        map[i] = (float(rng.uniform_int(0, 255)) + 0.5f) / 256.0f;  // bin midpoints
    }
    const BinaryMask base = to_mask(normalize_minmax(map));
    for (float a : {2.0f, 0.25f}) {
        const BinaryMask rescaled = to_mask(normalize_minmax(scale(map, a)));
        CHECK(bitwise_equal(rescaled.values, base.values));
    }
    // non-power-of-two affine map on bin midpoints
    Tensor affine = map;
    for (std::int64_t i = 0; i < map.numel(); ++i) affine[i] = 0.7f * map[i] + 0.2f;
    CHECK(bitwise_equal(to_mask(normalize_minmax(affine)).values, base.values));
}

TEST_CASE("filter_min_area drops small 8-connected components") {
    BinaryMask m;
    m.values = Tensor({1, 6, 10});
    // diagonal stroke of 5 pixels
    for (int i = 0; i < 5; ++i) m.values.at(0, i, i) = 1.0f;
    // isolated 2-pixel blob
    m.values.at(0, 5, 8) = 1.0f;
    m.values.at(0, 5, 9) = 1.0f;

    const BinaryMask kept = filter_min_area(m, 4);
    CHECK(kept.positive_count() == 5);
    for (int i = 0; i < 5; ++i) CHECK(kept.values.at(0, i, i) == 1.0f);

    const BinaryMask all = filter_min_area(m, 1);
    CHECK(all.positive_count() == 7);
}

TEST_SUITE_END();
