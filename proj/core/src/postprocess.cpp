#include "racam/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

namespace racam {

namespace {

// Bin index consistent with the (t+0.5)/255 split thresholds:
// v >= (t+0.5)/255 exactly when bin(v) > t. The product 255*v is exact
// in double for float v, and no float can land on a (2t+1)/510 boundary,
// so the equivalence has no rounding holes.
int bin_of(float v) {
    return std::clamp(int(std::floor(255.0 * double(v) + 0.5)), 0, 255);
}

int otsu_split_bin(const Tensor& map) {
    if (map.empty()) throw std::invalid_argument("otsu_threshold: empty tensor");

    std::int64_t hist[256] = {0};
    for (std::int64_t i = 0; i < map.numel(); ++i) {
        const float v = map[i];
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw std::invalid_argument(
                fmt::format("otsu_threshold: value {} at index {} outside [0,1]", v, i));
        }
        ++hist[bin_of(v)];
    }

    const std::int64_t total = map.numel();
    std::int64_t total_sum = 0;
    for (int b = 0; b < 256; ++b) total_sum += std::int64_t(b) * hist[b];

    // Between-class variance ~ (S0*n1 - S1*n0)^2 / (n0*n1); compared
    // cross-multiplied in 128-bit integers so ties are exact.
    int best_t = 0;
    __int128 best_num = 0;   // D^2
    std::int64_t best_den = 0;  // n0*n1; 0 marks "no valid split yet"
    bool have_best = false;

    std::int64_t n0 = 0, s0 = 0;
    for (int t = 0; t < 256; ++t) {
        n0 += hist[t];
        s0 += std::int64_t(t) * hist[t];
        const std::int64_t n1 = total - n0;
        const std::int64_t s1 = total_sum - s0;
        if (n0 == 0 || n1 == 0) continue;
        const __int128 d = __int128(s0) * n1 - __int128(s1) * n0;
        const __int128 num = d * d;
        const std::int64_t den = n0 * n1;
        if (!have_best || num * best_den > best_num * den) {
            best_num = num;
            best_den = den;
            best_t = t;
            have_best = true;
        }
    }
    // A constant map has no valid split; keep t = 0.
    return best_t;
}

}  // namespace

float otsu_threshold(const Tensor& map) {
    return float((double(otsu_split_bin(map)) + 0.5) / 255.0);
}

BinaryMask to_mask(const Tensor& heatmap_values) {
    const int t = otsu_split_bin(heatmap_values);
    BinaryMask m;
    m.values = Tensor(heatmap_values.shape());
    for (std::int64_t i = 0; i < heatmap_values.numel(); ++i) {
        // bin(v) > t, equivalently v >= (t+0.5)/255
        m.values[i] = bin_of(heatmap_values[i]) > t ? 1.0f : 0.0f;
    }
    return m;
}

BinaryMask filter_min_area(const BinaryMask& mask, int min_area) {
    if (min_area <= 1) return mask;
    const Tensor& v = mask.values;
    const int h = v.dim(1), w = v.dim(2);
    std::vector<std::int32_t> comp(std::size_t(h) * w, -1);
    BinaryMask out;
    out.values = Tensor(v.shape());

    std::vector<std::int32_t> stack, members;
    for (int start = 0; start < h * w; ++start) {
        if (v[start] == 0.0f || comp[std::size_t(start)] >= 0) continue;
        stack.assign(1, start);
        members.clear();
        comp[std::size_t(start)] = start;
        while (!stack.empty()) {
            const std::int32_t p = stack.back();
            stack.pop_back();
            members.push_back(p);
            const int y = p / w, x = p % w;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const std::int32_t q = ny * w + nx;
                    if (v[q] != 0.0f && comp[std::size_t(q)] < 0) {
                        comp[std::size_t(q)] = start;
                        stack.push_back(q);
                    }
                }
            }
        }
        if (int(members.size()) >= min_area) {
            for (std::int32_t p : members) out.values[p] = 1.0f;
        }
    }
    return out;
}

}  // namespace racam
