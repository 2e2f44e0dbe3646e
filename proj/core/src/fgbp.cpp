#include "racam/fgbp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "racam/model.hpp"
#include "racam/tape.hpp"

namespace racam {

float percentile_positive(const float* values, std::int64_t n, double delta) {
    if (delta < 0.0 || delta > 100.0) {
        throw std::invalid_argument(fmt::format("percentile_positive: delta {} outside [0,100]", delta));
    }
    std::vector<float> pos;
    pos.reserve(std::size_t(n));
    for (std::int64_t i = 0; i < n; ++i) {
        if (values[i] > 0.0f) pos.push_back(values[i]);
    }
    if (pos.empty()) return std::numeric_limits<float>::infinity();
    if (delta == 0.0) return 0.0f;
    std::sort(pos.begin(), pos.end());
    const auto count = std::int64_t(pos.size());
    std::int64_t rank = std::int64_t(std::ceil(delta / 100.0 * double(count)));
    rank = std::clamp<std::int64_t>(rank, 1, count);
    return pos[std::size_t(rank - 1)];
}

float percentile_positive(const Tensor& values, double delta) {
    return percentile_positive(values.data(), values.numel(), delta);
}

namespace {

// Per-channel slices for [C,H,W] tensors under per-channel scope;
// otherwise one slice covering the whole tensor.
struct SliceIter {
    std::int64_t count;
    std::int64_t size;
};

SliceIter slices_of(const Tensor& t, const FgbpConfig& cfg) {
    if (cfg.scope == FgbpScope::PerChannel && t.ndim() == 3) {
        return {t.dim(0), std::int64_t(t.dim(1)) * t.dim(2)};
    }
    return {1, t.numel()};
}

}  // namespace

Tensor activation_backward(const Tensor& grad_in, const Tensor& saved_act_input,
                           const PropagationMode& mode, float slope) {
    if (!grad_in.same_shape(saved_act_input)) {
        throw_shape_error("activation_backward", grad_in, saved_act_input);
    }
    Tensor out(grad_in.shape());
    const float* g = grad_in.data();
    const float* x = saved_act_input.data();

    switch (mode.kind) {
        case PropagationKind::Standard:
            for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x[i] > 0.0f ? g[i] : slope * g[i];
            break;
        case PropagationKind::Guided:
            for (std::int64_t i = 0; i < out.numel(); ++i)
                out[i] = (x[i] > 0.0f && g[i] > 0.0f) ? g[i] : 0.0f;
            break;
        case PropagationKind::Fgbp: {
            const SliceIter it = slices_of(grad_in, mode.fgbp);
            for (std::int64_t s = 0; s < it.count; ++s) {
                const std::int64_t base = s * it.size;
                const float thr = percentile_positive(g + base, it.size, mode.fgbp.delta);
                for (std::int64_t i = base; i < base + it.size; ++i) {
                    out[i] = (x[i] > 0.0f && g[i] > 0.0f && g[i] >= thr) ? g[i] : 0.0f;
                }
            }
            break;
        }
    }
    return out;
}

Tensor filter_gradient_field(const Tensor& grad, const FgbpConfig& cfg) {
    Tensor out(grad.shape());
    const float* g = grad.data();
    const SliceIter it = slices_of(grad, cfg);
    for (std::int64_t s = 0; s < it.count; ++s) {
        const std::int64_t base = s * it.size;
        const float thr = percentile_positive(g + base, it.size, cfg.delta);
        for (std::int64_t i = base; i < base + it.size; ++i) {
            out[i] = g[i] >= thr ? g[i] : 0.0f;
        }
    }
    return out;
}

Tensor filtered_gradient(const ModelState& model, const Tensor& image, int class_index,
                         int target_layer, const FgbpConfig& cfg) {
    auto grads = fgbp_filtered_grads(model, image, class_index, {target_layer}, cfg);
    return std::move(grads.at(target_layer));
}

}  // namespace racam
