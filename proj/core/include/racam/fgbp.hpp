#pragma once

#include <cstdint>

#include "racam/tensor.hpp"

namespace racam {

struct ModelState;

/// Granularity at which the gradient percentile threshold is computed.
enum class FgbpScope { PerChannel, PerLayer };

struct FgbpConfig {
    /// Percentile of the positive gradient values, in [0,100].
    /// 0 admits every positive value (plain guided backprop).
    double delta = 50.0;
    FgbpScope scope = FgbpScope::PerChannel;
};

/// Backward rule applied at activation nodes.
enum class PropagationKind { Standard, Guided, Fgbp };

struct PropagationMode {
    PropagationKind kind = PropagationKind::Standard;
    FgbpConfig fgbp;

    static PropagationMode standard() { return {PropagationKind::Standard, {}}; }
    static PropagationMode guided() { return {PropagationKind::Guided, {}}; }
    static PropagationMode filtered(FgbpConfig cfg) { return {PropagationKind::Fgbp, cfg}; }
};

/// delta-th percentile of the strictly positive entries, nearest-rank:
/// sort ascending, take entry ceil(delta/100 * n) (clamped to [1,n]).
/// delta = 0 returns 0 so every positive value passes. No positive
/// entries -> +inf (nothing passes).
float percentile_positive(const float* values, std::int64_t n, double delta);
float percentile_positive(const Tensor& values, double delta);

/// One activation backward step under the selected rule:
///  - Standard: exact leaky-relu calculus (slope on the negative side).
///  - Guided:   standard positive gate AND grad_in > 0; the leak path
///              carries no gradient.
///  - Fgbp:     guided gate AND grad_in >= percentile threshold,
///              computed per channel slice or per layer.
Tensor activation_backward(const Tensor& grad_in, const Tensor& saved_act_input,
                           const PropagationMode& mode, float slope);

/// Indicator-filtered gradient field: I(g >= thr) * g with thr the
/// delta-percentile of g's positive values (per channel slice when the
/// tensor is [C,H,W] and scope is per-channel, else over the whole
/// tensor). Always non-negative.
Tensor filter_gradient_field(const Tensor& grad, const FgbpConfig& cfg);

/// Gradient of logit `class_index` at `target_layer`, propagated with
/// the filtering rule at every activation above the target and filtered
/// once more at the target itself.
Tensor filtered_gradient(const ModelState& model, const Tensor& image, int class_index,
                         int target_layer, const FgbpConfig& cfg);

}  // namespace racam
