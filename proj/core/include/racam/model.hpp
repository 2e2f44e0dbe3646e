#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "racam/fgbp.hpp"
#include "racam/tape.hpp"
#include "racam/tensor.hpp"

namespace racam {

enum class LayerKind { Conv, Act, Pool, Gap, Linear, Upsample };

struct LayerDesc {
    LayerKind kind = LayerKind::Conv;
    int in_ch = 0, out_ch = 0;  // Conv / Linear (features for Linear)
    int ksize = 0;              // Conv / Pool
    int stride = 1;
    int pad = 0;
    float slope = 0.0f;   // Act
    int factor = 2;       // Upsample
};

enum class ArchId : std::uint32_t { TinyVgg = 0, MiniSegNet = 1 };

struct ModelSpec {
    ArchId arch = ArchId::TinyVgg;
    std::vector<LayerDesc> layers;
    /// Layer id of the last activation in each stage (shallow to deep).
    std::vector<int> stage_end_act;
    int num_classes = 2;

    bool is_segmenter() const { return arch == ArchId::MiniSegNet; }
};

struct ModelState {
    ModelSpec spec;
    std::vector<Tensor> params;
    std::vector<std::string> param_names;
    /// Index into params of each layer's weight (bias follows), -1 for
    /// parameterless layers.
    std::vector<int> layer_param;

    std::int64_t param_count() const;
};

/// 3-stage classifier: [conv3x3 -> leaky-relu(0.01)] x2 + maxpool2x2 per
/// stage, channels 8/16/32, then global average pool + linear head with
/// 2 logits. He-style fan-in uniform init, zero biases; deterministic
/// for a fixed seed.
ModelState tiny_vgg_init(std::uint64_t seed);

/// Encoder (2 stages, channels 8/16) + decoder (bilinear x2 upsample and
/// conv3x3 per stage) + 1x1 conv to 2 per-pixel logits. Output spatial
/// size equals the input.
ModelState mini_segnet_init(std::uint64_t seed);

struct ForwardResult {
    Tape tape;
    std::vector<int> layer_node;  // tape node per model layer
    int input_node = -1;
    int logits_node = -1;
    std::vector<int> param_node;  // tape node per parameter
};

/// Records the full forward pass on a tape; the tape output is the
/// logits node.
ForwardResult forward(const ModelState& model, const Tensor& image);
/// Same, plus a scalar cross-entropy loss as the tape output.
ForwardResult forward_with_loss(const ModelState& model, const Tensor& image, int label);
ForwardResult forward_with_pixel_loss(const ModelState& model, const Tensor& image,
                                      const Tensor& target);

/// Plain forward, no tape.
Tensor forward_logits(const ModelState& model, const Tensor& image);

/// Resumes the forward pass after `layer_id`, treating `activation` as
/// that layer's output.
Tensor forward_from(const ModelState& model, int layer_id, const Tensor& activation);

/// Activation layer ids valid as saliency targets.
std::vector<int> activation_layers(const ModelSpec& spec);

/// FGBP-filtered gradients at several target layers from one forward and
/// one filtered reverse sweep; each target's incoming gradient is
/// filtered once more by the indicator rule.
std::map<int, Tensor> fgbp_filtered_grads(const ModelState& model, const Tensor& image,
                                          int class_index, const std::vector<int>& layers,
                                          const FgbpConfig& cfg);
std::map<int, Tensor> fgbp_filtered_grads(const ForwardResult& fr, int class_index,
                                          const std::vector<int>& layers, const FgbpConfig& cfg);

}  // namespace racam
