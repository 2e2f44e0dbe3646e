#pragma once

#include <cstdint>
#include <vector>

#include "racam/data.hpp"
#include "racam/model.hpp"

namespace racam {

struct TrainConfig {
    float lr = 5e-4f;
    float momentum = 0.9f;
    int batch = 4;
    int epochs = 10;
    std::uint64_t seed = 0;
    bool flip_h = true;
    bool flip_v = true;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_metric = 0.0;  // accuracy (classifier) or defect mIoU (segmenter)
};

struct TrainResult {
    ModelState state;  // best-validation weights (last epoch when no val set)
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_metric = 0.0;
};

void validate_config(const TrainConfig& cfg);

/// SGD with classical momentum on image-level labels. Deterministic for
/// fixed (seed, dataset, config); per-epoch shuffling and flip
/// augmentation both derive from cfg.seed.
TrainResult train_classifier(ModelState model, const std::vector<SampleRecord>& train_set,
                             const std::vector<SampleRecord>& val_set, const TrainConfig& cfg);

/// Per-pixel cross-entropy on (image, mask) pairs; masks are binary and
/// match image size. Validation masks select the best epoch by defect
/// IoU when provided.
TrainResult train_segmenter(ModelState model, const std::vector<Tensor>& images,
                            const std::vector<Tensor>& masks, const std::vector<Tensor>& val_images,
                            const std::vector<Tensor>& val_masks, const TrainConfig& cfg);

double classifier_accuracy(const ModelState& model, const std::vector<SampleRecord>& samples);

/// Per-pixel argmax of the segmenter logits as a binary defect mask.
BinaryMask segment(const ModelState& model, const Tensor& image);

Tensor flip_image(const Tensor& image, bool horizontal, bool vertical);

}  // namespace racam
