#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "racam/postprocess.hpp"

namespace racam {

inline constexpr int kBackground = 0;
inline constexpr int kDefect = 1;

/// Pixel confusion counts for the two binary class views.
struct ConfusionCounts {
    std::int64_t tp[2] = {0, 0};
    std::int64_t fp[2] = {0, 0};
    std::int64_t fn[2] = {0, 0};
    std::int64_t tn[2] = {0, 0};

    ConfusionCounts& operator+=(const ConfusionCounts& o);
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

struct ClassMetrics {
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    ClassMetrics per_class[2];
    double miou = 0.0;
    std::int64_t n_images = 0;

    // filled by callers for reporting
    std::string method;
    double delta = 0.0;
    std::vector<int> layers;
    std::string dataset;

    const ClassMetrics& defect() const { return per_class[kDefect]; }
};

/// IoU = TP/(TP+FP+FN) with the empty-union case defined as 1;
/// precision/recall with a zero denominator are 0; F1 is 0 when
/// P+R == 0. mIoU is the unweighted mean over the two classes.
MetricsReport metrics(const ConfusionCounts& counts);

enum class AggregateMode { Micro, Macro };

/// Micro: sum confusion counts over all pairs, then apply the formulas
/// once. Macro: average per-image reports.
MetricsReport evaluate_set(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts,
                           AggregateMode mode = AggregateMode::Micro);

}  // namespace racam
