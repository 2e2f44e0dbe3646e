#include "racam/metrics.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace racam {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    for (int c = 0; c < 2; ++c) {
        tp[c] += o.tp[c];
        fp[c] += o.fp[c];
        fn[c] += o.fn[c];
        tn[c] += o.tn[c];
    }
    return *this;
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (!pred.values.same_shape(gt.values)) throw_shape_error("confusion", pred.values, gt.values);
    ConfusionCounts c;
    for (std::int64_t i = 0; i < pred.values.numel(); ++i) {
        const bool p = pred.values[i] != 0.0f;
        const bool g = gt.values[i] != 0.0f;
        if (p && g) ++c.tp[kDefect];
        else if (p && !g) ++c.fp[kDefect];
        else if (!p && g) ++c.fn[kDefect];
        else ++c.tn[kDefect];
    }
    // background view is the complement
    c.tp[kBackground] = c.tn[kDefect];
    c.fp[kBackground] = c.fn[kDefect];
    c.fn[kBackground] = c.fp[kDefect];
    c.tn[kBackground] = c.tp[kDefect];
    return c;
}

namespace {

ClassMetrics class_metrics(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    ClassMetrics m;
    const std::int64_t uni = tp + fp + fn;
    m.iou = uni == 0 ? 1.0 : double(tp) / double(uni);
    m.precision = (tp + fp) == 0 ? 0.0 : double(tp) / double(tp + fp);
    m.recall = (tp + fn) == 0 ? 0.0 : double(tp) / double(tp + fn);
    m.f1 = (m.precision + m.recall) == 0.0 ? 0.0
                                           : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

}  // namespace

MetricsReport metrics(const ConfusionCounts& c) {
    MetricsReport r;
    for (int cls = 0; cls < 2; ++cls) {
        r.per_class[cls] = class_metrics(c.tp[cls], c.fp[cls], c.fn[cls]);
    }
    r.miou = (r.per_class[0].iou + r.per_class[1].iou) / 2.0;
    r.n_images = 1;
    return r;
}

MetricsReport evaluate_set(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts,
                           AggregateMode mode) {
    if (preds.size() != gts.size()) {
        throw std::invalid_argument(fmt::format("evaluate_set: {} predictions vs {} ground truths",
                                                preds.size(), gts.size()));
    }
    if (preds.empty()) throw std::invalid_argument("evaluate_set: empty input");

    MetricsReport r;
    if (mode == AggregateMode::Micro) {
        ConfusionCounts total;
        for (std::size_t i = 0; i < preds.size(); ++i) total += confusion(preds[i], gts[i]);
        r = metrics(total);
    } else {
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const MetricsReport one = metrics(confusion(preds[i], gts[i]));
            for (int c = 0; c < 2; ++c) {
                r.per_class[c].iou += one.per_class[c].iou;
                r.per_class[c].precision += one.per_class[c].precision;
                r.per_class[c].recall += one.per_class[c].recall;
                r.per_class[c].f1 += one.per_class[c].f1;
            }
            r.miou += one.miou;
        }
        const double n = double(preds.size());
        for (int c = 0; c < 2; ++c) {
            r.per_class[c].iou /= n;
            r.per_class[c].precision /= n;
            r.per_class[c].recall /= n;
            r.per_class[c].f1 /= n;
        }
        r.miou /= n;
    }
    r.n_images = std::int64_t(preds.size());
    return r;
}

}  // namespace racam
