#include "racam/train.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "racam/metrics.hpp"
#include "racam/rng.hpp"

namespace racam {

void validate_config(const TrainConfig& cfg) {
    if (!(cfg.lr >= 0.0f)) throw std::invalid_argument("train: lr must be >= 0");
    if (!(cfg.momentum >= 0.0f && cfg.momentum < 1.0f)) {
        throw std::invalid_argument(fmt::format("train: momentum {} outside [0,1)", cfg.momentum));
    }
    if (cfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
}

Tensor flip_image(const Tensor& image, bool horizontal, bool vertical) {
    if (!horizontal && !vertical) return image;
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor out(image.shape());
    for (int ci = 0; ci < c; ++ci) {
        for (int i = 0; i < h; ++i) {
            const int si = vertical ? h - 1 - i : i;
            for (int j = 0; j < w; ++j) {
                const int sj = horizontal ? w - 1 - j : j;
                out.at(ci, i, j) = image.at(ci, si, sj);
            }
        }
    }
    return out;
}

namespace {

struct Sgd {
    std::vector<Tensor> velocity;

    explicit Sgd(const ModelState& m) {
        velocity.reserve(m.params.size());
        for (const Tensor& p : m.params) velocity.emplace_back(p.shape());
    }

    // v <- m*v - lr*g ; theta <- theta + v
    void step(ModelState& m, const std::vector<Tensor>& grads, const TrainConfig& cfg) {
        for (std::size_t p = 0; p < m.params.size(); ++p) {
            Tensor& v = velocity[p];
            Tensor& theta = m.params[p];
            const Tensor& g = grads[p];
            for (std::int64_t i = 0; i < theta.numel(); ++i) {
                v[i] = cfg.momentum * v[i] - cfg.lr * g[i];
                theta[i] += v[i];
            }
        }
    }
};

// Sample gradients summed in batch order through double accumulators,
// then scaled by 1/batch.
struct GradAccumulator {
    std::vector<std::vector<double>> acc;
    int count = 0;

    explicit GradAccumulator(const ModelState& m) {
        for (const Tensor& p : m.params) acc.emplace_back(std::size_t(p.numel()), 0.0);
    }

    void add(const ForwardResult& fr, const std::vector<Tensor>& node_grads) {
        for (std::size_t p = 0; p < acc.size(); ++p) {
            const Tensor& g = node_grads[std::size_t(fr.param_node[p])];
            if (g.empty()) continue;
            for (std::int64_t i = 0; i < g.numel(); ++i) acc[p][std::size_t(i)] += double(g[i]);
        }
        ++count;
    }

    std::vector<Tensor> mean(const ModelState& m) const {
        std::vector<Tensor> out;
        out.reserve(acc.size());
        for (std::size_t p = 0; p < acc.size(); ++p) {
            Tensor t(m.params[p].shape());
            for (std::int64_t i = 0; i < t.numel(); ++i) {
                t[i] = float(acc[p][std::size_t(i)] / double(count));
            }
            out.push_back(std::move(t));
        }
        return out;
    }

    void reset() {
        for (auto& a : acc) std::fill(a.begin(), a.end(), 0.0);
        count = 0;
    }
};

std::vector<int> shuffled_indices(int n, SplitMix64& rng) {
    std::vector<int> idx(std::size_t(n), 0);
    for (int i = 0; i < n; ++i) idx[std::size_t(i)] = i;
    for (int i = n - 1; i > 0; --i) std::swap(idx[std::size_t(i)], idx[std::size_t(rng.uniform_int(0, i))]);
    return idx;
}

int argmax(const Tensor& t) {
    int best = 0;
    for (std::int64_t i = 1; i < t.numel(); ++i) {
        if (t[i] > t[best]) best = int(i);
    }
    return best;
}

}  // namespace

double classifier_accuracy(const ModelState& model, const std::vector<SampleRecord>& samples) {
    if (samples.empty()) return 0.0;
    std::int64_t correct = 0;
    for (const SampleRecord& s : samples) {
        correct += argmax(forward_logits(model, s.image)) == s.label;
    }
    return double(correct) / double(samples.size());
}

TrainResult train_classifier(ModelState model, const std::vector<SampleRecord>& train_set,
                             const std::vector<SampleRecord>& val_set, const TrainConfig& cfg) {
    validate_config(cfg);
    if (train_set.empty()) throw std::invalid_argument("train_classifier: empty training set");

    Sgd opt(model);
    GradAccumulator grads(model);
    TrainResult result;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        SplitMix64 rng(mix64(cfg.seed ^ (std::uint64_t(epoch) * 0x9e3779b97f4a7c15ULL)));
        const std::vector<int> order = shuffled_indices(int(train_set.size()), rng);

        double loss_sum = 0.0;
        grads.reset();
        for (std::size_t n = 0; n < order.size(); ++n) {
            const SampleRecord& s = train_set[std::size_t(order[n])];
            const bool fh = cfg.flip_h && rng.next_bool();
            const bool fv = cfg.flip_v && rng.next_bool();
            const Tensor img = flip_image(s.image, fh, fv);

            ForwardResult fr = forward_with_loss(model, img, s.label);
            loss_sum += double(fr.tape.node(fr.tape.output_id()).value[0]);
            grads.add(fr, backward_loss(fr.tape));

            if (grads.count == cfg.batch || n + 1 == order.size()) {
                opt.step(model, grads.mean(model), cfg);
                grads.reset();
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / double(train_set.size());
        log.val_metric = val_set.empty() ? 0.0 : classifier_accuracy(model, val_set);
        result.log.push_back(log);

        if (val_set.empty() || result.best_epoch < 0 || log.val_metric > result.best_metric) {
            result.best_epoch = epoch;
            result.best_metric = log.val_metric;
            result.state = model;
        }
    }
    return result;
}

BinaryMask segment(const ModelState& model, const Tensor& image) {
    const Tensor logits = forward_logits(model, image);
    const int h = logits.dim(1), w = logits.dim(2);
    BinaryMask m;
    m.values = Tensor({1, h, w});
    const std::int64_t hw = std::int64_t(h) * w;
    for (std::int64_t p = 0; p < hw; ++p) {
        m.values[p] = logits[hw + p] > logits[p] ? 1.0f : 0.0f;
    }
    return m;
}

namespace {

double segmenter_defect_iou(const ModelState& model, const std::vector<Tensor>& images,
                            const std::vector<Tensor>& masks) {
    std::vector<BinaryMask> preds, gts;
    preds.reserve(images.size());
    gts.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        preds.push_back(segment(model, images[i]));
        gts.push_back(BinaryMask{masks[i]});
    }
    return evaluate_set(preds, gts).defect().iou;
}

}  // namespace

TrainResult train_segmenter(ModelState model, const std::vector<Tensor>& images,
                            const std::vector<Tensor>& masks, const std::vector<Tensor>& val_images,
                            const std::vector<Tensor>& val_masks, const TrainConfig& cfg) {
    validate_config(cfg);
    if (images.empty()) throw std::invalid_argument("train_segmenter: empty training set");
    if (images.size() != masks.size()) {
        throw std::invalid_argument(fmt::format("train_segmenter: {} images vs {} masks",
                                                images.size(), masks.size()));
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (masks[i].ndim() != 3 || masks[i].dim(1) != images[i].dim(1) ||
            masks[i].dim(2) != images[i].dim(2)) {
            throw_shape_error("train_segmenter", images[i], masks[i]);
        }
    }

    Sgd opt(model);
    GradAccumulator grads(model);
    TrainResult result;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        SplitMix64 rng(mix64(cfg.seed ^ (std::uint64_t(epoch) * 0x9e3779b97f4a7c15ULL)));
        const std::vector<int> order = shuffled_indices(int(images.size()), rng);

        double loss_sum = 0.0;
        grads.reset();
        for (std::size_t n = 0; n < order.size(); ++n) {
            const int i = order[n];
            const bool fh = cfg.flip_h && rng.next_bool();
            const bool fv = cfg.flip_v && rng.next_bool();
            const Tensor img = flip_image(images[std::size_t(i)], fh, fv);
            const Tensor tgt = flip_image(masks[std::size_t(i)], fh, fv);

            ForwardResult fr = forward_with_pixel_loss(model, img, tgt);
            loss_sum += double(fr.tape.node(fr.tape.output_id()).value[0]);
            grads.add(fr, backward_loss(fr.tape));

            if (grads.count == cfg.batch || n + 1 == order.size()) {
                opt.step(model, grads.mean(model), cfg);
                grads.reset();
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / double(images.size());
        log.val_metric =
            val_images.empty() ? 0.0 : segmenter_defect_iou(model, val_images, val_masks);
        result.log.push_back(log);

        if (val_images.empty() || result.best_epoch < 0 || log.val_metric > result.best_metric) {
            result.best_epoch = epoch;
            result.best_metric = log.val_metric;
            result.state = model;
        }
    }
    return result;
}

}  // namespace racam
