#include "racam/tape.hpp"

#include <atomic>
#include <stdexcept>

#include <fmt/format.h>

namespace racam {

namespace {
std::atomic<std::uint64_t> g_backward_calls{0};
}

std::uint64_t backward_call_count() { return g_backward_calls.load(std::memory_order_relaxed); }

int Tape::push(TapeNode node) {
    nodes_.push_back(std::move(node));
    return int(nodes_.size()) - 1;
}

int Tape::add_input(Tensor value) {
    TapeNode n;
    n.kind = OpKind::Input;
    n.value = std::move(value);
    return push(std::move(n));
}

int Tape::add_param(Tensor value) {
    TapeNode n;
    n.kind = OpKind::Param;
    n.value = std::move(value);
    return push(std::move(n));
}

int Tape::add_conv2d(int x, int w, int b, int stride, int pad, int layer_id) {
    TapeNode n;
    n.kind = OpKind::Conv2d;
    n.in0 = x;
    n.in1 = w;
    n.in2 = b;
    n.stride = stride;
    n.pad = pad;
    n.layer_id = layer_id;
    n.value = conv2d(node(x).value, node(w).value, node(b).value, stride, pad);
    return push(std::move(n));
}

int Tape::add_leaky_relu(int x, float slope, int layer_id) {
    TapeNode n;
    n.kind = OpKind::LeakyRelu;
    n.in0 = x;
    n.slope = slope;
    n.layer_id = layer_id;
    n.value = leaky_relu(node(x).value, slope);
    return push(std::move(n));
}

int Tape::add_maxpool2d(int x, int k, int stride, int layer_id) {
    TapeNode n;
    n.kind = OpKind::MaxPool2d;
    n.in0 = x;
    n.k = k;
    n.stride = stride;
    n.layer_id = layer_id;
    MaxPoolResult res = maxpool2d(node(x).value, k, stride);
    n.value = std::move(res.output);
    n.argmax = std::move(res.argmax);
    return push(std::move(n));
}

int Tape::add_global_avg_pool(int x, int layer_id) {
    TapeNode n;
    n.kind = OpKind::GlobalAvgPool;
    n.in0 = x;
    n.layer_id = layer_id;
    n.value = global_avg_pool(node(x).value);
    return push(std::move(n));
}

int Tape::add_linear(int x, int w, int b, int layer_id) {
    TapeNode n;
    n.kind = OpKind::Linear;
    n.in0 = x;
    n.in1 = w;
    n.in2 = b;
    n.layer_id = layer_id;
    n.value = linear(node(x).value, node(w).value, node(b).value);
    return push(std::move(n));
}

int Tape::add_bilinear_resize(int x, int out_h, int out_w, int layer_id) {
    TapeNode n;
    n.kind = OpKind::BilinearResize;
    n.in0 = x;
    n.out_h = out_h;
    n.out_w = out_w;
    n.layer_id = layer_id;
    n.value = bilinear_resize(node(x).value, out_h, out_w);
    return push(std::move(n));
}

int Tape::add_softmax_xent(int logits, int label) {
    TapeNode n;
    n.kind = OpKind::SoftmaxXent;
    n.in0 = logits;
    n.label = label;
    n.value = Tensor::from_data({1}, {softmax_cross_entropy(node(logits).value, label)});
    return push(std::move(n));
}

int Tape::add_pixel_xent(int logits, Tensor target) {
    TapeNode n;
    n.kind = OpKind::PixelXent;
    n.in0 = logits;
    n.value = Tensor::from_data({1}, {pixel_cross_entropy(node(logits).value, target)});
    n.target = std::move(target);
    return push(std::move(n));
}

std::vector<Tensor> Tape::replay_values() const {
    std::vector<Tensor> vals(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const TapeNode& n = nodes_[i];
        const auto in = [&](int id) -> const Tensor& { return vals[std::size_t(id)]; };
        switch (n.kind) {
            case OpKind::Input:
            case OpKind::Param:
                vals[i] = n.value;
                break;
            case OpKind::Conv2d:
                vals[i] = conv2d(in(n.in0), in(n.in1), in(n.in2), n.stride, n.pad);
                break;
            case OpKind::LeakyRelu:
                vals[i] = leaky_relu(in(n.in0), n.slope);
                break;
            case OpKind::MaxPool2d:
                vals[i] = maxpool2d(in(n.in0), n.k, n.stride).output;
                break;
            case OpKind::GlobalAvgPool:
                vals[i] = global_avg_pool(in(n.in0));
                break;
            case OpKind::Linear:
                vals[i] = linear(in(n.in0), in(n.in1), in(n.in2));
                break;
            case OpKind::BilinearResize:
                vals[i] = bilinear_resize(in(n.in0), n.out_h, n.out_w);
                break;
            case OpKind::SoftmaxXent:
                vals[i] = Tensor::from_data({1}, {softmax_cross_entropy(in(n.in0), n.label)});
                break;
            case OpKind::PixelXent:
                vals[i] = Tensor::from_data({1}, {pixel_cross_entropy(in(n.in0), n.target)});
                break;
        }
    }
    return vals;
}

namespace {

void accumulate(Tensor& dst, Tensor&& src) {
    if (dst.empty()) {
        dst = std::move(src);
        return;
    }
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace

std::vector<Tensor> backward_nodes(const Tape& tape, int seed_node, const Tensor& seed,
                                   const PropagationMode& mode) {
    g_backward_calls.fetch_add(1, std::memory_order_relaxed);
    if (seed_node < 0 || seed_node >= tape.size()) {
        throw std::invalid_argument("backward: seed node out of range");
    }
    if (!seed.same_shape(tape.node(seed_node).value)) {
        throw_shape_error("backward seed", seed, tape.node(seed_node).value);
    }

    std::vector<Tensor> grads{std::size_t(tape.size())};
    grads[std::size_t(seed_node)] = seed;

    for (int id = seed_node; id >= 0; --id) {
        const TapeNode& n = tape.node(id);
        Tensor& g = grads[std::size_t(id)];
        if (g.empty()) continue;

        switch (n.kind) {
            case OpKind::Input:
            case OpKind::Param:
                break;
            case OpKind::Conv2d: {
                Conv2dGrads cg = conv2d_backward(g, tape.node(n.in0).value, tape.node(n.in1).value,
                                                 n.stride, n.pad);
                accumulate(grads[std::size_t(n.in0)], std::move(cg.input));
                accumulate(grads[std::size_t(n.in1)], std::move(cg.weight));
                accumulate(grads[std::size_t(n.in2)], std::move(cg.bias));
                break;
            }
            case OpKind::LeakyRelu:
                accumulate(grads[std::size_t(n.in0)],
                           activation_backward(g, tape.node(n.in0).value, mode, n.slope));
                break;
            case OpKind::MaxPool2d:
                accumulate(grads[std::size_t(n.in0)],
                           maxpool2d_backward(g, tape.node(n.in0).value, n.argmax));
                break;
            case OpKind::GlobalAvgPool:
                accumulate(grads[std::size_t(n.in0)],
                           global_avg_pool_backward(g, tape.node(n.in0).value));
                break;
            case OpKind::Linear: {
                LinearGrads lg = linear_backward(g, tape.node(n.in0).value, tape.node(n.in1).value);
                accumulate(grads[std::size_t(n.in0)], std::move(lg.input));
                accumulate(grads[std::size_t(n.in1)], std::move(lg.weight));
                accumulate(grads[std::size_t(n.in2)], std::move(lg.bias));
                break;
            }
            case OpKind::BilinearResize: {
                const Tensor& x = tape.node(n.in0).value;
                accumulate(grads[std::size_t(n.in0)],
                           bilinear_resize_backward(g, x.dim(1), x.dim(2)));
                break;
            }
            case OpKind::SoftmaxXent: {
                Tensor lg = softmax_cross_entropy_backward(tape.node(n.in0).value, n.label);
                const float s = g[0];
                for (std::int64_t i = 0; i < lg.numel(); ++i) lg[i] *= s;
                accumulate(grads[std::size_t(n.in0)], std::move(lg));
                break;
            }
            case OpKind::PixelXent: {
                Tensor lg = pixel_cross_entropy_backward(tape.node(n.in0).value, n.target);
                const float s = g[0];
                for (std::int64_t i = 0; i < lg.numel(); ++i) lg[i] *= s;
                accumulate(grads[std::size_t(n.in0)], std::move(lg));
                break;
            }
        }
    }
    return grads;
}

std::map<int, Tensor> backward(const Tape& tape, int class_index, const PropagationMode& mode) {
    const int out = tape.output_id();
    if (out < 0) throw std::invalid_argument("backward: tape has no output node");
    const TapeNode& out_node = tape.node(out);
    const Tensor& scores = out_node.value;
    if (scores.ndim() != 1 || out_node.kind == OpKind::SoftmaxXent ||
        out_node.kind == OpKind::PixelXent) {
        throw std::invalid_argument(
            fmt::format("backward: output node must expose per-class scores, got {}",
                        scores.shape_str()));
    }
    if (class_index < 0 || class_index >= scores.numel()) {
        throw std::invalid_argument(
            fmt::format("backward: class {} out of range [0,{})", class_index, scores.numel()));
    }
    Tensor seed(scores.shape());
    seed[class_index] = 1.0f;

    std::vector<Tensor> grads = backward_nodes(tape, out, seed, mode);

    std::map<int, Tensor> by_layer;
    for (int id = 0; id < tape.size(); ++id) {
        const TapeNode& n = tape.node(id);
        if (n.kind == OpKind::LeakyRelu && n.layer_id >= 0 && !grads[std::size_t(id)].empty()) {
            by_layer[n.layer_id] = std::move(grads[std::size_t(id)]);
        }
    }
    return by_layer;
}

std::vector<Tensor> backward_loss(const Tape& tape) {
    const int out = tape.output_id();
    if (out < 0) throw std::invalid_argument("backward_loss: tape has no output node");
    if (tape.node(out).value.numel() != 1) {
        throw std::invalid_argument("backward_loss: output node must be scalar");
    }
    return backward_nodes(tape, out, Tensor::full({1}, 1.0f), PropagationMode::standard());
}

}  // namespace racam
