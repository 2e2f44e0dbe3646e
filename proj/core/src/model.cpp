#include "racam/model.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "racam/rng.hpp"

namespace racam {

std::int64_t ModelState::param_count() const {
    std::int64_t n = 0;
    for (const Tensor& p : params) n += p.numel();
    return n;
}

namespace {

Tensor he_uniform(std::vector<int> shape, int fan_in, SplitMix64& rng) {
    Tensor t(std::move(shape));
    const float limit = std::sqrt(6.0f / float(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

struct Builder {
    ModelState state;
    SplitMix64 rng;

    explicit Builder(ArchId arch, std::uint64_t seed) : rng(mix64(seed)) {
        state.spec.arch = arch;
    }

    void conv(int in_ch, int out_ch, int k, int pad) {
        LayerDesc d;
        d.kind = LayerKind::Conv;
        d.in_ch = in_ch;
        d.out_ch = out_ch;
        d.ksize = k;
        d.stride = 1;
        d.pad = pad;
        const int li = int(state.spec.layers.size());
        state.spec.layers.push_back(d);
        state.layer_param.push_back(int(state.params.size()));
        state.params.push_back(he_uniform({out_ch, in_ch, k, k}, in_ch * k * k, rng));
        state.params.push_back(Tensor({out_ch}));
        state.param_names.push_back(fmt::format("layer{:02d}.weight", li));
        state.param_names.push_back(fmt::format("layer{:02d}.bias", li));
    }

    void act(float slope) {
        LayerDesc d;
        d.kind = LayerKind::Act;
        d.slope = slope;
        state.spec.layers.push_back(d);
        state.layer_param.push_back(-1);
    }

    void pool(int k, int stride) {
        LayerDesc d;
        d.kind = LayerKind::Pool;
        d.ksize = k;
        d.stride = stride;
        state.spec.layers.push_back(d);
        state.layer_param.push_back(-1);
    }

    void gap() {
        LayerDesc d;
        d.kind = LayerKind::Gap;
        state.spec.layers.push_back(d);
        state.layer_param.push_back(-1);
    }

    // The classifier head starts at zero: with a random head the first
    // optimizer steps silence the feature stack to reach the label prior
    // (leaky units never recover at slope 0.01), while a zero head keeps
    // logits at the prior from step one and feeds features only
    // class-aligned gradients.
    void linear_zero(int in_f, int out_f) {
        LayerDesc d;
        d.kind = LayerKind::Linear;
        d.in_ch = in_f;
        d.out_ch = out_f;
        const int li = int(state.spec.layers.size());
        state.spec.layers.push_back(d);
        state.layer_param.push_back(int(state.params.size()));
        state.params.push_back(Tensor({out_f, in_f}));
        state.params.push_back(Tensor({out_f}));
        state.param_names.push_back(fmt::format("layer{:02d}.weight", li));
        state.param_names.push_back(fmt::format("layer{:02d}.bias", li));
    }

    void upsample(int factor) {
        LayerDesc d;
        d.kind = LayerKind::Upsample;
        d.factor = factor;
        state.spec.layers.push_back(d);
        state.layer_param.push_back(-1);
    }

    void mark_stage_end() {
        // last layer added must be an activation
        state.spec.stage_end_act.push_back(int(state.spec.layers.size()) - 1);
    }
};

constexpr float kLeakySlope = 0.01f;

}  // namespace

ModelState tiny_vgg_init(std::uint64_t seed) {
    Builder b(ArchId::TinyVgg, seed);
    const int widths[3] = {8, 16, 32};
    int in_ch = 1;
    for (int s = 0; s < 3; ++s) {
        const int w = widths[s];
        b.conv(in_ch, w, 3, 1);
        b.act(kLeakySlope);
        b.conv(w, w, 3, 1);
        b.act(kLeakySlope);
        b.mark_stage_end();
        b.pool(2, 2);
        in_ch = w;
    }
    b.gap();
    b.linear_zero(32, 2);
    b.state.spec.num_classes = 2;
    return std::move(b.state);
}

ModelState mini_segnet_init(std::uint64_t seed) {
    Builder b(ArchId::MiniSegNet, seed);
    const int widths[2] = {8, 16};
    int in_ch = 1;
    for (int s = 0; s < 2; ++s) {
        const int w = widths[s];
        b.conv(in_ch, w, 3, 1);
        b.act(kLeakySlope);
        b.conv(w, w, 3, 1);
        b.act(kLeakySlope);
        b.mark_stage_end();
        b.pool(2, 2);
        in_ch = w;
    }
    b.upsample(2);
    b.conv(16, 8, 3, 1);
    b.act(kLeakySlope);
    b.upsample(2);
    b.conv(8, 8, 3, 1);
    b.act(kLeakySlope);
    b.conv(8, 2, 1, 0);  // per-pixel logits
    b.state.spec.num_classes = 2;
    return std::move(b.state);
}

std::vector<int> activation_layers(const ModelSpec& spec) {
    std::vector<int> out;
    for (int i = 0; i < int(spec.layers.size()); ++i) {
        if (spec.layers[std::size_t(i)].kind == LayerKind::Act) out.push_back(i);
    }
    return out;
}

namespace {

ForwardResult run_forward(const ModelState& model, const Tensor& image) {
    ForwardResult r;
    r.param_node.resize(model.params.size(), -1);
    r.input_node = r.tape.add_input(image);
    int cur = r.input_node;

    for (int li = 0; li < int(model.spec.layers.size()); ++li) {
        const LayerDesc& d = model.spec.layers[std::size_t(li)];
        switch (d.kind) {
            case LayerKind::Conv: {
                const int pi = model.layer_param[std::size_t(li)];
                int w = r.param_node[std::size_t(pi)];
                if (w < 0) w = r.param_node[std::size_t(pi)] = r.tape.add_param(model.params[std::size_t(pi)]);
                int bias = r.param_node[std::size_t(pi) + 1];
                if (bias < 0)
                    bias = r.param_node[std::size_t(pi) + 1] =
                        r.tape.add_param(model.params[std::size_t(pi) + 1]);
                cur = r.tape.add_conv2d(cur, w, bias, d.stride, d.pad, li);
                break;
            }
            case LayerKind::Act:
                cur = r.tape.add_leaky_relu(cur, d.slope, li);
                break;
            case LayerKind::Pool:
                cur = r.tape.add_maxpool2d(cur, d.ksize, d.stride, li);
                break;
            case LayerKind::Gap:
                cur = r.tape.add_global_avg_pool(cur, li);
                break;
            case LayerKind::Linear: {
                const int pi = model.layer_param[std::size_t(li)];
                int w = r.param_node[std::size_t(pi)];
                if (w < 0) w = r.param_node[std::size_t(pi)] = r.tape.add_param(model.params[std::size_t(pi)]);
                int bias = r.param_node[std::size_t(pi) + 1];
                if (bias < 0)
                    bias = r.param_node[std::size_t(pi) + 1] =
                        r.tape.add_param(model.params[std::size_t(pi) + 1]);
                cur = r.tape.add_linear(cur, w, bias, li);
                break;
            }
            case LayerKind::Upsample: {
                const Tensor& x = r.tape.node(cur).value;
                cur = r.tape.add_bilinear_resize(cur, x.dim(1) * d.factor, x.dim(2) * d.factor, li);
                break;
            }
        }
        r.layer_node.push_back(cur);
    }
    r.logits_node = cur;
    r.tape.set_output(cur);
    return r;
}

}  // namespace

ForwardResult forward(const ModelState& model, const Tensor& image) {
    return run_forward(model, image);
}

ForwardResult forward_with_loss(const ModelState& model, const Tensor& image, int label) {
    ForwardResult r = run_forward(model, image);
    const int loss = r.tape.add_softmax_xent(r.logits_node, label);
    r.tape.set_output(loss);
    return r;
}

ForwardResult forward_with_pixel_loss(const ModelState& model, const Tensor& image,
                                      const Tensor& target) {
    ForwardResult r = run_forward(model, image);
    const int loss = r.tape.add_pixel_xent(r.logits_node, target);
    r.tape.set_output(loss);
    return r;
}

namespace {

Tensor apply_layer(const ModelState& model, int li, const Tensor& x) {
    const LayerDesc& d = model.spec.layers[std::size_t(li)];
    switch (d.kind) {
        case LayerKind::Conv: {
            const int pi = model.layer_param[std::size_t(li)];
            return conv2d(x, model.params[std::size_t(pi)], model.params[std::size_t(pi) + 1],
                          d.stride, d.pad);
        }
        case LayerKind::Act:
            return leaky_relu(x, d.slope);
        case LayerKind::Pool:
            return maxpool2d(x, d.ksize, d.stride).output;
        case LayerKind::Gap:
            return global_avg_pool(x);
        case LayerKind::Linear: {
            const int pi = model.layer_param[std::size_t(li)];
            return linear(x, model.params[std::size_t(pi)], model.params[std::size_t(pi) + 1]);
        }
        case LayerKind::Upsample:
            return bilinear_resize(x, x.dim(1) * d.factor, x.dim(2) * d.factor);
    }
    throw std::logic_error("apply_layer: unknown layer kind");
}

}  // namespace

Tensor forward_logits(const ModelState& model, const Tensor& image) {
    Tensor x = image;
    for (int li = 0; li < int(model.spec.layers.size()); ++li) x = apply_layer(model, li, x);
    return x;
}

Tensor forward_from(const ModelState& model, int layer_id, const Tensor& activation) {
    if (layer_id < 0 || layer_id >= int(model.spec.layers.size())) {
        throw std::invalid_argument(fmt::format("forward_from: layer {} out of range", layer_id));
    }
    Tensor x = activation;
    for (int li = layer_id + 1; li < int(model.spec.layers.size()); ++li) x = apply_layer(model, li, x);
    return x;
}

std::map<int, Tensor> fgbp_filtered_grads(const ForwardResult& fr, int class_index,
                                          const std::vector<int>& layers, const FgbpConfig& cfg) {
    for (int l : layers) {
        if (l < 0 || l >= int(fr.layer_node.size()) ||
            fr.tape.node(fr.layer_node[std::size_t(l)]).kind != OpKind::LeakyRelu) {
            throw std::invalid_argument(
                fmt::format("fgbp_filtered_grads: layer {} is not a recorded activation", l));
        }
    }
    const Tensor& logits = fr.tape.node(fr.logits_node).value;
    if (class_index < 0 || class_index >= logits.numel()) {
        throw std::invalid_argument(
            fmt::format("fgbp_filtered_grads: class {} out of range [0,{})", class_index, logits.numel()));
    }
    Tensor seed(logits.shape());
    seed[class_index] = 1.0f;
    const std::vector<Tensor> grads =
        backward_nodes(fr.tape, fr.logits_node, seed, PropagationMode::filtered(cfg));
    std::map<int, Tensor> out;
    for (int l : layers) {
        const Tensor& g = grads[std::size_t(fr.layer_node[std::size_t(l)])];
        if (g.empty()) {
            throw std::invalid_argument(fmt::format("fgbp_filtered_grads: no gradient at layer {}", l));
        }
        out[l] = filter_gradient_field(g, cfg);
    }
    return out;
}

std::map<int, Tensor> fgbp_filtered_grads(const ModelState& model, const Tensor& image,
                                          int class_index, const std::vector<int>& layers,
                                          const FgbpConfig& cfg) {
    const ForwardResult fr = forward(model, image);
    return fgbp_filtered_grads(fr, class_index, layers, cfg);
}

}  // namespace racam
