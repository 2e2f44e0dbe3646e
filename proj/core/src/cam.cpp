#include "racam/cam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "racam/ops.hpp"
#include "racam/tape.hpp"

namespace racam {

namespace {

constexpr double kEps = 1e-8;

struct MethodName {
    CamMethod method;
    const char* name;
};

constexpr MethodName kMethodNames[] = {
    {CamMethod::GradCam, "grad-cam"},
    {CamMethod::GradCamPP, "grad-cam++"},
    {CamMethod::XGradCam, "xgrad-cam"},
    {CamMethod::AblationCam, "ablation-cam"},
    {CamMethod::ScoreCam, "score-cam"},
    {CamMethod::LayerCam, "layer-cam"},
    {CamMethod::FullGrad, "fullgrad"},
    {CamMethod::RaCam, "ra-cam"},
    {CamMethod::LayerCamFgbp, "layer-cam+fgbp"},
    {CamMethod::FullGradFgbp, "fullgrad+fgbp"},
};

}  // namespace

CamMethod cam_method_from_string(const std::string& name) {
    for (const MethodName& m : kMethodNames) {
        if (name == m.name) return m.method;
    }
    std::string valid;
    for (const MethodName& m : kMethodNames) {
        if (!valid.empty()) valid += ", ";
        valid += m.name;
    }
    throw std::invalid_argument(fmt::format("unknown method '{}'; valid methods: {}", name, valid));
}

const char* to_string(CamMethod method) {
    for (const MethodName& m : kMethodNames) {
        if (m.method == method) return m.name;
    }
    return "?";
}

std::vector<std::string> cam_method_names() {
    std::vector<std::string> out;
    for (const MethodName& m : kMethodNames) out.emplace_back(m.name);
    return out;
}

std::vector<int> default_layers(const ModelSpec& spec, CamMethod method) {
    if (spec.stage_end_act.empty()) throw std::invalid_argument("model has no stage activations");
    switch (method) {
        case CamMethod::RaCam:
        case CamMethod::LayerCam:
        case CamMethod::LayerCamFgbp:
            return spec.stage_end_act;
        default:
            return {spec.stage_end_act.back()};
    }
}

namespace {

void validate_request(const CamRequest& req) {
    if (req.model == nullptr) throw std::invalid_argument("cam: request has no model");
    if (req.model->spec.is_segmenter()) {
        throw std::invalid_argument("cam: saliency targets the classifier, not the segmenter");
    }
    if (req.class_index < 0 || req.class_index >= req.model->spec.num_classes) {
        throw std::invalid_argument(fmt::format("cam: class {} out of range [0,{})", req.class_index,
                                                req.model->spec.num_classes));
    }
    if (req.layers.empty()) throw std::invalid_argument("cam: layer list is empty");
    for (int l : req.layers) {
        if (l < 0 || l >= int(req.model->spec.layers.size()) ||
            req.model->spec.layers[std::size_t(l)].kind != LayerKind::Act) {
            throw std::invalid_argument(
                fmt::format("cam: layer {} is not a recorded activation layer", l));
        }
    }
}

// ReLU -> resize to input resolution -> min-max normalize.
Tensor finalize_map(const Tensor& map, int in_h, int in_w) {
    return normalize_minmax(bilinear_resize(relu(map), in_h, in_w));
}

Heatmap make_heatmap(Tensor values, const CamRequest& req) {
    Heatmap h;
    h.values = std::move(values);
    h.class_index = req.class_index;
    h.method = req.method;
    return h;
}

// map[p] = sum_k w_k * A[k,p], double accumulation in channel order.
Tensor channel_weighted_sum(const std::vector<double>& weights, const Tensor& acts) {
    const int c = acts.dim(0), h = acts.dim(1), w = acts.dim(2);
    const std::int64_t hw = std::int64_t(h) * w;
    std::vector<double> acc(std::size_t(hw), 0.0);
    for (int k = 0; k < c; ++k) {
        const double wk = weights[std::size_t(k)];
        const float* a = acts.data() + k * hw;
        for (std::int64_t p = 0; p < hw; ++p) acc[std::size_t(p)] += wk * double(a[p]);
    }
    Tensor out({1, h, w});
    for (std::int64_t p = 0; p < hw; ++p) out[p] = float(acc[std::size_t(p)]);
    return out;
}

std::vector<Tensor> class_grad_nodes(const ForwardResult& fr, int class_index,
                                     const PropagationMode& mode) {
    const Tensor& logits = fr.tape.node(fr.logits_node).value;
    Tensor seed(logits.shape());
    seed[class_index] = 1.0f;
    return backward_nodes(fr.tape, fr.logits_node, seed, mode);
}

const Tensor& act_value(const ForwardResult& fr, int layer) {
    return fr.tape.node(fr.layer_node[std::size_t(layer)]).value;
}

const Tensor& grad_at_layer(const ForwardResult& fr, const std::vector<Tensor>& node_grads,
                            int layer) {
    const Tensor& g = node_grads[std::size_t(fr.layer_node[std::size_t(layer)])];
    if (g.empty()) {
        throw std::invalid_argument(fmt::format("cam: no gradient recorded at layer {}", layer));
    }
    return g;
}

// Gradient-weighted family: per-layer channel weights from (A, G),
// weighted channel sum, finalize, fuse.
template <typename WeightFn>
Heatmap gradient_weighted_cam(const CamRequest& req, const ForwardResult& fr,
                              const PropagationMode& mode, WeightFn weights) {
    const std::vector<Tensor> grads = class_grad_nodes(fr, req.class_index, mode);
    const int in_h = req.image.dim(1), in_w = req.image.dim(2);

    std::vector<Heatmap> maps;
    maps.reserve(req.layers.size());
    for (int layer : req.layers) {
        const Tensor& acts = act_value(fr, layer);
        const Tensor& grad = grad_at_layer(fr, grads, layer);
        const Tensor map = channel_weighted_sum(weights(acts, grad), acts);
        maps.push_back(make_heatmap(finalize_map(map, in_h, in_w), req));
    }
    return fuse_layers(maps, req.fusion);
}

std::vector<double> grad_cam_weights(const Tensor&, const Tensor& g) {
    const int c = g.dim(0);
    const std::int64_t hw = std::int64_t(g.dim(1)) * g.dim(2);
    std::vector<double> w(std::size_t(c), 0.0);
    for (int k = 0; k < c; ++k) {
        double s = 0.0;
        const float* gp = g.data() + k * hw;
        for (std::int64_t p = 0; p < hw; ++p) s += double(gp[p]);
        w[std::size_t(k)] = s / double(hw);
    }
    return w;
}

std::vector<double> grad_cam_pp_weights(const Tensor& a, const Tensor& g) {
    const int c = g.dim(0);
    const std::int64_t hw = std::int64_t(g.dim(1)) * g.dim(2);
    std::vector<double> w(std::size_t(c), 0.0);
    for (int k = 0; k < c; ++k) {
        const float* gp = g.data() + k * hw;
        const float* ap = a.data() + k * hw;
        double sum_ag3 = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) {
            const double gv = double(gp[p]);
            sum_ag3 += double(ap[p]) * gv * gv * gv;
        }
        double wk = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) {
            const double gv = double(gp[p]);
            const double denom = 2.0 * gv * gv + sum_ag3;
            const double alpha = denom != 0.0 ? gv * gv / denom : 0.0;  // 0/0 -> 0
            wk += alpha * std::max(gv, 0.0);
        }
        w[std::size_t(k)] = wk;
    }
    return w;
}

std::vector<double> xgrad_cam_weights(const Tensor& a, const Tensor& g) {
    const int c = g.dim(0);
    const std::int64_t hw = std::int64_t(g.dim(1)) * g.dim(2);
    std::vector<double> w(std::size_t(c), 0.0);
    for (int k = 0; k < c; ++k) {
        const float* gp = g.data() + k * hw;
        const float* ap = a.data() + k * hw;
        double num = 0.0, den = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) {
            num += double(gp[p]) * double(ap[p]);
            den += double(ap[p]);
        }
        w[std::size_t(k)] = num / (den + kEps);
    }
    return w;
}

// LayerCam-style: map = sum_k relu(G_k) (.) A_k.
Heatmap elementwise_weighted_cam(const CamRequest& req, const ForwardResult& fr,
                                 const PropagationMode& mode) {
    const std::vector<Tensor> grads = class_grad_nodes(fr, req.class_index, mode);
    const int in_h = req.image.dim(1), in_w = req.image.dim(2);

    std::vector<Heatmap> maps;
    maps.reserve(req.layers.size());
    for (int layer : req.layers) {
        const Tensor& acts = act_value(fr, layer);
        const Tensor& grad = grad_at_layer(fr, grads, layer);
        const int c = acts.dim(0), h = acts.dim(1), w = acts.dim(2);
        const std::int64_t hw = std::int64_t(h) * w;
        std::vector<double> acc(std::size_t(hw), 0.0);
        for (int k = 0; k < c; ++k) {
            const float* a = acts.data() + k * hw;
            const float* g = grad.data() + k * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
                const double gp = g[p] > 0.0f ? double(g[p]) : 0.0;
                acc[std::size_t(p)] += gp * double(a[p]);
            }
        }
        Tensor map({1, h, w});
        for (std::int64_t p = 0; p < hw; ++p) map[p] = float(acc[std::size_t(p)]);
        maps.push_back(make_heatmap(finalize_map(map, in_h, in_w), req));
    }
    return fuse_layers(maps, req.fusion);
}

// FullGrad: psi(input (.) dI) + sum over conv layers and channels of
// psi(bias_k * dO_k), psi = abs -> normalize -> resize.
Heatmap full_grad_impl(const CamRequest& req, const ForwardResult& fr, const PropagationMode& mode) {
    const std::vector<Tensor> grads = class_grad_nodes(fr, req.class_index, mode);
    const int in_h = req.image.dim(1), in_w = req.image.dim(2);
    const std::int64_t hw = std::int64_t(in_h) * in_w;

    std::vector<double> acc(std::size_t(hw), 0.0);
    const auto add_psi_term = [&](const Tensor& term) {
        const Tensor psi = bilinear_resize(normalize_minmax(abs(term)), in_h, in_w);
        for (std::int64_t p = 0; p < hw; ++p) acc[std::size_t(p)] += double(psi[p]);
    };

    const Tensor& input_grad = grads[std::size_t(fr.input_node)];
    if (input_grad.empty()) throw std::logic_error("fullgrad: input gradient missing");
    add_psi_term(mul(req.image, input_grad));

    const ModelState& m = *req.model;
    for (int li = 0; li < int(m.spec.layers.size()); ++li) {
        if (m.spec.layers[std::size_t(li)].kind != LayerKind::Conv) continue;
        const Tensor& conv_grad = grads[std::size_t(fr.layer_node[std::size_t(li)])];
        if (conv_grad.empty()) continue;
        const Tensor& bias = m.params[std::size_t(m.layer_param[std::size_t(li)] + 1)];
        const int c = conv_grad.dim(0), h = conv_grad.dim(1), w = conv_grad.dim(2);
        for (int k = 0; k < c; ++k) {
            Tensor term({1, h, w});
            const float* g = conv_grad.data() + std::int64_t(k) * h * w;
            for (std::int64_t p = 0; p < std::int64_t(h) * w; ++p) term[p] = bias[k] * g[p];
            add_psi_term(term);
        }
    }

    Tensor map({1, in_h, in_w});
    for (std::int64_t p = 0; p < hw; ++p) map[p] = float(acc[std::size_t(p)]);
    return make_heatmap(finalize_map(map, in_h, in_w), req);
}

Heatmap ablation_cam_impl(const CamRequest& req, const ForwardResult& fr) {
    const double y = double(fr.tape.node(fr.logits_node).value[req.class_index]);
    const int in_h = req.image.dim(1), in_w = req.image.dim(2);

    std::vector<Heatmap> maps;
    maps.reserve(req.layers.size());
    for (int layer : req.layers) {
        const Tensor& acts = act_value(fr, layer);
        const int c = acts.dim(0);
        const std::int64_t hw = std::int64_t(acts.dim(1)) * acts.dim(2);
        std::vector<double> weights(std::size_t(c), 0.0);
        for (int k = 0; k < c; ++k) {
            Tensor ablated = acts;
            std::fill(ablated.data() + k * hw, ablated.data() + (k + 1) * hw, 0.0f);
            const Tensor y_abl = forward_from(*req.model, layer, ablated);
            weights[std::size_t(k)] = (y - double(y_abl[req.class_index])) / (std::abs(y) + kEps);
        }
        maps.push_back(
            make_heatmap(finalize_map(channel_weighted_sum(weights, acts), in_h, in_w), req));
    }
    return fuse_layers(maps, req.fusion);
}

Heatmap score_cam_impl(const CamRequest& req, const ForwardResult& fr) {
    const int in_h = req.image.dim(1), in_w = req.image.dim(2);
    const Tensor baseline_probs = softmax(forward_logits(*req.model, Tensor(req.image.shape())));
    const double s0 = double(baseline_probs[req.class_index]);

    std::vector<Heatmap> maps;
    maps.reserve(req.layers.size());
    for (int layer : req.layers) {
        const Tensor& acts = act_value(fr, layer);
        const int c = acts.dim(0), h = acts.dim(1), w = acts.dim(2);
        const std::int64_t hw = std::int64_t(h) * w;
        const std::int64_t in_hw = std::int64_t(in_h) * in_w;
        std::vector<double> weights(std::size_t(c), 0.0);
        for (int k = 0; k < c; ++k) {
            Tensor chan({1, h, w});
            std::copy(acts.data() + k * hw, acts.data() + (k + 1) * hw, chan.data());
            const Tensor mask = bilinear_resize(normalize_minmax(chan), in_h, in_w);
            Tensor masked(req.image.shape());
            for (int ci = 0; ci < req.image.dim(0); ++ci) {
                for (std::int64_t p = 0; p < in_hw; ++p) {
                    masked[ci * in_hw + p] = req.image[ci * in_hw + p] * mask[p];
                }
            }
            const Tensor probs = softmax(forward_logits(*req.model, masked));
            weights[std::size_t(k)] = double(probs[req.class_index]) - s0;
        }
        maps.push_back(
            make_heatmap(finalize_map(channel_weighted_sum(weights, acts), in_h, in_w), req));
    }
    return fuse_layers(maps, req.fusion);
}

Heatmap ra_cam_impl(const CamRequest& req, const ForwardResult& fr) {
    const std::map<int, Tensor> filtered =
        fgbp_filtered_grads(fr, req.class_index, req.layers, req.fgbp);
    const int in_h = req.image.dim(1), in_w = req.image.dim(2);

    std::vector<Heatmap> maps;
    maps.reserve(req.layers.size());
    for (int layer : req.layers) {
        const Tensor& acts = act_value(fr, layer);
        const Tensor& rel = filtered.at(layer);
        const int c = acts.dim(0), h = acts.dim(1), w = acts.dim(2);
        const std::int64_t hw = std::int64_t(h) * w;
        std::vector<double> acc(std::size_t(hw), 0.0);
        for (int k = 0; k < c; ++k) {
            const float* a = acts.data() + k * hw;
            const float* r = rel.data() + k * hw;
            for (std::int64_t p = 0; p < hw; ++p) acc[std::size_t(p)] += double(r[p]) * double(a[p]);
        }
        Tensor map({1, h, w});
        for (std::int64_t p = 0; p < hw; ++p) map[p] = float(acc[std::size_t(p)]);
        maps.push_back(make_heatmap(finalize_map(map, in_h, in_w), req));
    }
    return fuse_layers(maps, req.fusion);
}

}  // namespace

Heatmap compute_cam_with_forward(const CamRequest& req, const ForwardResult& fr) {
    validate_request(req);
    switch (req.method) {
        case CamMethod::GradCam:
            return gradient_weighted_cam(req, fr, PropagationMode::standard(), grad_cam_weights);
        case CamMethod::GradCamPP:
            return gradient_weighted_cam(req, fr, PropagationMode::standard(), grad_cam_pp_weights);
        case CamMethod::XGradCam:
            return gradient_weighted_cam(req, fr, PropagationMode::standard(), xgrad_cam_weights);
        case CamMethod::AblationCam:
            return ablation_cam_impl(req, fr);
        case CamMethod::ScoreCam:
            return score_cam_impl(req, fr);
        case CamMethod::LayerCam:
            return elementwise_weighted_cam(req, fr, PropagationMode::standard());
        case CamMethod::FullGrad:
            return full_grad_impl(req, fr, PropagationMode::standard());
        case CamMethod::RaCam:
            return ra_cam_impl(req, fr);
        case CamMethod::LayerCamFgbp:
            return elementwise_weighted_cam(req, fr, PropagationMode::filtered(req.fgbp));
        case CamMethod::FullGradFgbp:
            return full_grad_impl(req, fr, PropagationMode::filtered(req.fgbp));
    }
    throw std::logic_error("compute_cam: unknown method");
}

Heatmap compute_cam(const CamRequest& req) {
    validate_request(req);
    const ForwardResult fr = forward(*req.model, req.image);
    return compute_cam_with_forward(req, fr);
}

namespace {

Heatmap run_as(const CamRequest& req, CamMethod method) {
    CamRequest r = req;
    r.method = method;
    return compute_cam(r);
}

}  // namespace

Heatmap grad_cam(const CamRequest& req) { return run_as(req, CamMethod::GradCam); }
Heatmap grad_cam_pp(const CamRequest& req) { return run_as(req, CamMethod::GradCamPP); }
Heatmap xgrad_cam(const CamRequest& req) { return run_as(req, CamMethod::XGradCam); }
Heatmap ablation_cam(const CamRequest& req) { return run_as(req, CamMethod::AblationCam); }
Heatmap score_cam(const CamRequest& req) { return run_as(req, CamMethod::ScoreCam); }
Heatmap layer_cam(const CamRequest& req) { return run_as(req, CamMethod::LayerCam); }
Heatmap full_grad(const CamRequest& req) { return run_as(req, CamMethod::FullGrad); }
Heatmap ra_cam(const CamRequest& req) { return run_as(req, CamMethod::RaCam); }

Heatmap with_fgbp_plugin(CamMethod base, const CamRequest& req) {
    if (base == CamMethod::LayerCam) return run_as(req, CamMethod::LayerCamFgbp);
    if (base == CamMethod::FullGrad) return run_as(req, CamMethod::FullGradFgbp);
    throw std::invalid_argument(
        fmt::format("fgbp plug-in supports layer-cam and fullgrad, not '{}'", to_string(base)));
}

Heatmap fuse_layers(const std::vector<Heatmap>& maps, FusionRule rule) {
    if (maps.empty()) throw std::invalid_argument("fuse_layers: empty map list");
    if (maps.size() == 1) return maps.front();
    for (const Heatmap& m : maps) {
        if (!m.values.same_shape(maps.front().values)) {
            throw_shape_error("fuse_layers", m.values, maps.front().values);
        }
    }
    Heatmap out = maps.front();
    if (rule == FusionRule::Max) {
        for (std::size_t i = 1; i < maps.size(); ++i) {
            for (std::int64_t p = 0; p < out.values.numel(); ++p) {
                out.values[p] = std::max(out.values[p], maps[i].values[p]);
            }
        }
    } else {
        const std::int64_t n = out.values.numel();
        std::vector<double> acc(std::size_t(n), 0.0);
        for (const Heatmap& m : maps) {
            for (std::int64_t p = 0; p < n; ++p) acc[std::size_t(p)] += double(m.values[p]);
        }
        for (std::int64_t p = 0; p < n; ++p) {
            out.values[p] = float(acc[std::size_t(p)] / double(maps.size()));
        }
    }
    out.values = normalize_minmax(out.values);
    return out;
}

}  // namespace racam
