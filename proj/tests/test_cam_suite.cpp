#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "racam/cam.hpp"
#include "racam/ops.hpp"
#include "racam/tape.hpp"
#include "test_helpers.hpp"

using namespace racam;
using namespace racam::test;

namespace {

// Step-by-step recompositions of each method, kept deliberately plain.

Tensor oracle_finalize(const Tensor& map, int h, int w) {
    return normalize_minmax(bilinear_resize(relu(map), h, w));
}

Tensor weighted_sum(const std::vector<double>& w, const Tensor& a) {
    const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
    Tensor out({1, a.dim(1), a.dim(2)});
    std::vector<double> acc(std::size_t(hw), 0.0);
    for (int k = 0; k < a.dim(0); ++k) {
        for (std::int64_t p = 0; p < hw; ++p) acc[std::size_t(p)] += w[std::size_t(k)] * double(a[k * hw + p]);
    }
    for (std::int64_t p = 0; p < hw; ++p) out[p] = float(acc[std::size_t(p)]);
    return out;
}

Tensor oracle_max_fuse(const std::vector<Tensor>& maps) {
    Tensor out = maps.front();
    for (std::size_t i = 1; i < maps.size(); ++i) {
        for (std::int64_t p = 0; p < out.numel(); ++p) out[p] = std::max(out[p], maps[i][p]);
    }
    return normalize_minmax(out);
}

struct Fixture {
    ModelState model;
    Tensor image;
    CamRequest req;

    explicit Fixture(std::uint64_t seed, float slope = 0.01f) : model(small_stack(seed, slope)) {
        SplitMix64 rng(seed * 31 + 5);
        image = random_tensor({1, 16, 24}, rng, 0.0f, 1.0f);
        req.model = &model;
        req.image = image;
        req.class_index = 1;
        req.layers = {model.spec.stage_end_act.back()};
    }
};

std::int64_t support_is_subset(const Tensor& small, const Tensor& big) {
    std::int64_t violations = 0;
    for (std::int64_t p = 0; p < small.numel(); ++p) {
        if (small[p] != 0.0f && big[p] == 0.0f) ++violations;
    }
    return violations;
}

}  // namespace

TEST_SUITE_BEGIN("cam-suite");

TEST_CASE("method names parse and unknown names list the alternatives") {
    CHECK(cam_method_from_string("ra-cam") == CamMethod::RaCam);
    CHECK(cam_method_from_string("grad-cam++") == CamMethod::GradCamPP);
    CHECK(std::string(to_string(CamMethod::LayerCamFgbp)) == "layer-cam+fgbp");
    try {
        cam_method_from_string("gradcam");
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("grad-cam") != std::string::npos);
        CHECK(std::string(e.what()).find("score-cam") != std::string::npos);
    }
}

TEST_CASE("request validation rejects bad layers, classes and the segmenter") {
    Fixture f(1);
    f.req.method = CamMethod::GradCam;
    f.req.layers = {};
    CHECK_THROWS_AS(compute_cam(f.req), std::invalid_argument);
    f.req.layers = {0};  // conv, not activation
    CHECK_THROWS_AS(compute_cam(f.req), std::invalid_argument);
    f.req.layers = {1};
    f.req.class_index = 5;
    CHECK_THROWS_AS(compute_cam(f.req), std::invalid_argument);

    const ModelState seg = mini_segnet_init(1);
    CamRequest sreq = f.req;
    sreq.model = &seg;
    sreq.class_index = 1;
    CHECK_THROWS_AS(compute_cam(sreq), std::invalid_argument);
}

TEST_CASE("grad-cam equals its step-by-step recomputation") {
    Fixture f(42);
    f.req.method = CamMethod::GradCam;

    const ForwardResult fr = forward(f.model, f.image);
    const Tensor g = backward(fr.tape, 1, PropagationMode::standard()).at(f.req.layers[0]);
    const Tensor& a = fr.tape.node(fr.layer_node[std::size_t(f.req.layers[0])]).value;
    const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
    std::vector<double> w(std::size_t(a.dim(0)), 0.0);
    for (int k = 0; k < a.dim(0); ++k) {
        double s = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) s += double(g[k * hw + p]);
        w[std::size_t(k)] = s / double(hw);
    }
    const Tensor expected = oracle_finalize(weighted_sum(w, a), 16, 24);

    const Heatmap got = grad_cam(f.req);
    CHECK(max_abs_diff(got.values, expected) < 1e-6f);
    CHECK(got.class_index == 1);
    CHECK(got.method == CamMethod::GradCam);
}

TEST_CASE("grad-cam with a zeroed head row produces an all-zero heatmap") {
    Fixture f(7);
    f.req.method = CamMethod::GradCam;
    Tensor& head_w = f.model.params[f.model.params.size() - 2];
    for (int j = 0; j < head_w.dim(1); ++j) head_w[head_w.dim(1) + j] = 0.0f;  // class-1 row
    const Heatmap got = grad_cam(f.req);
    CHECK(got.values.count_nonzero() == 0);
}

TEST_CASE("grad-cam++ equals a literal transcription of its formulas") {
    Fixture f(42);
    f.req.method = CamMethod::GradCamPP;

    const ForwardResult fr = forward(f.model, f.image);
    const Tensor g = backward(fr.tape, 1, PropagationMode::standard()).at(f.req.layers[0]);
    const Tensor& a = fr.tape.node(fr.layer_node[std::size_t(f.req.layers[0])]).value;
    const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
    std::vector<double> w(std::size_t(a.dim(0)), 0.0);
    for (int k = 0; k < a.dim(0); ++k) {
        double s3 = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) {
            s3 += double(a[k * hw + p]) * std::pow(double(g[k * hw + p]), 3.0);
        }
        double wk = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) {
            const double gv = double(g[k * hw + p]);
            const double den = 2.0 * gv * gv + s3;
            const double alpha = den != 0.0 ? gv * gv / den : 0.0;
            wk += alpha * std::max(gv, 0.0);
        }
        w[std::size_t(k)] = wk;
    }
    const Tensor expected = oracle_finalize(weighted_sum(w, a), 16, 24);
    CHECK(max_abs_diff(grad_cam_pp(f.req).values, expected) < 1e-6f);
}

TEST_CASE("xgrad-cam equals its transcription") {
    Fixture f(42);
    f.req.method = CamMethod::XGradCam;

    const ForwardResult fr = forward(f.model, f.image);
    const Tensor g = backward(fr.tape, 1, PropagationMode::standard()).at(f.req.layers[0]);
    const Tensor& a = fr.tape.node(fr.layer_node[std::size_t(f.req.layers[0])]).value;
    const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
    std::vector<double> w(std::size_t(a.dim(0)), 0.0);
    for (int k = 0; k < a.dim(0); ++k) {
        double num = 0.0, den = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) {
            num += double(g[k * hw + p]) * double(a[k * hw + p]);
            den += double(a[k * hw + p]);
        }
        w[std::size_t(k)] = num / (den + 1e-8);
    }
    const Tensor expected = oracle_finalize(weighted_sum(w, a), 16, 24);
    CHECK(max_abs_diff(xgrad_cam(f.req).values, expected) < 1e-6f);
}

TEST_CASE("ablation-cam equals the brute-force ablation loop") {
    Fixture f(42);
    f.req.method = CamMethod::AblationCam;
    // channel 2 of the last stage gets a zeroed head column: no influence
    Tensor& head_w = f.model.params[f.model.params.size() - 2];
    head_w[2] = 0.0f;
    head_w[head_w.dim(1) + 2] = 0.0f;

    const int layer = f.req.layers[0];
    const ForwardResult fr = forward(f.model, f.image);
    const Tensor& a = fr.tape.node(fr.layer_node[std::size_t(layer)]).value;
    const double y = double(fr.tape.node(fr.logits_node).value[1]);
    const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
    std::vector<double> w(std::size_t(a.dim(0)), 0.0);
    for (int k = 0; k < a.dim(0); ++k) {
        Tensor ablated = a;
        for (std::int64_t p = 0; p < hw; ++p) ablated[k * hw + p] = 0.0f;
        const Tensor yk = forward_from(f.model, layer, ablated);
        w[std::size_t(k)] = (y - double(yk[1])) / (std::abs(y) + 1e-8);
    }
    CHECK(w[2] == 0.0);  // the severed channel
    const Tensor expected = oracle_finalize(weighted_sum(w, a), 16, 24);
    CHECK(max_abs_diff(ablation_cam(f.req).values, expected) < 1e-6f);
}

TEST_CASE("score-cam equals the independent masking loop") {
    Fixture f(42);
    f.req.method = CamMethod::ScoreCam;
    // zero out filter 1 of the last conv: its activation map is constant 0
    const int conv_layer = f.req.layers[0] - 1;
    const int pi = f.model.layer_param[std::size_t(conv_layer)];
    Tensor& cw = f.model.params[std::size_t(pi)];
    const std::int64_t per_filter = cw.numel() / cw.dim(0);
    for (std::int64_t i = 0; i < per_filter; ++i) cw[1 * per_filter + i] = 0.0f;
    f.model.params[std::size_t(pi) + 1][1] = 0.0f;

    const int layer = f.req.layers[0];
    const ForwardResult fr = forward(f.model, f.image);
    const Tensor& a = fr.tape.node(fr.layer_node[std::size_t(layer)]).value;
    const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
    const double s0 = double(softmax(forward_logits(f.model, Tensor({1, 16, 24})))[1]);
    std::vector<double> w(std::size_t(a.dim(0)), 0.0);
    for (int k = 0; k < a.dim(0); ++k) {
        Tensor chan({1, a.dim(1), a.dim(2)});
        for (std::int64_t p = 0; p < hw; ++p) chan[p] = a[k * hw + p];
        const Tensor mask = bilinear_resize(normalize_minmax(chan), 16, 24);
        const Tensor masked = mul(f.image, mask);
        w[std::size_t(k)] = double(softmax(forward_logits(f.model, masked))[1]) - s0;
    }
    CHECK(w[1] == 0.0);  // all-zero activation channel
    const Tensor expected = oracle_finalize(weighted_sum(w, a), 16, 24);
    CHECK(max_abs_diff(score_cam(f.req).values, expected) < 1e-6f);
}

TEST_CASE("layer-cam equals its transcription across multiple layers") {
    Fixture f(42);
    f.req.method = CamMethod::LayerCam;
    f.req.layers = f.model.spec.stage_end_act;

    const ForwardResult fr = forward(f.model, f.image);
    const auto grads = backward(fr.tape, 1, PropagationMode::standard());
    std::vector<Tensor> maps;
    for (int layer : f.req.layers) {
        const Tensor& a = fr.tape.node(fr.layer_node[std::size_t(layer)]).value;
        const Tensor& g = grads.at(layer);
        Tensor m({1, a.dim(1), a.dim(2)});
        const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
        std::vector<double> acc(std::size_t(hw), 0.0);
        for (int k = 0; k < a.dim(0); ++k) {
            for (std::int64_t p = 0; p < hw; ++p) {
                acc[std::size_t(p)] += std::max(double(g[k * hw + p]), 0.0) * double(a[k * hw + p]);
            }
        }
        for (std::int64_t p = 0; p < hw; ++p) m[p] = float(acc[std::size_t(p)]);
        maps.push_back(oracle_finalize(m, 16, 24));
    }
    const Tensor expected = oracle_max_fuse(maps);
    CHECK(max_abs_diff(layer_cam(f.req).values, expected) < 1e-6f);
}

TEST_CASE("layer-cam is zero when every gradient at the layer is negative") {
    Fixture f(8);
    f.req.method = CamMethod::LayerCam;
    Tensor& head_w = f.model.params[f.model.params.size() - 2];
    SplitMix64 rng(88);
    for (int j = 0; j < head_w.dim(1); ++j) {
        head_w[head_w.dim(1) + j] = -rng.uniform(0.2f, 1.0f);  // class-1 row all negative
    }
    f.model.params.back() = Tensor({2});
    const Heatmap got = layer_cam(f.req);
    CHECK(got.values.count_nonzero() == 0);
}

TEST_CASE("fullgrad equals term-by-term accumulation and its zero-bias reduction") {
    Fixture f(42);
    f.req.method = CamMethod::FullGrad;

    const ForwardResult fr = forward(f.model, f.image);
    Tensor seed({2});
    seed[1] = 1.0f;
    const std::vector<Tensor> grads =
        backward_nodes(fr.tape, fr.logits_node, seed, PropagationMode::standard());

    std::vector<double> acc(std::size_t(16 * 24), 0.0);
    const auto add_term = [&](const Tensor& t) {
        const Tensor psi = bilinear_resize(normalize_minmax(abs(t)), 16, 24);
        for (std::int64_t p = 0; p < psi.numel(); ++p) acc[std::size_t(p)] += double(psi[p]);
    };
    add_term(mul(f.image, grads[std::size_t(fr.input_node)]));
    for (int li = 0; li < int(f.model.spec.layers.size()); ++li) {
        if (f.model.spec.layers[std::size_t(li)].kind != LayerKind::Conv) continue;
        const Tensor& g = grads[std::size_t(fr.layer_node[std::size_t(li)])];
        const Tensor& bias = f.model.params[std::size_t(f.model.layer_param[std::size_t(li)] + 1)];
        const std::int64_t hw = std::int64_t(g.dim(1)) * g.dim(2);
        for (int k = 0; k < g.dim(0); ++k) {
            Tensor term({1, g.dim(1), g.dim(2)});
            for (std::int64_t p = 0; p < hw; ++p) term[p] = bias[k] * g[k * hw + p];
            add_term(term);
        }
    }
    Tensor s({1, 16, 24});
    for (std::int64_t p = 0; p < s.numel(); ++p) s[p] = float(acc[std::size_t(p)]);
    const Tensor expected = oracle_finalize(s, 16, 24);
    CHECK(max_abs_diff(full_grad(f.req).values, expected) < 1e-6f);

    // all conv biases zero: only the input term remains
    Fixture z(42);
    z.req.method = CamMethod::FullGrad;
    for (int li = 0; li < int(z.model.spec.layers.size()); ++li) {
        if (z.model.spec.layers[std::size_t(li)].kind != LayerKind::Conv) continue;
        const int pi = z.model.layer_param[std::size_t(li)];
        z.model.params[std::size_t(pi) + 1] = Tensor(z.model.params[std::size_t(pi) + 1].shape());
    }
    const ForwardResult zfr = forward(z.model, z.image);
    const std::vector<Tensor> zgrads =
        backward_nodes(zfr.tape, zfr.logits_node, seed, PropagationMode::standard());
    const Tensor input_term =
        bilinear_resize(normalize_minmax(abs(mul(z.image, zgrads[std::size_t(zfr.input_node)]))), 16, 24);
    CHECK(max_abs_diff(full_grad(z.req).values, oracle_finalize(input_term, 16, 24)) < 1e-6f);

    // zero input and zero biases: zero map
    z.req.image = Tensor({1, 16, 24});
    CHECK(full_grad(z.req).values.count_nonzero() == 0);
}

TEST_CASE("ra-cam equals filtered_gradient composed with the weighting rule") {
    Fixture f(42);
    f.req.method = CamMethod::RaCam;
    f.req.layers = f.model.spec.stage_end_act;
    f.req.fgbp.delta = 50.0;

    const ForwardResult fr = forward(f.model, f.image);
    std::vector<Tensor> maps;
    for (int layer : f.req.layers) {
        const Tensor rel = filtered_gradient(f.model, f.image, 1, layer, f.req.fgbp);
        const Tensor& a = fr.tape.node(fr.layer_node[std::size_t(layer)]).value;
        const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
        Tensor m({1, a.dim(1), a.dim(2)});
        std::vector<double> acc(std::size_t(hw), 0.0);
        for (int k = 0; k < a.dim(0); ++k) {
            for (std::int64_t p = 0; p < hw; ++p) {
                acc[std::size_t(p)] += double(rel[k * hw + p]) * double(a[k * hw + p]);
            }
        }
        for (std::int64_t p = 0; p < hw; ++p) m[p] = float(acc[std::size_t(p)]);
        maps.push_back(oracle_finalize(m, 16, 24));
    }
    const Tensor expected = oracle_max_fuse(maps);
    CHECK(max_abs_diff(ra_cam(f.req).values, expected) < 1e-6f);
}

TEST_CASE("ra-cam at delta=0 on the final stage reduces to layer-cam") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Fixture f(seed);
        f.req.layers = {f.model.spec.stage_end_act.back()};
        f.req.fgbp.delta = 0.0;
        f.req.method = CamMethod::RaCam;
        const Heatmap ra = ra_cam(f.req);
        const Heatmap lc = layer_cam(f.req);
        CHECK(max_abs_diff(ra.values, lc.values) < 1e-6f);
    }
}

TEST_CASE("ra-cam with non-positive gradients at the layer is zero") {
    Fixture f(9);
    f.req.method = CamMethod::RaCam;
    Tensor& head_w = f.model.params[f.model.params.size() - 2];
    SplitMix64 rng(99);
    for (int j = 0; j < head_w.dim(1); ++j) head_w[head_w.dim(1) + j] = -rng.uniform(0.2f, 1.0f);
    f.model.params.back() = Tensor({2});
    CHECK(ra_cam(f.req).values.count_nonzero() == 0);
}

TEST_CASE("ra-cam support shrinks as delta grows at the final-stage layer") {
    // The nesting is a theorem only where no activation sits between the
    // target and the logits: there the arriving gradient is shared across
    // deltas and a higher percentile keeps a subset of it. Chained
    // shallower targets can flip gradient signs locally.
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Fixture f(seed, /*slope=*/0.0f);
        f.req.method = CamMethod::RaCam;
        f.req.layers = {f.model.spec.stage_end_act.back()};
        f.req.fgbp.delta = 25.0;
        const Tensor wide = ra_cam(f.req).values;
        f.req.fgbp.delta = 75.0;
        const Tensor narrow = ra_cam(f.req).values;
        CHECK(support_is_subset(narrow, wide) == 0);
    }
}

TEST_CASE("fgbp plug-in at delta=0 equals the base method under guided gradients") {
    Fixture f(42);
    f.req.layers = f.model.spec.stage_end_act;
    f.req.fgbp.delta = 0.0;
    f.req.method = CamMethod::LayerCamFgbp;

    const ForwardResult fr = forward(f.model, f.image);
    const auto grads = backward(fr.tape, 1, PropagationMode::guided());
    std::vector<Tensor> maps;
    for (int layer : f.req.layers) {
        const Tensor& a = fr.tape.node(fr.layer_node[std::size_t(layer)]).value;
        const Tensor& g = grads.at(layer);
        const std::int64_t hw = std::int64_t(a.dim(1)) * a.dim(2);
        Tensor m({1, a.dim(1), a.dim(2)});
        std::vector<double> acc(std::size_t(hw), 0.0);
        for (int k = 0; k < a.dim(0); ++k) {
            for (std::int64_t p = 0; p < hw; ++p) {
                acc[std::size_t(p)] += std::max(double(g[k * hw + p]), 0.0) * double(a[k * hw + p]);
            }
        }
        for (std::int64_t p = 0; p < hw; ++p) m[p] = float(acc[std::size_t(p)]);
        maps.push_back(oracle_finalize(m, 16, 24));
    }
    CHECK(max_abs_diff(with_fgbp_plugin(CamMethod::LayerCam, f.req).values, oracle_max_fuse(maps)) <
          1e-6f);

    CHECK_THROWS_AS(with_fgbp_plugin(CamMethod::GradCam, f.req), std::invalid_argument);
}

TEST_CASE("fgbp plug-in at delta=100 has support inside the base method's support") {
    // Asserted at the final-stage layer, where the plug-in filters the
    // same arriving gradient the base method sees.
    Fixture f(13, /*slope=*/0.0f);
    f.req.layers = {f.model.spec.stage_end_act.back()};

    f.req.method = CamMethod::LayerCam;
    const Tensor base = layer_cam(f.req).values;
    f.req.method = CamMethod::LayerCamFgbp;
    f.req.fgbp.delta = 100.0;
    const Tensor plugged = with_fgbp_plugin(CamMethod::LayerCam, f.req).values;
    CHECK(support_is_subset(plugged, base) == 0);
}

TEST_CASE("ablation-cam and score-cam never run a reverse sweep") {
    Fixture f(3);
    const std::uint64_t before = backward_call_count();
    f.req.method = CamMethod::AblationCam;
    ablation_cam(f.req);
    f.req.method = CamMethod::ScoreCam;
    score_cam(f.req);
    CHECK(backward_call_count() == before);
    f.req.method = CamMethod::GradCam;
    grad_cam(f.req);
    CHECK(backward_call_count() == before + 1);
}

TEST_CASE("heatmaps live in [0,1] with max exactly 1 unless empty") {
    Fixture f(21);
    for (CamMethod method :
         {CamMethod::GradCam, CamMethod::GradCamPP, CamMethod::XGradCam, CamMethod::AblationCam,
          CamMethod::ScoreCam, CamMethod::LayerCam, CamMethod::FullGrad, CamMethod::RaCam,
          CamMethod::LayerCamFgbp, CamMethod::FullGradFgbp}) {
        f.req.method = method;
        f.req.layers = default_layers(f.model.spec, method);
        const Heatmap h = compute_cam(f.req);
        CHECK(h.values.shape() == std::vector<int>{1, 16, 24});
        CHECK(h.values.min() >= 0.0f);
        if (h.values.count_nonzero() > 0) {
            CHECK(h.values.max() == 1.0f);
        }
    }
}

TEST_CASE("relabeling channels leaves every heatmap unchanged") {
    Fixture f(17);
    // permute the 4 output channels of the last conv and the head columns
    const int perm[4] = {2, 0, 3, 1};
    ModelState permuted = f.model;
    const int conv_layer = f.model.spec.stage_end_act.back() - 1;
    const int pi = f.model.layer_param[std::size_t(conv_layer)];
    const Tensor& w_orig = f.model.params[std::size_t(pi)];
    const Tensor& b_orig = f.model.params[std::size_t(pi) + 1];
    Tensor& w_new = permuted.params[std::size_t(pi)];
    Tensor& b_new = permuted.params[std::size_t(pi) + 1];
    const std::int64_t per_filter = w_orig.numel() / w_orig.dim(0);
    for (int k = 0; k < 4; ++k) {
        for (std::int64_t i = 0; i < per_filter; ++i) {
            w_new[k * per_filter + i] = w_orig[perm[k] * per_filter + i];
        }
        b_new[k] = b_orig[perm[k]];
    }
    const Tensor& hw_orig = f.model.params[f.model.params.size() - 2];
    Tensor& hw_new = permuted.params[permuted.params.size() - 2];
    for (int r = 0; r < 2; ++r) {
        for (int k = 0; k < 4; ++k) hw_new[r * 4 + k] = hw_orig[r * 4 + perm[k]];
    }
    // sanity: the function is unchanged
    CHECK(max_abs_diff(forward_logits(permuted, f.image), forward_logits(f.model, f.image)) < 1e-6f);

    for (CamMethod method :
         {CamMethod::GradCam, CamMethod::GradCamPP, CamMethod::XGradCam, CamMethod::AblationCam,
          CamMethod::ScoreCam, CamMethod::LayerCam, CamMethod::FullGrad, CamMethod::RaCam}) {
        CamRequest a = f.req;
        a.method = method;
        a.layers = default_layers(f.model.spec, method);
        CamRequest b = a;
        b.model = &permuted;
        CHECK(max_abs_diff(compute_cam(a).values, compute_cam(b).values) < 1e-6f);
    }
}

TEST_CASE("fuse_layers: identity, idempotence and disjoint bumps") {
    Heatmap one;
    one.values = Tensor::from_data({1, 2, 2}, {0.0f, 0.25f, 0.5f, 1.0f});
    CHECK(bitwise_equal(fuse_layers({one}).values, one.values));
    CHECK(bitwise_equal(fuse_layers({one, one}).values, one.values));
    CHECK(bitwise_equal(fuse_layers({one, one}, FusionRule::Mean).values, one.values));

    Heatmap left, right;
    left.values = Tensor::from_data({1, 1, 4}, {1.0f, 0.0f, 0.0f, 0.0f});
    right.values = Tensor::from_data({1, 1, 4}, {0.0f, 0.0f, 0.0f, 1.0f});
    const Tensor fused = fuse_layers({left, right}).values;
    CHECK(fused[0] == 1.0f);
    CHECK(fused[1] == 0.0f);
    CHECK(fused[2] == 0.0f);
    CHECK(fused[3] == 1.0f);

    CHECK_THROWS_AS(fuse_layers({}), std::invalid_argument);
    Heatmap other;
    other.values = Tensor({1, 2, 3});
    CHECK_THROWS_AS(fuse_layers({left, other}), std::invalid_argument);
}

TEST_SUITE_END();
