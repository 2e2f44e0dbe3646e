#pragma once

#include <string>
#include <vector>

#include "racam/fgbp.hpp"
#include "racam/model.hpp"
#include "racam/tensor.hpp"

namespace racam {

enum class CamMethod {
    GradCam,
    GradCamPP,
    XGradCam,
    AblationCam,
    ScoreCam,
    LayerCam,
    FullGrad,
    RaCam,
    LayerCamFgbp,
    FullGradFgbp,
};

/// Parses names like "ra-cam"; unknown names are rejected with the full
/// list of valid ones.
CamMethod cam_method_from_string(const std::string& name);
const char* to_string(CamMethod method);
std::vector<std::string> cam_method_names();

enum class FusionRule { Max, Mean };

struct CamRequest {
    const ModelState* model = nullptr;
    Tensor image;
    int class_index = 1;
    /// Target activation layer ids. FullGrad aggregates over all conv
    /// layers and ignores this list.
    std::vector<int> layers;
    CamMethod method = CamMethod::RaCam;
    FgbpConfig fgbp;
    FusionRule fusion = FusionRule::Max;
};

/// Saliency map at input resolution, values in [0,1] with max exactly 1
/// unless identically zero.
struct Heatmap {
    Tensor values;  // [1,H,W]
    int class_index = 0;
    CamMethod method = CamMethod::GradCam;
};

Heatmap compute_cam(const CamRequest& req);

/// Same, reusing a recorded forward pass of req.model on req.image —
/// what batch drivers use to share one tape across methods or deltas.
Heatmap compute_cam_with_forward(const CamRequest& req, const ForwardResult& fr);

Heatmap grad_cam(const CamRequest& req);
Heatmap grad_cam_pp(const CamRequest& req);
Heatmap xgrad_cam(const CamRequest& req);
Heatmap ablation_cam(const CamRequest& req);
Heatmap score_cam(const CamRequest& req);
Heatmap layer_cam(const CamRequest& req);
Heatmap full_grad(const CamRequest& req);
Heatmap ra_cam(const CamRequest& req);

/// Base method rerun with every gradient taken from the filtered
/// backward mode; base must be LayerCam or FullGrad.
Heatmap with_fgbp_plugin(CamMethod base, const CamRequest& req);

/// Elementwise maximum (or mean) of same-size maps, renormalized. A
/// single map passes through unchanged.
Heatmap fuse_layers(const std::vector<Heatmap>& maps, FusionRule rule = FusionRule::Max);

/// Stage-end activations for RA-CAM / LayerCam, the deepest stage-end
/// activation for single-layer methods.
std::vector<int> default_layers(const ModelSpec& spec, CamMethod method);

}  // namespace racam
