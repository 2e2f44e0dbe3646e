#pragma once

#include <optional>
#include <string>
#include <vector>

#include "racam/cam.hpp"
#include "racam/data.hpp"
#include "racam/metrics.hpp"
#include "racam/train.hpp"

namespace racam {

/// Which images of a split enter the metric aggregation.
enum class MetricScope { DefectImagesOnly, FullSplit };

const char* scope_name(MetricScope scope);

struct CamOptions {
    CamMethod method = CamMethod::RaCam;
    FgbpConfig fgbp;                 // delta defaults to 50
    std::vector<int> layers;         // empty = per-method default
    FusionRule fusion = FusionRule::Max;
    int class_index = 1;
};

// ---- gen-data ----------------------------------------------------------
struct GenDataArgs {
    GenParams params;
    std::string out_dir;
};
struct GenDataResult {
    int count = 0;
    int defective = 0;
};
GenDataResult cmd_gen_data(const GenDataArgs& args);

// ---- train-cls ---------------------------------------------------------
struct TrainClsArgs {
    std::string data_dir;
    std::string out_dir;
    TrainConfig cfg;
};
struct TrainClsResult {
    std::string model_path;
    std::string report_path;
    TrainResult train;
};
TrainClsResult cmd_train_cls(const TrainClsArgs& args);

// ---- cam ---------------------------------------------------------------
struct CamArgs {
    std::string data_dir;
    std::string model_path;
    std::string out_dir;
    CamOptions cam;
    std::optional<Split> split;  // nullopt = all samples
    int jobs = 1;
};
struct CamResult {
    std::string manifest_path;
    std::string heatmap_dir;
    int n_heatmaps = 0;
    std::vector<int> layers_used;
};
CamResult cmd_cam(const CamArgs& args);

// ---- pseudo-label ------------------------------------------------------
struct PseudoLabelArgs {
    std::string data_dir;
    std::string model_path;     // classifier; negatives get empty masks
    std::string manifest_path;  // heatmap manifest from cmd_cam
    std::string out_dir;
    int min_area = 0;  // 0 = no component filtering
    int jobs = 1;
};
struct PseudoLabelResult {
    std::string mask_dir;
    int n_masks = 0;
    int n_gated = 0;  // classifier-negative images
};
PseudoLabelResult cmd_pseudo_label(const PseudoLabelArgs& args);

// ---- train-seg ---------------------------------------------------------
struct TrainSegArgs {
    std::string data_dir;
    std::string mask_dir;  // pseudo-labels by id
    std::string out_dir;
    TrainConfig cfg;
};
struct TrainSegResult {
    std::string model_path;
    std::string report_path;
    TrainResult train;
};
TrainSegResult cmd_train_seg(const TrainSegArgs& args);

// ---- eval --------------------------------------------------------------
struct EvalArgs {
    std::string data_dir;
    std::string pred_dir;       // predicted masks <id>.pgm, or
    std::string seg_model;      // segmenter weights to predict with
    std::string report_path;    // output JSON ("" = don't write)
    std::optional<Split> split = Split::Test;
    MetricScope scope = MetricScope::DefectImagesOnly;
    AggregateMode aggregate = AggregateMode::Micro;
    int jobs = 1;
    // metadata echoed into the report and the printed table row
    std::string method_name;
    double delta = 0.0;
    std::vector<int> layers;
    bool quiet = false;
};
MetricsReport cmd_eval(const EvalArgs& args);

// ---- sweep-delta -------------------------------------------------------
struct SweepArgs {
    std::string data_dir;
    std::string model_path;
    std::string out_dir;
    std::vector<double> deltas;  // default {0,10,...,90,95}
    CamOptions cam;              // method must be ra-cam or a plug-in
    MetricScope scope = MetricScope::DefectImagesOnly;
    int min_area = 0;
    int jobs = 1;
};
struct SweepRow {
    double delta = 0.0;
    double train_iou = 0.0;
    double test_iou = 0.0;
};
struct SweepResult {
    std::vector<SweepRow> rows;
    std::string csv_path;
    std::string json_path;
};
SweepResult cmd_sweep_delta(const SweepArgs& args);

/// ISO-8601 UTC; honors SOURCE_DATE_EPOCH for byte-reproducible reports.
std::string timestamp_utc();

/// One table row in the tables' column order, percentages with 2
/// decimals: IoU, Precision, Recall, Micro-F1 of the defect class.
std::string format_table_row(const std::string& method, const MetricsReport& report);

}  // namespace racam
