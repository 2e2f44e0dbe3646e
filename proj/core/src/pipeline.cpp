#include "racam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "racam/postprocess.hpp"
#include "racam/serialize.hpp"
#include "racam/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace racam {

const char* scope_name(MetricScope scope) {
    return scope == MetricScope::DefectImagesOnly ? "defect-images-only" : "full-split";
}

std::string timestamp_utc() {
    std::time_t t;
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
        t = std::time_t(std::strtoll(env, nullptr, 10));
    } else {
        t = std::time(nullptr);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string format_table_row(const std::string& method, const MetricsReport& r) {
    const ClassMetrics& d = r.defect();
    return fmt::format("{:<16} {:>8.2f} {:>14.2f} {:>11.2f} {:>13.2f}", method, 100.0 * d.iou,
                       100.0 * d.precision, 100.0 * d.recall, 100.0 * d.f1);
}

namespace {

constexpr const char* kTableHeader =
    "method            IoU(%)   Precision(%)   Recall(%)   Micro-F1(%)";

void write_text(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path));
    out << text;
    if (!out) throw std::runtime_error(fmt::format("write failed for '{}'", path));
}

void write_json(const std::string& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json config_json(const TrainConfig& cfg) {
    return json{{"lr", cfg.lr},       {"momentum", cfg.momentum}, {"batch", cfg.batch},
                {"epochs", cfg.epochs}, {"seed", cfg.seed},         {"flip_h", cfg.flip_h},
                {"flip_v", cfg.flip_v}};
}

json cam_config_json(const CamOptions& cam, const std::vector<int>& layers_used) {
    return json{{"method", to_string(cam.method)},
                {"delta", cam.fgbp.delta},
                {"fgbp_scope", cam.fgbp.scope == FgbpScope::PerChannel ? "per-channel" : "per-layer"},
                {"layers", layers_used},
                {"fusion", cam.fusion == FusionRule::Max ? "max" : "mean"},
                {"class", cam.class_index}};
}

// Round-trip through the 8-bit PGM quantization, so in-memory pipelines
// match file-based ones bitwise.
Tensor quantize8(const Tensor& t) {
    Tensor out = t;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const float v = std::clamp(out[i], 0.0f, 1.0f);
        out[i] = float(std::lround(255.0f * v)) / 255.0f;
    }
    return out;
}

// Ordered parallel map: results land by index, so output is independent
// of scheduling.
template <typename Fn>
void parallel_for_ordered(std::int64_t n, int jobs, Fn fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::future<void>> futs;
    const int workers = int(std::min<std::int64_t>(jobs, n));
    for (int w = 0; w < workers; ++w) {
        futs.push_back(std::async(std::launch::async, [=]() {
            for (std::int64_t i = w; i < n; i += workers) fn(i);
        }));
    }
    for (auto& f : futs) f.get();
}

std::vector<const SampleRecord*> select_samples(const std::vector<SampleRecord>& samples,
                                                std::optional<Split> split) {
    std::vector<const SampleRecord*> out;
    for (const SampleRecord& s : samples) {
        if (!split || split_of(s.id) == *split) out.push_back(&s);
    }
    return out;
}

std::vector<int> resolve_layers(const ModelSpec& spec, const CamOptions& cam) {
    if (!cam.layers.empty()) return cam.layers;
    return default_layers(spec, cam.method);
}

int classifier_argmax(const ModelState& model, const Tensor& image) {
    const Tensor logits = forward_logits(model, image);
    int best = 0;
    for (std::int64_t i = 1; i < logits.numel(); ++i) {
        if (logits[i] > logits[best]) best = int(i);
    }
    return best;
}

std::string split_label(std::optional<Split> split) {
    return split ? split_name(*split) : "all";
}

}  // namespace

GenDataResult cmd_gen_data(const GenDataArgs& args) {
    const std::vector<SampleRecord> samples = generate(args.params);
    save_dataset(samples, args.out_dir);
    GenDataResult res;
    res.count = int(samples.size());
    for (const SampleRecord& s : samples) res.defective += s.label;
    fmt::print("wrote {} samples ({} defective, {} defect-free) to {}\n", res.count, res.defective,
               res.count - res.defective, args.out_dir);
    return res;
}

TrainClsResult cmd_train_cls(const TrainClsArgs& args) {
    const std::vector<SampleRecord> all = load_dataset(args.data_dir);
    const std::vector<SampleRecord> train_set = filter_split(all, Split::Train);
    const std::vector<SampleRecord> val_set = filter_split(all, Split::Val);

    TrainResult tr = train_classifier(tiny_vgg_init(args.cfg.seed), train_set, val_set, args.cfg);
    for (const EpochLog& e : tr.log) {
        fmt::print("epoch {:>3}  loss {:.4f}  val-acc {:.4f}\n", e.epoch, e.train_loss, e.val_metric);
    }
    fmt::print("best epoch {} (val-acc {:.4f})\n", tr.best_epoch, tr.best_metric);

    TrainClsResult res;
    res.model_path = (fs::path(args.out_dir) / "models" / "classifier.rcmw").string();
    fs::create_directories(fs::path(args.out_dir) / "models");
    save_model(tr.state, res.model_path);

    json epochs = json::array();
    for (const EpochLog& e : tr.log) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_metric}});
    }
    const json report = {{"command", "train-cls"},
                         {"version", kVersion},
                         {"dataset", args.data_dir},
                         {"config", config_json(args.cfg)},
                         {"train_size", train_set.size()},
                         {"val_size", val_set.size()},
                         {"epochs", epochs},
                         {"best_epoch", tr.best_epoch},
                         {"best_val_accuracy", tr.best_metric},
                         {"model", res.model_path},
                         {"timestamp", timestamp_utc()}};
    res.report_path = (fs::path(args.out_dir) / "reports" / "train_cls.json").string();
    write_json(res.report_path, report);
    res.train = std::move(tr);
    return res;
}

CamResult cmd_cam(const CamArgs& args) {
    const std::vector<SampleRecord> all = load_dataset(args.data_dir);
    const ModelState model = load_model(args.model_path);
    const std::vector<const SampleRecord*> selected = select_samples(all, args.split);
    const std::vector<int> layers = resolve_layers(model.spec, args.cam);

    const fs::path heat_dir = fs::path(args.out_dir) / "heatmaps";
    fs::create_directories(heat_dir);

    CamRequest base;
    base.model = &model;
    base.class_index = args.cam.class_index;
    base.layers = layers;
    base.method = args.cam.method;
    base.fgbp = args.cam.fgbp;
    base.fusion = args.cam.fusion;

    std::vector<std::string> files(selected.size());
    parallel_for_ordered(std::int64_t(selected.size()), args.jobs, [&](std::int64_t i) {
        CamRequest req = base;
        req.image = selected[std::size_t(i)]->image;
        const Heatmap heat = compute_cam(req);
        const std::string file = (heat_dir / (selected[std::size_t(i)]->id + ".pgm")).string();
        write_pgm(heat.values, file);
        files[std::size_t(i)] = file;
    });

    json entries = json::object();
    for (std::size_t i = 0; i < selected.size(); ++i) {
        entries[selected[i]->id] = {{"file", files[i]},
                                    {"method", to_string(args.cam.method)},
                                    {"delta", args.cam.fgbp.delta},
                                    {"layers", layers}};
    }
    const json manifest = {{"command", "cam"},
                           {"version", kVersion},
                           {"dataset", args.data_dir},
                           {"model", args.model_path},
                           {"split", split_label(args.split)},
                           {"config", cam_config_json(args.cam, layers)},
                           {"heatmaps", entries},
                           {"timestamp", timestamp_utc()}};

    CamResult res;
    res.manifest_path = (fs::path(args.out_dir) / "reports" / "cam_manifest.json").string();
    write_json(res.manifest_path, manifest);
    res.heatmap_dir = heat_dir.string();
    res.n_heatmaps = int(selected.size());
    res.layers_used = layers;
    fmt::print("wrote {} heatmaps ({}, delta {}) to {}\n", res.n_heatmaps, to_string(args.cam.method),
               args.cam.fgbp.delta, res.heatmap_dir);
    return res;
}

PseudoLabelResult cmd_pseudo_label(const PseudoLabelArgs& args) {
    std::ifstream in(args.manifest_path);
    if (!in) {
        throw std::runtime_error(fmt::format("missing heatmap manifest '{}'", args.manifest_path));
    }
    json manifest;
    in >> manifest;

    const std::vector<SampleRecord> all = load_dataset(args.data_dir);
    const ModelState model = load_model(args.model_path);

    std::vector<const SampleRecord*> selected;
    std::vector<std::string> heat_files;
    for (const SampleRecord& s : all) {
        const auto it = manifest.at("heatmaps").find(s.id);
        if (it != manifest.at("heatmaps").end()) {
            selected.push_back(&s);
            heat_files.push_back(it->at("file").get<std::string>());
        }
    }

    const fs::path mask_dir = fs::path(args.out_dir) / "pseudo_masks";
    fs::create_directories(mask_dir);

    std::vector<char> gated(selected.size(), 0);
    parallel_for_ordered(std::int64_t(selected.size()), args.jobs, [&](std::int64_t i) {
        const SampleRecord& s = *selected[std::size_t(i)];
        BinaryMask mask;
        if (classifier_argmax(model, s.image) == 0) {
            mask.values = Tensor(s.image.shape());  // classifier gate: empty mask
            gated[std::size_t(i)] = 1;
        } else {
            const Tensor heat = read_pgm(heat_files[std::size_t(i)]);
            mask = to_mask(heat);
            if (args.min_area > 0) mask = filter_min_area(mask, args.min_area);
        }
        write_pgm(mask.values, (mask_dir / (s.id + ".pgm")).string());
    });

    PseudoLabelResult res;
    res.mask_dir = mask_dir.string();
    res.n_masks = int(selected.size());
    for (char g : gated) res.n_gated += g;

    const json report = {{"command", "pseudo-label"},
                         {"version", kVersion},
                         {"dataset", args.data_dir},
                         {"model", args.model_path},
                         {"manifest", args.manifest_path},
                         {"min_area", args.min_area},
                         {"n_masks", res.n_masks},
                         {"n_gated", res.n_gated},
                         {"timestamp", timestamp_utc()}};
    write_json((fs::path(args.out_dir) / "reports" / "pseudo_label.json").string(), report);
    fmt::print("wrote {} pseudo-masks ({} gated to empty) to {}\n", res.n_masks, res.n_gated,
               res.mask_dir);
    return res;
}

TrainSegResult cmd_train_seg(const TrainSegArgs& args) {
    const std::vector<SampleRecord> all = load_dataset(args.data_dir);

    const auto collect = [&](Split split, std::vector<Tensor>& images, std::vector<Tensor>& masks,
                             bool required) {
        for (const SampleRecord& s : all) {
            if (split_of(s.id) != split) continue;
            const fs::path mask_path = fs::path(args.mask_dir) / (s.id + ".pgm");
            if (!fs::exists(mask_path)) {
                if (required) {
                    throw std::runtime_error(
                        fmt::format("missing pseudo-mask for id '{}' under {}", s.id, args.mask_dir));
                }
                continue;
            }
            Tensor m = read_pgm(mask_path.string());
            for (std::int64_t i = 0; i < m.numel(); ++i) m[i] = m[i] >= 0.5f ? 1.0f : 0.0f;
            images.push_back(s.image);
            masks.push_back(std::move(m));
        }
    };

    std::vector<Tensor> train_images, train_masks, val_images, val_masks;
    collect(Split::Train, train_images, train_masks, true);
    collect(Split::Val, val_images, val_masks, false);

    TrainResult tr = train_segmenter(mini_segnet_init(args.cfg.seed), train_images, train_masks,
                                     val_images, val_masks, args.cfg);
    for (const EpochLog& e : tr.log) {
        fmt::print("epoch {:>3}  loss {:.4f}  val-iou {:.4f}\n", e.epoch, e.train_loss, e.val_metric);
    }

    TrainSegResult res;
    res.model_path = (fs::path(args.out_dir) / "models" / "segmenter.rcmw").string();
    fs::create_directories(fs::path(args.out_dir) / "models");
    save_model(tr.state, res.model_path);

    json epochs = json::array();
    for (const EpochLog& e : tr.log) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_defect_iou", e.val_metric}});
    }
    const json report = {{"command", "train-seg"},
                         {"version", kVersion},
                         {"dataset", args.data_dir},
                         {"pseudo_masks", args.mask_dir},
                         {"config", config_json(args.cfg)},
                         {"train_size", train_images.size()},
                         {"val_size", val_images.size()},
                         {"epochs", epochs},
                         {"best_epoch", tr.best_epoch},
                         {"best_val_defect_iou", tr.best_metric},
                         {"model", res.model_path},
                         {"timestamp", timestamp_utc()}};
    res.report_path = (fs::path(args.out_dir) / "reports" / "train_seg.json").string();
    write_json(res.report_path, report);
    res.train = std::move(tr);
    return res;
}

MetricsReport cmd_eval(const EvalArgs& args) {
    if (args.pred_dir.empty() == args.seg_model.empty()) {
        throw std::invalid_argument("eval: exactly one of pred_dir / seg_model must be given");
    }
    const std::vector<SampleRecord> all = load_dataset(args.data_dir);
    std::vector<const SampleRecord*> selected = select_samples(all, args.split);
    if (args.scope == MetricScope::DefectImagesOnly) {
        std::erase_if(selected, [](const SampleRecord* s) { return s->label == 0; });
    }
    if (selected.empty()) throw std::runtime_error("eval: no images selected");

    ModelState seg;
    if (!args.seg_model.empty()) seg = load_model(args.seg_model);

    std::vector<BinaryMask> preds(selected.size()), gts(selected.size());
    parallel_for_ordered(std::int64_t(selected.size()), args.jobs, [&](std::int64_t i) {
        const SampleRecord& s = *selected[std::size_t(i)];
        if (!args.pred_dir.empty()) {
            const fs::path p = fs::path(args.pred_dir) / (s.id + ".pgm");
            if (!fs::exists(p)) {
                throw std::runtime_error(fmt::format("eval: no prediction for id '{}' under {}", s.id,
                                                     args.pred_dir));
            }
            Tensor m = read_pgm(p.string());
            for (std::int64_t k = 0; k < m.numel(); ++k) m[k] = m[k] >= 0.5f ? 1.0f : 0.0f;
            preds[std::size_t(i)].values = std::move(m);
        } else {
            preds[std::size_t(i)] = segment(seg, s.image);
        }
        gts[std::size_t(i)] = s.mask;
    });

    MetricsReport report = evaluate_set(preds, gts, args.aggregate);
    report.method = args.method_name;
    report.delta = args.delta;
    report.layers = args.layers;
    report.dataset = args.data_dir;

    if (!args.quiet) {
        fmt::print("{}\n{}\n", kTableHeader,
                   format_table_row(args.method_name.empty() ? "eval" : args.method_name, report));
    }

    if (!args.report_path.empty()) {
        const auto cm = [](const ClassMetrics& c) {
            return json{{"iou", c.iou}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}};
        };
        const json doc = {{"command", "eval"},
                          {"version", kVersion},
                          {"method", args.method_name},
                          {"delta", args.delta},
                          {"layers", args.layers},
                          {"dataset", args.data_dir},
                          {"predictions", args.pred_dir.empty() ? args.seg_model : args.pred_dir},
                          {"split", split_label(args.split)},
                          {"scope", scope_name(args.scope)},
                          {"aggregate", args.aggregate == AggregateMode::Micro ? "micro" : "macro"},
                          {"n_images", report.n_images},
                          {"per_class",
                           {{"background", cm(report.per_class[kBackground])},
                            {"defect", cm(report.per_class[kDefect])}}},
                          {"miou", report.miou},
                          {"timestamp", timestamp_utc()}};
        write_json(args.report_path, doc);
    }
    return report;
}

SweepResult cmd_sweep_delta(const SweepArgs& args) {
    const std::vector<SampleRecord> all = load_dataset(args.data_dir);
    const ModelState model = load_model(args.model_path);
    const std::vector<int> layers = resolve_layers(model.spec, args.cam);

    std::vector<double> deltas = args.deltas;
    if (deltas.empty()) {
        for (int d = 0; d <= 90; d += 10) deltas.push_back(d);
        deltas.push_back(95);
    }
    std::sort(deltas.begin(), deltas.end());

    CamRequest base;
    base.model = &model;
    base.class_index = args.cam.class_index;
    base.layers = layers;
    base.method = args.cam.method;
    base.fgbp = args.cam.fgbp;
    base.fusion = args.cam.fusion;

    const Split splits[2] = {Split::Train, Split::Test};
    std::vector<ConfusionCounts> counts[2];
    counts[0].resize(deltas.size());
    counts[1].resize(deltas.size());

    for (int si = 0; si < 2; ++si) {
        std::vector<const SampleRecord*> selected = select_samples(all, splits[si]);
        if (args.scope == MetricScope::DefectImagesOnly) {
            std::erase_if(selected, [](const SampleRecord* s) { return s->label == 0; });
        }
        std::vector<std::vector<ConfusionCounts>> per_image(selected.size());
        parallel_for_ordered(std::int64_t(selected.size()), args.jobs, [&](std::int64_t i) {
            const SampleRecord& s = *selected[std::size_t(i)];
            const ForwardResult fr = forward(model, s.image);
            const Tensor& logits = fr.tape.node(fr.logits_node).value;
            const bool positive = logits[1] > logits[0];
            std::vector<ConfusionCounts> row(deltas.size());
            for (std::size_t di = 0; di < deltas.size(); ++di) {
                BinaryMask mask;
                if (!positive) {
                    mask.values = Tensor(s.image.shape());
                } else {
                    CamRequest req = base;
                    req.image = s.image;
                    req.fgbp.delta = deltas[di];
                    const Heatmap heat = compute_cam_with_forward(req, fr);
                    mask = to_mask(quantize8(heat.values));
                    if (args.min_area > 0) mask = filter_min_area(mask, args.min_area);
                }
                row[di] = confusion(mask, s.mask);
            }
            per_image[std::size_t(i)] = std::move(row);
        });
        for (const auto& row : per_image) {
            for (std::size_t di = 0; di < deltas.size(); ++di) counts[si][di] += row[di];
        }
    }

    SweepResult res;
    std::string csv = "delta,train_iou,test_iou\n";
    json rows = json::array();
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        SweepRow row;
        row.delta = deltas[di];
        row.train_iou = metrics(counts[0][di]).defect().iou;
        row.test_iou = metrics(counts[1][di]).defect().iou;
        res.rows.push_back(row);
        csv += fmt::format("{},{},{}\n", row.delta, row.train_iou, row.test_iou);
        rows.push_back({{"delta", row.delta}, {"train_iou", row.train_iou}, {"test_iou", row.test_iou}});
        fmt::print("delta {:>5}  train-iou {:.4f}  test-iou {:.4f}\n", row.delta, row.train_iou,
                   row.test_iou);
    }

    res.csv_path = (fs::path(args.out_dir) / "sweeps" / "delta_sweep.csv").string();
    write_text(res.csv_path, csv);
    const json doc = {{"command", "sweep-delta"},
                      {"version", kVersion},
                      {"dataset", args.data_dir},
                      {"model", args.model_path},
                      {"config", cam_config_json(args.cam, layers)},
                      {"scope", scope_name(args.scope)},
                      {"min_area", args.min_area},
                      {"rows", rows},
                      {"timestamp", timestamp_utc()}};
    res.json_path = (fs::path(args.out_dir) / "sweeps" / "delta_sweep.json").string();
    write_json(res.json_path, doc);
    return res;
}

}  // namespace racam
