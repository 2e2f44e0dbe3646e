#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "racam/pipeline.hpp"
#include "racam/version.hpp"

using json = nlohmann::json;
using namespace racam;

namespace {

// Precedence: explicit flags > --config file > built-in defaults. The
// config file holds one JSON object per subcommand, keyed by long flag
// name without dashes.
json load_config_file(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in) throw std::runtime_error(fmt::format("cannot open config file '{}'", argv[i + 1]));
            json cfg;
            in >> cfg;
            return cfg;
        }
    }
    return json::object();
}

template <typename T>
void apply_config(const json& cfg, const std::string& section, const std::string& key, CLI::Option* opt,
                  T& value) {
    if (opt->count() > 0) return;  // explicit flag wins
    if (!cfg.contains(section)) return;
    const json& s = cfg.at(section);
    if (s.contains(key)) value = s.at(key).get<T>();
}

std::vector<int> parse_layers(const std::string& text) {
    if (text.empty() || text == "auto") return {};
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t comma = text.find(',', pos);
        out.push_back(std::stoi(text.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::vector<double> parse_deltas(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t comma = text.find(',', pos);
        out.push_back(std::stod(text.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::optional<Split> parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    if (name == "all") return std::nullopt;
    throw CLI::ValidationError("--split", "must be train, val, test or all");
}

MetricScope parse_scope(const std::string& name) {
    if (name == "defect-only") return MetricScope::DefectImagesOnly;
    if (name == "full") return MetricScope::FullSplit;
    throw CLI::ValidationError("--scope", "must be defect-only or full");
}

FgbpScope parse_fgbp_scope(const std::string& name) {
    if (name == "per-channel") return FgbpScope::PerChannel;
    if (name == "per-layer") return FgbpScope::PerLayer;
    throw CLI::ValidationError("--fgbp-scope", "must be per-channel or per-layer");
}

FusionRule parse_fusion(const std::string& name) {
    if (name == "max") return FusionRule::Max;
    if (name == "mean") return FusionRule::Mean;
    throw CLI::ValidationError("--fusion", "must be max or mean");
}

struct CamFlags {
    std::string method = "ra-cam";
    double delta = 50.0;
    std::string fgbp_scope = "per-channel";
    std::string layers = "auto";
    std::string fusion = "max";
    int class_index = 1;

    CamOptions to_options() const {
        CamOptions o;
        o.method = cam_method_from_string(method);
        o.fgbp.delta = delta;
        o.fgbp.scope = parse_fgbp_scope(fgbp_scope);
        o.layers = parse_layers(layers);
        o.fusion = parse_fusion(fusion);
        o.class_index = class_index;
        return o;
    }
};

void add_cam_flags(CLI::App* cmd, const json& cfg, const std::string& section, CamFlags& flags,
                   std::vector<std::function<void()>>& late) {
    auto* m = cmd->add_option("--method", flags.method, "saliency method")->capture_default_str();
    auto* d = cmd->add_option("--delta", flags.delta, "FGBP percentile in [0,100]")->capture_default_str();
    auto* s = cmd->add_option("--fgbp-scope", flags.fgbp_scope, "per-channel|per-layer")->capture_default_str();
    auto* l = cmd->add_option("--layers", flags.layers, "comma list of layer ids, or auto")->capture_default_str();
    auto* f = cmd->add_option("--fusion", flags.fusion, "max|mean multi-layer fusion")->capture_default_str();
    auto* c = cmd->add_option("--class", flags.class_index, "class index")->capture_default_str();
    late.push_back([&, m, d, s, l, f, c, section]() {
        apply_config(cfg, section, "method", m, flags.method);
        apply_config(cfg, section, "delta", d, flags.delta);
        apply_config(cfg, section, "fgbp-scope", s, flags.fgbp_scope);
        apply_config(cfg, section, "layers", l, flags.layers);
        apply_config(cfg, section, "fusion", f, flags.fusion);
        apply_config(cfg, section, "class", c, flags.class_index);
    });
}

void add_train_flags(CLI::App* cmd, const json& cfg, const std::string& section, TrainConfig& tc,
                     std::vector<std::function<void()>>& late) {
    auto* lr = cmd->add_option("--lr", tc.lr, "learning rate")->capture_default_str();
    auto* mom = cmd->add_option("--momentum", tc.momentum, "momentum coefficient")->capture_default_str();
    auto* b = cmd->add_option("--batch", tc.batch, "batch size")->capture_default_str();
    auto* e = cmd->add_option("--epochs", tc.epochs, "training epochs")->capture_default_str();
    auto* s = cmd->add_option("--seed", tc.seed, "PRNG seed")->capture_default_str();
    auto* fh = cmd->add_flag("--flip-h,!--no-flip-h", tc.flip_h, "horizontal flip augmentation");
    auto* fv = cmd->add_flag("--flip-v,!--no-flip-v", tc.flip_v, "vertical flip augmentation");
    late.push_back([&, lr, mom, b, e, s, fh, fv, section]() {
        apply_config(cfg, section, "lr", lr, tc.lr);
        apply_config(cfg, section, "momentum", mom, tc.momentum);
        apply_config(cfg, section, "batch", b, tc.batch);
        apply_config(cfg, section, "epochs", e, tc.epochs);
        apply_config(cfg, section, "seed", s, tc.seed);
        apply_config(cfg, section, "flip-h", fh, tc.flip_h);
        apply_config(cfg, section, "flip-v", fv, tc.flip_v);
    });
}

}  // namespace

int main(int argc, char** argv) {
    try {
        const json cfg = load_config_file(argc, argv);
        std::vector<std::function<void()>> late;  // config layering, run after parse

        CLI::App app{"weakly-supervised defect segmentation toolkit"};
        app.set_version_flag("--version", std::string(kVersion));
        app.require_subcommand(1);
        std::string config_path;
        app.add_option("--config", config_path, "JSON config file; flags override file values");

        // gen-data
        auto* gen = app.add_subcommand("gen-data", "generate a synthetic defect dataset");
        gen->fallthrough();
        GenDataArgs gen_args;
        {
            gen->add_option("--out", gen_args.out_dir, "output dataset directory")->required();
            auto* c = gen->add_option("--count", gen_args.params.count)->capture_default_str();
            auto* s = gen->add_option("--seed", gen_args.params.seed)->capture_default_str();
            auto* r = gen->add_option("--defect-rate", gen_args.params.defect_rate)->capture_default_str();
            auto* ht = gen->add_option("--height", gen_args.params.height)->capture_default_str();
            auto* wd = gen->add_option("--width", gen_args.params.width)->capture_default_str();
            late.push_back([&, c, s, r, ht, wd]() {
                apply_config(cfg, "gen-data", "count", c, gen_args.params.count);
                apply_config(cfg, "gen-data", "seed", s, gen_args.params.seed);
                apply_config(cfg, "gen-data", "defect-rate", r, gen_args.params.defect_rate);
                apply_config(cfg, "gen-data", "height", ht, gen_args.params.height);
                apply_config(cfg, "gen-data", "width", wd, gen_args.params.width);
            });
        }

        // train-cls
        auto* tcls = app.add_subcommand("train-cls", "train the classifier (stage one)");
        tcls->fallthrough();
        TrainClsArgs tcls_args;
        tcls->add_option("--data", tcls_args.data_dir, "dataset directory")->required();
        tcls->add_option("--out", tcls_args.out_dir, "artifact directory")->required();
        add_train_flags(tcls, cfg, "train-cls", tcls_args.cfg, late);

        // cam
        auto* cam = app.add_subcommand("cam", "generate defect-class heatmaps");
        cam->fallthrough();
        CamArgs cam_args;
        CamFlags cam_flags;
        std::string cam_split = "test";
        cam->add_option("--data", cam_args.data_dir)->required();
        cam->add_option("--model", cam_args.model_path, "classifier weights")->required();
        cam->add_option("--out", cam_args.out_dir)->required();
        cam->add_option("--split", cam_split, "train|val|test|all")->capture_default_str();
        cam->add_option("--jobs", cam_args.jobs)->capture_default_str();
        add_cam_flags(cam, cfg, "cam", cam_flags, late);

        // pseudo-label
        auto* pl = app.add_subcommand("pseudo-label", "Otsu-binarize heatmaps into pseudo-masks");
        pl->fallthrough();
        PseudoLabelArgs pl_args;
        pl->add_option("--data", pl_args.data_dir)->required();
        pl->add_option("--model", pl_args.model_path, "classifier weights (gates negatives)")->required();
        pl->add_option("--manifest", pl_args.manifest_path, "heatmap manifest JSON")->required();
        pl->add_option("--out", pl_args.out_dir)->required();
        auto* pl_area = pl->add_option("--min-area", pl_args.min_area, "drop components below this size")
                            ->capture_default_str();
        pl->add_option("--jobs", pl_args.jobs)->capture_default_str();
        late.push_back([&, pl_area]() { apply_config(cfg, "pseudo-label", "min-area", pl_area, pl_args.min_area); });

        // train-seg
        auto* tseg = app.add_subcommand("train-seg", "train the segmenter on pseudo-labels (stage two)");
        tseg->fallthrough();
        TrainSegArgs tseg_args;
        tseg->add_option("--data", tseg_args.data_dir)->required();
        tseg->add_option("--masks", tseg_args.mask_dir, "pseudo-mask directory")->required();
        tseg->add_option("--out", tseg_args.out_dir)->required();
        add_train_flags(tseg, cfg, "train-seg", tseg_args.cfg, late);

        // eval
        auto* ev = app.add_subcommand("eval", "score predicted masks against ground truth");
        ev->fallthrough();
        EvalArgs ev_args;
        std::string ev_split = "test", ev_scope = "defect-only", ev_agg = "micro";
        ev->add_option("--data", ev_args.data_dir)->required();
        ev->add_option("--pred", ev_args.pred_dir, "directory of predicted masks");
        ev->add_option("--seg-model", ev_args.seg_model, "segmenter weights to predict with");
        ev->add_option("--report", ev_args.report_path, "output report JSON path");
        ev->add_option("--split", ev_split)->capture_default_str();
        ev->add_option("--scope", ev_scope, "defect-only|full")->capture_default_str();
        ev->add_option("--aggregate", ev_agg, "micro|macro")->capture_default_str();
        ev->add_option("--method-name", ev_args.method_name, "label for the report row");
        ev->add_option("--delta", ev_args.delta)->capture_default_str();
        ev->add_option("--jobs", ev_args.jobs)->capture_default_str();

        // sweep-delta
        auto* sw = app.add_subcommand("sweep-delta", "IoU vs delta over the sweep grid");
        sw->fallthrough();
        SweepArgs sw_args;
        CamFlags sw_flags;
        std::string sw_deltas, sw_scope = "defect-only";
        sw->add_option("--data", sw_args.data_dir)->required();
        sw->add_option("--model", sw_args.model_path)->required();
        sw->add_option("--out", sw_args.out_dir)->required();
        sw->add_option("--deltas", sw_deltas, "comma list (default 0,10,...,90,95)");
        sw->add_option("--scope", sw_scope, "defect-only|full")->capture_default_str();
        sw->add_option("--min-area", sw_args.min_area)->capture_default_str();
        sw->add_option("--jobs", sw_args.jobs)->capture_default_str();
        add_cam_flags(sw, cfg, "sweep-delta", sw_flags, late);

        app.parse(argc, argv);
        for (const auto& fn : late) fn();

        if (gen->parsed()) {
            cmd_gen_data(gen_args);
        } else if (tcls->parsed()) {
            cmd_train_cls(tcls_args);
        } else if (cam->parsed()) {
            cam_args.cam = cam_flags.to_options();
            cam_args.split = parse_split(cam_split);
            cmd_cam(cam_args);
        } else if (pl->parsed()) {
            cmd_pseudo_label(pl_args);
        } else if (tseg->parsed()) {
            cmd_train_seg(tseg_args);
        } else if (ev->parsed()) {
            ev_args.split = parse_split(ev_split);
            ev_args.scope = parse_scope(ev_scope);
            ev_args.aggregate = ev_agg == "macro" ? AggregateMode::Macro : AggregateMode::Micro;
            if (ev_args.report_path.empty() && !ev_args.pred_dir.empty()) {
                ev_args.report_path = ev_args.pred_dir + "/../reports/eval.json";
            }
            cmd_eval(ev_args);
        } else if (sw->parsed()) {
            sw_args.cam = sw_flags.to_options();
            sw_args.scope = parse_scope(sw_scope);
            if (!sw_deltas.empty()) sw_args.deltas = parse_deltas(sw_deltas);
            cmd_sweep_delta(sw_args);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return CLI::App{}.exit(e);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
