#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ffdalign/checkpoint.hpp"
#include "ffdalign/errors.hpp"
#include "ffdalign/evaluator.hpp"
#include "ffdalign/image_io.hpp"
#include "ffdalign/objective.hpp"
#include "ffdalign/pair_optimizer.hpp"
#include "ffdalign/sampler.hpp"
#include "ffdalign/serialize.hpp"
#include "ffdalign/synth.hpp"
#include "ffdalign/trainer.hpp"

namespace fs = std::filesystem;
using namespace ffdalign;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

Interval parse_interval(const std::string& text, const std::string& what) {
    const auto sep = text.find("..");
    if (sep == std::string::npos) throw ValidationError(what + " must look like LO..HI, got '" + text + "'");
    try {
        std::size_t used = 0;
        const std::string lo = text.substr(0, sep), hi = text.substr(sep + 2);
        Interval out{std::stod(lo, &used), 0.0};
        if (used != lo.size()) throw std::invalid_argument(lo);
        out.hi = std::stod(hi, &used);
        if (used != hi.size()) throw std::invalid_argument(hi);
        if (out.lo > out.hi) throw ValidationError(what + " must satisfy LO <= HI");
        return out;
    } catch (const std::logic_error&) {
        throw ValidationError(what + " must look like LO..HI, got '" + text + "'");
    }
}

std::string interval_text(const Interval& i) { return format_double(i.lo) + ".." + format_double(i.hi); }

void write_config(const fs::path& dir, const Json& config) {
    fs::create_directories(dir);
    write_file_atomic(dir / "config.json", config.dump(2) + "\n");
}

void report_error(const char* kind, const std::string& message, std::optional<std::size_t> iteration = {}) {
    Json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    if (iteration) j["error"]["iteration"] = *iteration;
    std::cerr << j.dump() << std::endl;
}

// Shared flags of the optimization and training commands.
struct Common {
    std::uint64_t seed = 0;
    std::size_t resolution = 64;
    std::size_t grid_m = 8;
    std::size_t grid_n = 8;
    double lambda = 1e-5;
    std::optional<double> lr;
    std::string mode = "tvm";
    std::size_t threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_resolution) {
    cmd->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
    if (with_resolution) cmd->add_option("--resolution", c.resolution, "Image side length")->capture_default_str();
    cmd->add_option("--grid-m", c.grid_m, "Control grid rows")->capture_default_str();
    cmd->add_option("--grid-n", c.grid_n, "Control grid columns")->capture_default_str();
    cmd->add_option("--lambda", c.lambda, "Regularization weight")->capture_default_str();
    cmd->add_option("--lr", c.lr, "Learning rate");
    cmd->add_option("--mode", c.mode, "Regularization mode")
        ->check(CLI::IsMember({"none", "tv", "tvm"}))
        ->capture_default_str();
    cmd->add_option("--threads", c.threads, "Worker threads")->capture_default_str();
}

void bind_env(CLI::App& app) {
    for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; })) {
        for (CLI::Option* opt : sub->get_options([](CLI::Option* o) { return !o->get_lnames().empty(); })) {
            std::string name = "FFDALIGN_" + opt->get_lnames().front();
            for (char& ch : name) ch = ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            if (name == "FFDALIGN_HELP") continue;
            opt->envname(name);
        }
    }
}

Silhouette load_checked(const fs::path& p, std::optional<std::size_t> resolution = {}) {
    Silhouette s = load_silhouette(p);
    if (resolution && (s.height() != *resolution || s.width() != *resolution)) {
        throw ValidationError(p.string() + " is " + std::to_string(s.height()) + "x" + std::to_string(s.width()) +
                              ", expected " + std::to_string(*resolution) + "x" + std::to_string(*resolution));
    }
    return s;
}

Json warp_json(const ControlWarp& control, const DifferentialWarp& delta, RegularizationMode mode,
               std::optional<double> theta) {
    Json j;
    j["mode"] = std::string(to_string(mode));
    j["control"] = to_json(control);
    j["differential"] = to_json(delta);
    if (theta) j["theta"] = *theta;
    return j;
}

// ---- synth ----
struct SynthArgs {
    std::string kind = "ellipse";
    std::size_t count = 100;
    std::size_t resolution = 64;
    std::uint64_t seed = 0;
    fs::path out;
};

int run_synth(const SynthArgs& a) {
    const ShapeKind kind = parse_shape_kind(a.kind);
    if (a.count == 0) throw ValidationError("count must be positive");
    if (a.resolution < 2) throw ValidationError("resolution must be >= 2");
    const auto names = write_synthetic_dataset(a.out, kind, a.count, a.resolution, a.seed);
    write_config(a.out, {{"command", "synth"},
                         {"kind", a.kind},
                         {"count", a.count},
                         {"resolution", a.resolution},
                         {"seed", a.seed},
                         {"out", a.out.string()}});
    std::cout << "wrote " << names.size() << " shapes to " << a.out.string() << "\n";
    return 0;
}

// ---- align ----
struct AlignArgs {
    Common common;
    fs::path source, target, out;
    std::size_t max_iters = 1000;
    bool rotation = false;
    double rotation_lr_scale = 1.0;
    double initial_theta_deg = 0.0;
    double tol = 1e-6;
};

int run_align(const AlignArgs& a) {
    OptimizeConfig cfg;
    cfg.max_iters = a.max_iters;
    cfg.learning_rate = a.common.lr.value_or(cfg.learning_rate);
    cfg.lambda = a.common.lambda;
    cfg.mode = parse_mode(a.common.mode);
    cfg.grid_m = a.common.grid_m;
    cfg.grid_n = a.common.grid_n;
    cfg.seed = a.common.seed;
    cfg.convergence_tol = a.tol;
    cfg.rotation_lr_scale = a.rotation_lr_scale;
    cfg.initial_theta = a.initial_theta_deg * std::numbers::pi / 180.0;
    cfg.validate();

    Json config = {{"command", "align"},
                   {"source", a.source.string()},
                   {"target", a.target.string()},
                   {"out", a.out.string()},
                   {"seed", cfg.seed},
                   {"grid_m", cfg.grid_m},
                   {"grid_n", cfg.grid_n},
                   {"lambda", cfg.lambda},
                   {"lr", cfg.learning_rate},
                   {"mode", std::string(to_string(cfg.mode))},
                   {"max_iters", cfg.max_iters},
                   {"convergence_tol", cfg.convergence_tol},
                   {"rotation", a.rotation},
                   {"rotation_lr_scale", cfg.rotation_lr_scale},
                   {"initial_theta_deg", a.initial_theta_deg}};
    write_config(a.out, config);

    const Silhouette src = load_checked(a.source);
    const Silhouette tgt = load_checked(a.target);
    const AlignmentResult r = a.rotation ? align_pair_with_rotation(src, tgt, cfg) : align_pair(src, tgt, cfg);

    Json w = warp_json(r.control, r.delta, cfg.mode, a.rotation ? std::optional<double>(r.theta) : std::nullopt);
    w["iters_run"] = r.iters_run;
    w["converged"] = r.converged;
    w["iou"] = iou(r.warped, tgt);
    write_file_atomic(a.out / "warp.json", w.dump(2) + "\n");
    save_silhouette(a.out / "warped.png", r.warped);
    write_file_atomic(a.out / "trace.csv", loss_trace_csv(r.loss_trace));
    std::cout << "iou " << format_double(w["iou"].get<double>()) << " after " << r.iters_run << " iterations\n";
    return 0;
}

// ---- train ----
struct TrainArgs {
    Common common;
    fs::path data, manifest, out, resume;
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    std::size_t test_count = kDefaultTestCount;
    std::size_t checkpoint_every = 0;
    std::size_t heldout_max_pairs = 0;
    std::string mask_range = "0.2..0.6";
    std::string scale_range = "0.9..1.1";
    std::string rotation_range = "0..0";
    std::string normalization = "sum";
    bool augment_source = false;
};

int run_train(const TrainArgs& a) {
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.learning_rate = a.common.lr.value_or(cfg.learning_rate);
    cfg.lambda = a.common.lambda;
    cfg.mode = parse_mode(a.common.mode);
    if (a.normalization == "mean") {
        cfg.normalization = LossNormalization::Mean;
    } else if (a.normalization != "sum") {
        throw ValidationError("normalization must be sum or mean");
    }
    cfg.mask_range = parse_interval(a.mask_range, "--mask-range");
    cfg.scale_range = parse_interval(a.scale_range, "--scale-range");
    cfg.rotation_range = parse_interval(a.rotation_range, "--rotation-range");
    cfg.augment_source = a.augment_source;
    cfg.seed = a.common.seed;
    cfg.checkpoint_every = a.checkpoint_every;
    cfg.resolution = a.common.resolution;
    cfg.m = a.common.grid_m;
    cfg.n = a.common.grid_n;
    cfg.threads = a.common.threads;
    cfg.heldout_max_pairs = a.heldout_max_pairs;
    cfg.validate();

    if (a.data.empty() == a.manifest.empty()) throw ValidationError("give exactly one of --data or --manifest");
    Dataset d = a.manifest.empty() ? split_dataset(a.data, cfg.seed, a.test_count) : read_manifest(a.manifest);
    fs::create_directories(a.out);
    write_manifest(a.out / "manifest.json", d);

    Json config = {{"command", "train"},
                   {"data", a.data.string()},
                   {"manifest", a.manifest.string()},
                   {"out", a.out.string()},
                   {"resume", a.resume.string()},
                   {"test_count", a.test_count},
                   {"train", to_json(cfg)}};
    write_config(a.out, config);

    TrainOptions opts;
    opts.output_dir = a.out;
    if (!a.resume.empty()) opts.resume = load_checkpoint(a.resume);
    opts.on_epoch = [](const EpochRecord& e) {
        std::cout << "epoch " << e.epoch << " step " << e.last_step << " shape " << format_double(e.mean_shape_loss)
                  << " smoothness " << format_double(e.mean_smoothness);
        if (e.heldout_iou) std::cout << " heldout_iou " << format_double(*e.heldout_iou);
        std::cout << std::endl;
    };
    for (const auto& w : d.warnings) std::cerr << "warning: " << w << "\n";
    const ImagePool pool = load_pool(d, cfg.resolution);
    train(pool, cfg, opts);
    return 0;
}

// ---- infer ----
struct InferArgs {
    fs::path checkpoint, source, target, out;
};

int run_infer(const InferArgs& a) {
    write_config(a.out, {{"command", "infer"},
                         {"checkpoint", a.checkpoint.string()},
                         {"source", a.source.string()},
                         {"target", a.target.string()},
                         {"out", a.out.string()}});
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Silhouette src = load_checked(a.source, ck.params.arch.resolution);
    const Silhouette tgt = load_checked(a.target, ck.params.arch.resolution);
    const Inference inf = infer(ck, src, tgt);
    write_file_atomic(a.out / "warp.json", warp_json(inf.control, inf.raw, ck.mode, std::nullopt).dump(2) + "\n");
    write_dense_warp(a.out / "dense_warp.bin", inf.dense);
    save_silhouette(a.out / "warped.png", inf.warped);
    return 0;
}

// ---- eval ----
struct EvalArgs {
    fs::path checkpoint, manifest, out;
    std::string mask_protocol = "random";
    std::string mask_range = "0.2..0.6";
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::size_t strips = 0;
};

int run_eval(const EvalArgs& a) {
    MaskProtocolConfig protocol;
    protocol.kind = parse_mask_protocol(a.mask_protocol);
    protocol.size_range = parse_interval(a.mask_range, "--mask-range");
    protocol.seed = a.seed;
    if (a.threads == 0) throw ValidationError("threads must be >= 1");
    write_config(a.out, {{"command", "eval"},
                         {"checkpoint", a.checkpoint.string()},
                         {"manifest", a.manifest.string()},
                         {"out", a.out.string()},
                         {"mask_protocol", a.mask_protocol},
                         {"mask_range", interval_text(protocol.size_range)},
                         {"seed", a.seed},
                         {"threads", a.threads},
                         {"strips", a.strips}});
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Dataset d = read_manifest(a.manifest);
    const ImagePool pool = load_pool(Dataset{d.root, {}, d.test_items, d.seed, {}}, ck.params.arch.resolution);
    const EvalReport report = eval_testset(ck, pool.test, pool.test_names, protocol, a.threads);
    write_file_atomic(a.out / "eval.csv", eval_csv(report));
    write_file_atomic(a.out / "summary.json", eval_summary(report).dump(2) + "\n");
    for (std::size_t k = 0; k < std::min(a.strips, report.records.size()); ++k) {
        const PairRecord& r = report.records[k];
        const Silhouette& src = pool.test[r.source_index];
        const Silhouette& full = pool.test[r.target_index];
        const Silhouette partial = r.mask ? apply_mask(full, *r.mask) : full;
        const Silhouette warped = infer(ck, src, partial).warped;
        fs::create_directories(a.out / "strips");
        char name[48];
        std::snprintf(name, sizeof(name), "pair_%06zu.png", r.pair_id);
        save_silhouette(a.out / "strips" / name, comparison_strip(src, partial, warped, full));
    }
    std::cout << report.records.size() << " pairs, mean iou " << format_double(report.mean_iou_partial_input)
              << " (identity " << format_double(report.mean_iou_identity) << ")\n";
    return 0;
}

// ---- transfer ----
struct TransferArgs {
    fs::path image, out, warp, checkpoint, source, target;
    bool labels = false;
};

int run_transfer(const TransferArgs& a) {
    const bool from_net = !a.checkpoint.empty();
    if (from_net == !a.warp.empty()) throw ValidationError("give exactly one of --warp or --checkpoint");
    if (from_net && (a.source.empty() || a.target.empty())) {
        throw ValidationError("--checkpoint needs --source and --target");
    }
    const fs::path out_dir = a.out.has_parent_path() ? a.out.parent_path() : fs::path(".");
    write_config(out_dir, {{"command", "transfer"},
                           {"image", a.image.string()},
                           {"out", a.out.string()},
                           {"warp", a.warp.string()},
                           {"checkpoint", a.checkpoint.string()},
                           {"source", a.source.string()},
                           {"target", a.target.string()},
                           {"labels", a.labels}});
    const Image8 img = read_png(a.image);
    DenseWarp dense;
    if (from_net) {
        const Checkpoint ck = load_checkpoint(a.checkpoint);
        const Silhouette src = load_checked(a.source, ck.params.arch.resolution);
        const Silhouette tgt = load_checked(a.target, ck.params.arch.resolution);
        dense = upsample(infer(ck, src, tgt).control, img.height, img.width);
    } else {
        Json w;
        try {
            w = Json::parse(read_text_file(a.warp));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("warp file is not valid JSON: " + std::string(e.what()));
        }
        const ControlWarp control = control_from_json(w.contains("control") ? w.at("control") : w);
        std::optional<double> theta;
        if (w.contains("theta")) theta = w.at("theta").get<double>();
        dense = chain_dense_warp(control, img.height, img.width, theta);
    }
    Image8 out = img;
    for (std::size_t ch = 0; ch < img.channels; ++ch) {
        Field plane(img.height, img.width);
        for (std::size_t r = 0; r < img.height; ++r) {
            for (std::size_t c = 0; c < img.width; ++c) plane(r, c) = img.at(r, c, ch);
        }
        const Field moved = a.labels ? resample_nearest(plane, dense, 0.0) : resample_field(plane, dense);
        for (std::size_t r = 0; r < img.height; ++r) {
            for (std::size_t c = 0; c < img.width; ++c) {
                out.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(moved(r, c)), 0L, 255L));
            }
        }
    }
    write_png(a.out, out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Free-form deformation shape alignment"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a procedural silhouette dataset");
    c_synth->add_option("--kind", synth.kind, "ellipse | rounded-rect | cross")->capture_default_str();
    c_synth->add_option("--count", synth.count)->capture_default_str();
    c_synth->add_option("--resolution", synth.resolution)->capture_default_str();
    c_synth->add_option("--seed", synth.seed)->capture_default_str();
    c_synth->add_option("--out", synth.out)->required();

    AlignArgs align;
    auto* c_align = app.add_subcommand("align", "Optimize the FFD grid aligning one pair");
    add_common(c_align, align.common, false);
    c_align->add_option("--source", align.source)->required();
    c_align->add_option("--target", align.target)->required();
    c_align->add_option("--out", align.out)->required();
    c_align->add_option("--max-iters", align.max_iters)->capture_default_str();
    c_align->add_option("--tol", align.tol, "Convergence tolerance")->capture_default_str();
    c_align->add_flag("--rotation", align.rotation, "Optimize a global rotation jointly");
    c_align->add_option("--rotation-lr-scale", align.rotation_lr_scale)->capture_default_str();
    c_align->add_option("--initial-theta", align.initial_theta_deg, "Degrees")->capture_default_str();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train the warp regressor");
    add_common(c_train, tr.common, true);
    c_train->add_option("--data", tr.data, "Directory of PNG silhouettes");
    c_train->add_option("--manifest", tr.manifest, "Existing split manifest");
    c_train->add_option("--out", tr.out)->required();
    c_train->add_option("--resume", tr.resume, "Checkpoint to continue from");
    c_train->add_option("--epochs", tr.epochs)->capture_default_str();
    c_train->add_option("--batch-size", tr.batch_size)->capture_default_str();
    c_train->add_option("--test-count", tr.test_count)->capture_default_str();
    c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Steps; 0 = final only")->capture_default_str();
    c_train->add_option("--heldout-max-pairs", tr.heldout_max_pairs)->capture_default_str();
    c_train->add_option("--mask-range", tr.mask_range, "LO..HI side fractions")->capture_default_str();
    c_train->add_option("--scale-range", tr.scale_range, "LO..HI")->capture_default_str();
    c_train->add_option("--rotation-range", tr.rotation_range, "LO..HI degrees")->capture_default_str();
    c_train->add_option("--normalization", tr.normalization, "sum | mean")->capture_default_str();
    c_train->add_flag("--augment-source", tr.augment_source);

    InferArgs inf;
    auto* c_infer = app.add_subcommand("infer", "Predict the warp for one pair");
    c_infer->add_option("--checkpoint", inf.checkpoint)->required();
    c_infer->add_option("--source", inf.source)->required();
    c_infer->add_option("--target", inf.target)->required();
    c_infer->add_option("--out", inf.out)->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Evaluate every ordered test pair");
    c_eval->add_option("--checkpoint", ev.checkpoint)->required();
    c_eval->add_option("--manifest", ev.manifest)->required();
    c_eval->add_option("--out", ev.out)->required();
    c_eval->add_option("--mask-protocol", ev.mask_protocol, "none | random")->capture_default_str();
    c_eval->add_option("--mask-range", ev.mask_range)->capture_default_str();
    c_eval->add_option("--seed", ev.seed)->capture_default_str();
    c_eval->add_option("--threads", ev.threads)->capture_default_str();
    c_eval->add_option("--strips", ev.strips, "Write this many comparison strips")->capture_default_str();

    TransferArgs tf;
    auto* c_transfer = app.add_subcommand("transfer", "Apply a warp to an RGB or label image");
    c_transfer->add_option("--image", tf.image)->required();
    c_transfer->add_option("--out", tf.out)->required();
    c_transfer->add_option("--warp", tf.warp, "warp.json from align or infer");
    c_transfer->add_option("--checkpoint", tf.checkpoint);
    c_transfer->add_option("--source", tf.source);
    c_transfer->add_option("--target", tf.target);
    c_transfer->add_flag("--labels", tf.labels, "Nearest-neighbour lookup for label images");

    bind_env(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (c_synth->parsed()) return run_synth(synth);
        if (c_align->parsed()) return run_align(align);
        if (c_train->parsed()) return run_train(tr);
        if (c_infer->parsed()) return run_infer(inf);
        if (c_eval->parsed()) return run_eval(ev);
        if (c_transfer->parsed()) return run_transfer(tf);
    } catch (const NumericError& e) {
        report_error("numeric", e.what(), e.iteration());
        return kExitNumeric;
    } catch (const ValidationError& e) {
        report_error("validation", e.what());
        return kExitValidation;
    } catch (const IoError& e) {
        report_error("io", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        report_error("internal", e.what());
        return 1;
    }
    return kExitValidation;
}
