#include "ffdalign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ffdalign/errors.hpp"
#include "ffdalign/evaluator.hpp"
#include "ffdalign/image_io.hpp"
#include "ffdalign/objective.hpp"
#include "ffdalign/parallel.hpp"

namespace ffdalign {

namespace {

bool rotation_enabled(const Interval& r) { return !(r.lo == 0.0 && r.hi == 0.0); }
bool masking_enabled(const Interval& r) { return r.hi > 0.0; }

std::string_view normalization_name(LossNormalization n) { return n == LossNormalization::Mean ? "mean" : "sum"; }

LossNormalization parse_normalization(std::string_view s) {
    if (s == "sum") return LossNormalization::Sum;
    if (s == "mean") return LossNormalization::Mean;
    throw ValidationError("unknown loss normalization '" + std::string(s) + "'");
}

Json interval_json(const Interval& i) { return Json::array({i.lo, i.hi}); }
Interval interval_from(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

bool has_png_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

// Target-side geometric augmentation; identity draws leave the image untouched.
Silhouette augment(const Silhouette& s, const TrainConfig& config, Rng& rng) {
    std::uniform_real_distribution<double> scale(config.scale_range.lo, config.scale_range.hi);
    const double sx = scale(rng);
    const double sy = scale(rng);
    double theta = 0.0;
    if (rotation_enabled(config.rotation_range)) {
        std::uniform_real_distribution<double> rot(config.rotation_range.lo, config.rotation_range.hi);
        theta = rot(rng) * std::numbers::pi / 180.0;
    }
    if (sx == 1.0 && sy == 1.0 && theta == 0.0) return s;
    DenseWarp warp = scale_warp(sx, sy, s.height(), s.width());
    if (theta != 0.0) warp = compose(warp, rotation_warp(theta, s.height(), s.width()));
    return binarize(resample(s, warp));
}

std::string checkpoint_name(std::uint64_t step) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "step_%08llu.ckpt", static_cast<unsigned long long>(step));
    return buf;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ValidationError("epochs must be positive");
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
    if (masking_enabled(mask_range) && !(mask_range.lo > 0.0 && mask_range.lo <= mask_range.hi && mask_range.hi <= 1.0)) {
        throw ValidationError("mask range must satisfy 0 < lo <= hi <= 1 (or hi <= 0 to disable)");
    }
    if (!(scale_range.lo > 0.0 && scale_range.lo <= scale_range.hi)) {
        throw ValidationError("scale range must satisfy 0 < lo <= hi");
    }
    if (!(rotation_range.lo <= rotation_range.hi)) throw ValidationError("rotation range must satisfy lo <= hi");
    if (threads == 0) throw ValidationError("threads must be >= 1");
    architecture().validate();
}

Json to_json(const TrainConfig& c) {
    Json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["lambda"] = c.lambda;
    j["mode"] = std::string(to_string(c.mode));
    j["normalization"] = std::string(normalization_name(c.normalization));
    j["mask_range"] = interval_json(c.mask_range);
    j["scale_range"] = interval_json(c.scale_range);
    j["rotation_range_deg"] = interval_json(c.rotation_range);
    j["augment_source"] = c.augment_source;
    j["seed"] = c.seed;
    j["checkpoint_every"] = c.checkpoint_every;
    j["resolution"] = c.resolution;
    j["grid_m"] = c.m;
    j["grid_n"] = c.n;
    j["threads"] = c.threads;
    j["heldout_each_epoch"] = c.heldout_each_epoch;
    j["heldout_max_pairs"] = c.heldout_max_pairs;
    j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
    return j;
}

TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.lambda = j.value("lambda", c.lambda);
        if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
        if (j.contains("normalization")) c.normalization = parse_normalization(j.at("normalization").get<std::string>());
        if (j.contains("mask_range")) c.mask_range = interval_from(j.at("mask_range"));
        if (j.contains("scale_range")) c.scale_range = interval_from(j.at("scale_range"));
        if (j.contains("rotation_range_deg")) c.rotation_range = interval_from(j.at("rotation_range_deg"));
        c.augment_source = j.value("augment_source", c.augment_source);
        c.seed = j.value("seed", c.seed);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.resolution = j.value("resolution", c.resolution);
        c.m = j.value("grid_m", c.m);
        c.n = j.value("grid_n", c.n);
        c.threads = j.value("threads", c.threads);
        c.heldout_each_epoch = j.value("heldout_each_epoch", c.heldout_each_epoch);
        c.heldout_max_pairs = j.value("heldout_max_pairs", c.heldout_max_pairs);
        if (j.contains("adam")) {
            c.adam.beta1 = j.at("adam").value("beta1", c.adam.beta1);
            c.adam.beta2 = j.at("adam").value("beta2", c.adam.beta2);
            c.adam.eps = j.at("adam").value("eps", c.adam.eps);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad training config: ") + e.what());
    }
    return c;
}

Dataset split_dataset(const std::filesystem::path& directory, std::uint64_t seed, std::size_t test_count,
                      const std::filesystem::path& manifest_path) {
    if (!std::filesystem::is_directory(directory)) {
        throw ValidationError("dataset directory not found: " + directory.string());
    }
    Dataset d;
    d.root = std::filesystem::absolute(directory).lexically_normal();
    d.seed = seed;
    std::vector<std::string> items;
    for (const auto& entry : std::filesystem::directory_iterator(directory)) {
        if (!entry.is_regular_file() || !has_png_extension(entry.path())) continue;
        try {
            read_png(entry.path());
            items.push_back(entry.path().filename().string());
        } catch (const Error&) {
            d.warnings.push_back("skipped undecodable image " + entry.path().filename().string());
        }
    }
    std::sort(items.begin(), items.end());
    std::sort(d.warnings.begin(), d.warnings.end());
    if (items.size() < 2) {
        throw ValidationError("dataset needs at least 2 decodable images, found " + std::to_string(items.size()));
    }
    Rng rng(seed);
    std::shuffle(items.begin(), items.end(), rng);

    const std::size_t n = items.size();
    std::size_t n_test = test_count;
    if (test_count == 0 || n < 2 * test_count) {
        n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(kFallbackTestFraction * n)));
        d.warnings.push_back("pool of " + std::to_string(n) + " images is too small for " +
                             std::to_string(test_count) + " test items; using a " +
                             std::to_string(n - n_test) + "/" + std::to_string(n_test) + " split");
    }
    d.test_items.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_test));
    d.train_items.assign(items.begin() + static_cast<std::ptrdiff_t>(n_test), items.end());
    if (!manifest_path.empty()) write_manifest(manifest_path, d);
    return d;
}

Json manifest_json(const Dataset& d) {
    Json j;
    j["root"] = d.root.string();
    j["seed"] = d.seed;
    Json items = Json::array();
    for (const auto& t : d.train_items) items.push_back({{"path", t}, {"split", "train"}});
    for (const auto& t : d.test_items) items.push_back({{"path", t}, {"split", "test"}});
    j["items"] = items;
    j["warnings"] = d.warnings;
    return j;
}

Dataset dataset_from_manifest(const Json& j, const std::filesystem::path& root_override) {
    Dataset d;
    try {
        d.root = root_override.empty() ? std::filesystem::path(j.at("root").get<std::string>()) : root_override;
        d.seed = j.value("seed", std::uint64_t{0});
        for (const auto& item : j.at("items")) {
            const auto split = item.at("split").get<std::string>();
            const auto path = item.at("path").get<std::string>();
            if (split == "train") {
                d.train_items.push_back(path);
            } else if (split == "test") {
                d.test_items.push_back(path);
            } else {
                throw ValidationError("manifest item has unknown split '" + split + "'");
            }
        }
        if (j.contains("warnings")) d.warnings = j.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    std::vector<std::string> a = d.train_items, b = d.test_items;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::string> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    if (!common.empty()) throw ValidationError("manifest train and test sets overlap: " + common.front());
    return d;
}

void write_manifest(const std::filesystem::path& path, const Dataset& d) {
    write_file_atomic(path, manifest_json(d).dump(2) + "\n");
}

Dataset read_manifest(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("manifest is not valid JSON: " + std::string(e.what()));
    }
    return dataset_from_manifest(j);
}

ImagePool load_pool(const Dataset& d, std::size_t resolution) {
    ImagePool pool;
    auto load = [&](const std::vector<std::string>& names, std::vector<Silhouette>& out) {
        for (const auto& name : names) {
            Silhouette s = load_silhouette(d.root / name);
            if (s.height() != resolution || s.width() != resolution) {
                throw ValidationError("image " + name + " is " + std::to_string(s.height()) + "x" +
                                      std::to_string(s.width()) + ", expected " + std::to_string(resolution) +
                                      "x" + std::to_string(resolution));
            }
            out.push_back(std::move(s));
        }
    };
    load(d.train_items, pool.train);
    load(d.test_items, pool.test);
    pool.train_names = d.train_items;
    pool.test_names = d.test_items;
    return pool;
}

std::vector<PairSample> sample_batch(const std::vector<Silhouette>& pool, const TrainConfig& config, Rng& rng,
                                     std::size_t count) {
    if (pool.size() < 2) throw ValidationError("sampling pairs needs at least 2 training items");
    std::vector<PairSample> batch;
    batch.reserve(count);
    std::uniform_int_distribution<std::size_t> pick_source(0, pool.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_other(0, pool.size() - 2);
    for (std::size_t k = 0; k < count; ++k) {
        PairSample s;
        s.source_index = pick_source(rng);
        s.target_index = pick_other(rng);
        if (s.target_index >= s.source_index) ++s.target_index;
        s.full_target = augment(pool[s.target_index], config, rng);
        s.source = config.augment_source ? augment(pool[s.source_index], config, rng) : pool[s.source_index];
        s.partial_target = s.full_target;
        if (masking_enabled(config.mask_range) && foreground_count(s.full_target) > 0) {
            s.mask = random_mask(s.full_target, config.mask_range, rng);
            s.partial_target = apply_mask(s.full_target, *s.mask);
        }
        batch.push_back(std::move(s));
    }
    return batch;
}

std::string step_metrics_csv(const std::vector<StepRecord>& steps) {
    std::string out = "step,epoch,shape_loss,reg_loss,total,heldout_iou\n";
    for (const auto& s : steps) {
        out += std::to_string(s.step) + "," + std::to_string(s.epoch) + "," + format_double(s.report.shape_loss) +
               "," + format_double(s.report.reg_loss) + "," + format_double(s.report.total) + "," +
               (s.heldout_iou ? format_double(*s.heldout_iou) : std::string()) + "\n";
    }
    return out;
}

std::string epoch_metrics_csv(const std::vector<EpochRecord>& epochs) {
    std::string out = "epoch,last_step,mean_shape_loss,mean_total,mean_smoothness,heldout_iou,baseline_iou\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& e : epochs) {
        out += std::to_string(e.epoch) + "," + std::to_string(e.last_step) + "," + format_double(e.mean_shape_loss) +
               "," + format_double(e.mean_total) + "," + format_double(e.mean_smoothness) + "," +
               opt(e.heldout_iou) + "," + opt(e.baseline_iou) + "\n";
    }
    return out;
}

TrainResult train(const ImagePool& pool, const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    const Architecture arch = config.architecture();
    for (const auto* set : {&pool.train, &pool.test}) {
        for (const auto& s : *set) {
            if (s.height() != arch.resolution || s.width() != arch.resolution) {
                throw ValidationError("training image size does not match the configured resolution");
            }
        }
    }
    if (pool.train.size() < 2) throw ValidationError("training needs at least 2 training items");

    Checkpoint ckpt;
    ckpt.mode = config.mode;
    ckpt.config = to_json(config);
    AdamState state;
    if (options.resume) {
        if (!(options.resume->params.arch == arch)) {
            throw ValidationError("resume checkpoint architecture does not match the configuration");
        }
        ckpt.params = options.resume->params;
        ckpt.step = options.resume->step;
        state = options.resume->optimizer.value_or(AdamState(ckpt.params.values.size()));
    } else {
        Rng init_rng(derive_seed(config.seed, 0x1417));
        ckpt.params = init_params<float>(init_rng, arch);
        state = AdamState(ckpt.params.values.size());
    }

    std::optional<std::filesystem::path> ckpt_dir;
    if (options.output_dir) {
        std::filesystem::create_directories(*options.output_dir);
        if (config.checkpoint_every > 0) {
            ckpt_dir = *options.output_dir / "checkpoints";
            std::filesystem::create_directories(*ckpt_dir);
        }
    }

    const ObjectiveSettings settings{config.lambda, config.mode, config.normalization};
    const std::size_t n_train = pool.train.size();
    const std::size_t steps_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
    const std::size_t first_epoch = static_cast<std::size_t>(ckpt.step / steps_per_epoch) + 1;
    const std::uint64_t heldout_seed = derive_seed(config.seed, 0x4E1D);
    Rng rng(derive_seed(config.seed, ckpt.step));

    TrainResult result;
    const std::size_t count = ckpt.params.values.size();

    struct SampleOut {
        std::vector<float> grads;
        LossReport report;
        double smoothness = 0.0;
    };

    for (std::size_t e = 0; e < config.epochs; ++e) {
        const std::size_t epoch = first_epoch + e;
        EpochRecord er;
        er.epoch = epoch;
        double smooth_sum = 0.0, shape_sum = 0.0, total_sum = 0.0;
        std::size_t seen = 0;

        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t this_batch = std::min(config.batch_size, n_train - s * config.batch_size);
            const auto batch = sample_batch(pool.train, config, rng, this_batch);
            std::vector<SampleOut> outs(batch.size());
            parallel_for(batch.size(), config.threads, [&](std::size_t i) {
                const PairSample& p = batch[i];
                ForwardCache<float> cache;
                const DifferentialWarp raw = forward(ckpt.params, p.source, p.partial_target, &cache);
                // The network sees the partial target; the loss compares against the full one.
                const ChainEvaluation ev = evaluate_chain(p.source, p.full_target, raw, settings);
                outs[i].grads = backward(ckpt.params, cache, ev.grad_raw);
                outs[i].report = ev.report;
                outs[i].smoothness = tv_identity_loss(ev.effective).value;
            });

            std::vector<double> acc(count, 0.0);
            LossReport mean{0.0, 0.0, 0.0, config.lambda};
            for (const auto& o : outs) {
                for (std::size_t k = 0; k < count; ++k) acc[k] += o.grads[k];
                mean.shape_loss += o.report.shape_loss;
                mean.reg_loss += o.report.reg_loss;
                mean.total += o.report.total;
                smooth_sum += o.smoothness;
                shape_sum += o.report.shape_loss;
                total_sum += o.report.total;
            }
            seen += outs.size();
            const double inv = 1.0 / static_cast<double>(outs.size());
            mean.shape_loss *= inv;
            mean.reg_loss *= inv;
            mean.total *= inv;

            if (!std::isfinite(mean.total) || !all_finite(acc)) {
                if (options.output_dir) {
                    Checkpoint diag = ckpt;
                    diag.optimizer = state;
                    save_checkpoint(*options.output_dir / "diagnostic.ckpt", diag);
                }
                throw NumericError("non-finite training loss", ckpt.step + 1);
            }

            std::vector<float> grads(count);
            for (std::size_t k = 0; k < count; ++k) grads[k] = static_cast<float>(acc[k]);
            adam_step(ckpt.params, std::span<const float>(grads), state, config.learning_rate, config.adam);
            ++ckpt.step;
            result.steps.push_back({ckpt.step, epoch, mean, std::nullopt});

            if (ckpt_dir && ckpt.step % config.checkpoint_every == 0) {
                Checkpoint snap = ckpt;
                snap.optimizer = state;
                save_checkpoint(*ckpt_dir / checkpoint_name(ckpt.step), snap);
            }
        }

        er.last_step = ckpt.step;
        er.mean_smoothness = smooth_sum / static_cast<double>(seen);
        er.mean_shape_loss = shape_sum / static_cast<double>(seen);
        er.mean_total = total_sum / static_cast<double>(seen);
        if (config.heldout_each_epoch && pool.test.size() >= 2) {
            const HeldoutScore h = heldout_score(ckpt.params, config.mode, pool.test, config.mask_range,
                                                 heldout_seed, config.heldout_max_pairs, config.threads);
            er.heldout_iou = h.warped_iou;
            er.baseline_iou = h.baseline_iou;
            result.steps.back().heldout_iou = h.warped_iou;
        }
        result.epochs.push_back(er);
        if (options.output_dir) {
            write_file_atomic(*options.output_dir / "metrics.csv", step_metrics_csv(result.steps));
            write_file_atomic(*options.output_dir / "epochs.csv", epoch_metrics_csv(result.epochs));
        }
        if (options.on_epoch) options.on_epoch(er);
    }

    ckpt.optimizer = state;
    if (options.output_dir) save_checkpoint(*options.output_dir / "final.ckpt", ckpt);
    result.final_checkpoint = std::move(ckpt);
    return result;
}

} // namespace ffdalign
