#include "ffdalign/evaluator.hpp"

#include <algorithm>
#include <cmath>

#include "ffdalign/errors.hpp"
#include "ffdalign/losses.hpp"
#include "ffdalign/objective.hpp"
#include "ffdalign/parallel.hpp"
#include "ffdalign/regressor.hpp"

namespace ffdalign {

Inference run_inference(const RegressorParams<float>& params, RegularizationMode mode, const Silhouette& source,
                        const Silhouette& partial_target) {
    Inference out;
    out.raw = forward(params, source, partial_target);
    out.effective = effective_differential(out.raw, mode);
    out.control = build_control_warp(out.raw, mode);
    out.dense = upsample(out.control, source.height(), source.width());
    out.warped = resample(source, out.dense);
    return out;
}

Inference infer(const Checkpoint& ckpt, const Silhouette& source, const Silhouette& partial_target) {
    return run_inference(ckpt.params, ckpt.mode, source, partial_target);
}

std::size_t ordered_pair_count(std::size_t items) { return items < 2 ? 0 : items * (items - 1); }

std::pair<std::size_t, std::size_t> ordered_pair(std::size_t items, std::size_t pair_id) {
    if (pair_id >= ordered_pair_count(items)) throw ValidationError("pair id out of range");
    const std::size_t i = pair_id / (items - 1);
    const std::size_t r = pair_id % (items - 1);
    return {i, r < i ? r : r + 1};
}

namespace {

std::optional<RectMask> seeded_mask(const Silhouette& target, Interval range, std::uint64_t seed, std::size_t pair_id) {
    if (!(range.hi > 0.0) || foreground_count(target) == 0) return std::nullopt;
    Rng rng(derive_seed(seed, pair_id));
    return random_mask(target, range, rng);
}

} // namespace

HeldoutScore heldout_score(const RegressorParams<float>& params, RegularizationMode mode,
                           const std::vector<Silhouette>& test, Interval mask_range, std::uint64_t seed,
                           std::size_t max_pairs, std::size_t threads) {
    std::size_t count = ordered_pair_count(test.size());
    if (count == 0) throw ValidationError("held-out scoring needs at least 2 test items");
    if (max_pairs > 0) count = std::min(count, max_pairs);
    std::vector<std::pair<double, double>> scores(count);
    parallel_for(count, threads, [&](std::size_t p) {
        const auto [i, j] = ordered_pair(test.size(), p);
        const auto mask = seeded_mask(test[j], mask_range, seed, p);
        const Silhouette partial = mask ? apply_mask(test[j], *mask) : test[j];
        const Inference inf = run_inference(params, mode, test[i], partial);
        scores[p] = {iou(inf.warped, test[j]), iou(test[i], test[j])};
    });
    HeldoutScore h;
    h.pairs = count;
    for (const auto& [w, b] : scores) {
        h.warped_iou += w;
        h.baseline_iou += b;
    }
    h.warped_iou /= static_cast<double>(count);
    h.baseline_iou /= static_cast<double>(count);
    return h;
}

MaskProtocol parse_mask_protocol(std::string_view text) {
    if (text == "none") return MaskProtocol::None;
    if (text == "random") return MaskProtocol::Random;
    throw ValidationError("unknown mask protocol '" + std::string(text) + "' (expected none, random)");
}

EvalReport eval_testset(const Checkpoint& ckpt, const std::vector<Silhouette>& test,
                        const std::vector<std::string>& names, const MaskProtocolConfig& protocol,
                        std::size_t threads) {
    if (test.empty()) throw ValidationError("evaluation needs a non-empty test set");
    if (!names.empty() && names.size() != test.size()) throw ValidationError("test names do not match the images");
    const std::size_t count = ordered_pair_count(test.size());
    EvalReport report;
    report.item_names = names;
    report.records.resize(count);
    const Interval range = protocol.kind == MaskProtocol::Random ? protocol.size_range : Interval{0.0, 0.0};
    parallel_for(count, threads, [&](std::size_t p) {
        const auto [i, j] = ordered_pair(test.size(), p);
        PairRecord& r = report.records[p];
        r.pair_id = p;
        r.source_index = i;
        r.target_index = j;
        r.mask = seeded_mask(test[j], range, protocol.seed, p);
        const Inference full = infer(ckpt, test[i], test[j]);
        const Inference partial = r.mask ? infer(ckpt, test[i], apply_mask(test[j], *r.mask)) : full;
        r.iou_partial_input = iou(partial.warped, test[j]);
        r.iou_full_input = iou(full.warped, test[j]);
        r.iou_identity = iou(test[i], test[j]);
        r.smoothness = tv_identity_loss(partial.effective).value;
        r.warp_consistency = max_abs_difference(partial.control, full.control);
    });
    for (const auto& r : report.records) {
        report.mean_iou_partial_input += r.iou_partial_input;
        report.mean_iou_full_input += r.iou_full_input;
        report.mean_iou_identity += r.iou_identity;
        report.mean_smoothness += r.smoothness;
        report.mean_warp_consistency += r.warp_consistency;
    }
    if (count > 0) {
        const double inv = 1.0 / static_cast<double>(count);
        report.mean_iou_partial_input *= inv;
        report.mean_iou_full_input *= inv;
        report.mean_iou_identity *= inv;
        report.mean_smoothness *= inv;
        report.mean_warp_consistency *= inv;
    }
    return report;
}

std::string eval_csv(const EvalReport& report) {
    std::string out =
        "pair_id,source,target,mask_center_row,mask_center_col,mask_height,mask_width,"
        "iou_partial_input,iou_full_input,iou_identity,smoothness,warp_consistency\n";
    auto name = [&](std::size_t i) {
        return report.item_names.empty() ? std::to_string(i) : report.item_names[i];
    };
    for (const auto& r : report.records) {
        out += std::to_string(r.pair_id) + "," + name(r.source_index) + "," + name(r.target_index) + ",";
        if (r.mask) {
            out += std::to_string(r.mask->center_row) + "," + std::to_string(r.mask->center_col) + "," +
                   std::to_string(r.mask->mask_height) + "," + std::to_string(r.mask->mask_width) + ",";
        } else {
            out += ",,,,";
        }
        out += format_double(r.iou_partial_input) + "," + format_double(r.iou_full_input) + "," +
               format_double(r.iou_identity) + "," + format_double(r.smoothness) + "," +
               format_double(r.warp_consistency) + "\n";
    }
    return out;
}

Json eval_summary(const EvalReport& report) {
    Json j;
    j["pairs"] = report.records.size();
    j["items"] = report.item_names;
    j["mean_iou_partial_input"] = report.mean_iou_partial_input;
    j["mean_iou_full_input"] = report.mean_iou_full_input;
    j["mean_iou_identity"] = report.mean_iou_identity;
    j["mean_smoothness"] = report.mean_smoothness;
    j["mean_warp_consistency"] = report.mean_warp_consistency;
    return j;
}

Silhouette comparison_strip(const Silhouette& source, const Silhouette& partial, const Silhouette& warped,
                            const Silhouette& full_target) {
    const std::array<const Silhouette*, 4> panels{&source, &partial, &warped, &full_target};
    const std::size_t h = source.height(), w = source.width(), gap = 2;
    for (const auto* p : panels) {
        if (p->height() != h || p->width() != w) throw ValidationError("comparison strip panels differ in size");
    }
    Silhouette strip(h, 4 * w + 3 * gap, 0.5);
    for (std::size_t k = 0; k < panels.size(); ++k) {
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) strip.set(r, k * (w + gap) + c, (*panels[k])(r, c));
        }
    }
    return strip;
}

AgnosticismScore partial_agnosticism_score(const Checkpoint& ckpt, const Silhouette& source,
                                           const Silhouette& full_target, const std::vector<RectMask>& masks) {
    if (masks.size() < 2) throw ValidationError("partial agnosticism needs at least 2 masks");
    std::vector<Inference> runs;
    runs.push_back(infer(ckpt, source, full_target));
    for (const auto& m : masks) runs.push_back(infer(ckpt, source, apply_mask(full_target, m)));
    AgnosticismScore s;
    s.variants = runs.size();
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < runs.size(); ++a) {
        for (std::size_t b = a + 1; b < runs.size(); ++b) {
            s.mean_pairwise_iou += iou(runs[a].warped, runs[b].warped);
            s.mean_warp_difference += max_abs_difference(runs[a].control, runs[b].control);
            ++pairs;
        }
    }
    s.mean_pairwise_iou /= static_cast<double>(pairs);
    s.mean_warp_difference /= static_cast<double>(pairs);
    return s;
}

namespace {

std::size_t removed_foreground(const Silhouette& target, const RectMask& m) {
    const Silhouette masked = apply_mask(target, m);
    return foreground_count(target) - foreground_count(masked);
}

} // namespace

std::optional<RectMask> occlusion_mask(const Silhouette& target, double fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ValidationError("occlusion fraction must lie in [0,1)");
    const std::size_t total = foreground_count(target);
    if (fraction == 0.0 || total == 0) return std::nullopt;
    double sr = 0.0, sc = 0.0;
    for (std::size_t r = 0; r < target.height(); ++r) {
        for (std::size_t c = 0; c < target.width(); ++c) {
            if (target(r, c) > kBinaryThreshold) {
                sr += static_cast<double>(r);
                sc += static_cast<double>(c);
            }
        }
    }
    RectMask m;
    m.center_row = static_cast<std::size_t>(std::lround(sr / static_cast<double>(total)));
    m.center_col = static_cast<std::size_t>(std::lround(sc / static_cast<double>(total)));
    const double want = fraction * static_cast<double>(total);
    RectMask prev = m;
    double prev_removed = static_cast<double>(removed_foreground(target, m));
    const std::size_t max_h = 2 * target.height() + 1, max_w = 2 * target.width() + 1;
    bool grow_height = true;
    while (prev_removed < want && (prev.mask_height < max_h || prev.mask_width < max_w)) {
        RectMask next = prev;
        if ((grow_height && next.mask_height < max_h) || next.mask_width >= max_w) {
            ++next.mask_height;
        } else {
            ++next.mask_width;
        }
        grow_height = !grow_height;
        const double removed = static_cast<double>(removed_foreground(target, next));
        if (removed >= want) {
            return std::abs(removed - want) <= std::abs(prev_removed - want) ? next : prev;
        }
        prev = next;
        prev_removed = removed;
    }
    return prev;
}

std::vector<StressRecord> stress_test(const Checkpoint& ckpt, const Silhouette& source,
                                      const Silhouette& full_target, const std::vector<double>& fractions) {
    for (std::size_t k = 0; k < fractions.size(); ++k) {
        if (!(fractions[k] >= 0.0 && fractions[k] < 1.0)) throw ValidationError("stress fractions must lie in [0,1)");
        if (k > 0 && !(fractions[k] > fractions[k - 1])) throw ValidationError("stress fractions must ascend");
    }
    const double total = static_cast<double>(foreground_count(full_target));
    std::vector<StressRecord> out;
    for (double f : fractions) {
        StressRecord rec;
        rec.requested_fraction = f;
        rec.mask = occlusion_mask(full_target, f);
        const Silhouette partial = rec.mask ? apply_mask(full_target, *rec.mask) : full_target;
        rec.achieved_fraction =
            total > 0.0 ? (total - static_cast<double>(foreground_count(partial))) / total : 0.0;
        rec.iou = iou(infer(ckpt, source, partial).warped, full_target);
        out.push_back(rec);
    }
    return out;
}

} // namespace ffdalign
