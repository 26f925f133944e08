#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ffdalign/checkpoint.hpp"
#include "ffdalign/grids.hpp"
#include "ffdalign/parametrization.hpp"
#include "ffdalign/sampler.hpp"
#include "ffdalign/serialize.hpp"

namespace ffdalign {

struct Inference {
    DifferentialWarp raw;
    DifferentialWarp effective;
    ControlWarp control;
    DenseWarp dense;
    Silhouette warped;
};

// Frozen forward pass; parameters are taken by const reference and never touched.
Inference run_inference(const RegressorParams<float>& params, RegularizationMode mode, const Silhouette& source,
                        const Silhouette& partial_target);
Inference infer(const Checkpoint& ckpt, const Silhouette& source, const Silhouette& partial_target);

struct HeldoutScore {
    double warped_iou = 0.0;    // IOU(warped source, full target), partial input
    double baseline_iou = 0.0;  // IOU(source, full target)
    std::size_t pairs = 0;
};

// Ordered pair p = (i, j), i != j, enumerated row by row. Its mask stream is derive_seed(seed, p).
std::size_t ordered_pair_count(std::size_t items);
std::pair<std::size_t, std::size_t> ordered_pair(std::size_t items, std::size_t pair_id);

// Mean IOU over ordered test pairs with seeded random masks (mask_range.hi <= 0: unmasked).
// max_pairs > 0 evaluates the first max_pairs pairs only.
HeldoutScore heldout_score(const RegressorParams<float>& params, RegularizationMode mode,
                           const std::vector<Silhouette>& test, Interval mask_range, std::uint64_t seed,
                           std::size_t max_pairs = 0, std::size_t threads = 1);

enum class MaskProtocol { None, Random };

struct MaskProtocolConfig {
    MaskProtocol kind = MaskProtocol::Random;
    Interval size_range{0.2, 0.6};
    std::uint64_t seed = 0;
};

MaskProtocol parse_mask_protocol(std::string_view text);

struct PairRecord {
    std::size_t pair_id = 0;
    std::size_t source_index = 0;
    std::size_t target_index = 0;
    std::optional<RectMask> mask;
    double iou_partial_input = 0.0;
    double iou_full_input = 0.0;
    double iou_identity = 0.0;
    double smoothness = 0.0;         // TV-identity value of the partial-input warp
    double warp_consistency = 0.0;   // max-abs ControlWarp difference, partial vs full input
};

struct EvalReport {
    std::vector<PairRecord> records;  // sorted by pair id
    std::vector<std::string> item_names;
    double mean_iou_partial_input = 0.0;
    double mean_iou_full_input = 0.0;
    double mean_iou_identity = 0.0;
    double mean_smoothness = 0.0;
    double mean_warp_consistency = 0.0;
};

EvalReport eval_testset(const Checkpoint& ckpt, const std::vector<Silhouette>& test,
                        const std::vector<std::string>& names, const MaskProtocolConfig& protocol,
                        std::size_t threads = 1);

std::string eval_csv(const EvalReport& report);
Json eval_summary(const EvalReport& report);

// Side-by-side strip: source | partial target | warped | full target.
Silhouette comparison_strip(const Silhouette& source, const Silhouette& partial, const Silhouette& warped,
                            const Silhouette& full_target);

struct AgnosticismScore {
    double mean_pairwise_iou = 0.0;
    double mean_warp_difference = 0.0;
    std::size_t variants = 0;  // masks + the full target
};

// Pairwise comparison over the inferences for every masked target and the full target.
AgnosticismScore partial_agnosticism_score(const Checkpoint& ckpt, const Silhouette& source,
                                           const Silhouette& full_target, const std::vector<RectMask>& masks);

struct StressRecord {
    double requested_fraction = 0.0;
    double achieved_fraction = 0.0;
    std::optional<RectMask> mask;
    double iou = 0.0;
};

// Rectangle centred on the foreground centroid, grown alternately in height and width,
// whose removal is closest to `fraction` of the foreground.
std::optional<RectMask> occlusion_mask(const Silhouette& target, double fraction);

std::vector<StressRecord> stress_test(const Checkpoint& ckpt, const Silhouette& source,
                                      const Silhouette& full_target, const std::vector<double>& fractions);

// Backward map: target pixel (col, row) looks up source (a11 col + a12 row + a13, a21 col + a22 row + a23).
struct AffineParams {
    double a11 = 1.0, a12 = 0.0, a13 = 0.0;
    double a21 = 0.0, a22 = 1.0, a23 = 0.0;
    bool all_finite() const;
};

struct PixelPoint {
    double col = 0.0;
    double row = 0.0;
};

DenseWarp affine_warp(const AffineParams& a, std::size_t height, std::size_t width);

// Foreground pixels (after binarization) with at least one background 4-neighbour or on the image border.
std::vector<PixelPoint> contour_points(const Silhouette& s);

// Exact affine with a(dst[k]) = src[k]; nullopt when either triple is collinear.
std::optional<AffineParams> solve_affine(const std::array<PixelPoint, 3>& dst, const std::array<PixelPoint, 3>& src);

struct RansacConfig {
    std::size_t iterations = 2000;
    std::uint64_t seed = 0;
    // Share of hypotheses whose target points are the centroid-aligned nearest contour points
    // of the source sample; the rest pair independent uniform samples.
    double guided_fraction = 0.5;
};

struct RansacResult {
    AffineParams affine;
    Silhouette warped;
    double score = 0.0;
    std::size_t hypotheses = 0;
    std::vector<double> running_best;  // best score after each iteration
};

RansacResult ransac_affine(const Silhouette& source, const Silhouette& target, const RansacConfig& config = {});

} // namespace ffdalign
