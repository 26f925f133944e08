#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ffdalign/adam.hpp"
#include "ffdalign/checkpoint.hpp"
#include "ffdalign/grids.hpp"
#include "ffdalign/losses.hpp"
#include "ffdalign/parametrization.hpp"
#include "ffdalign/regressor.hpp"
#include "ffdalign/serialize.hpp"

namespace ffdalign {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    double lambda = 1e-5;
    RegularizationMode mode = RegularizationMode::TVMonotonic;
    LossNormalization normalization = LossNormalization::Sum;
    // Mask side fractions; hi <= 0 disables masking.
    Interval mask_range{0.2, 0.6};
    // Per-axis target scale factors.
    Interval scale_range{0.9, 1.1};
    // Target rotation in degrees; [0, 0] disables it.
    Interval rotation_range{0.0, 0.0};
    bool augment_source = false;
    std::uint64_t seed = 0;
    // 0 writes only the final checkpoint.
    std::size_t checkpoint_every = 0;
    std::size_t resolution = 64;
    std::size_t m = 8;
    std::size_t n = 8;
    std::size_t threads = 1;
    // Held-out evaluation after every epoch; 0 pairs uses every ordered test pair.
    bool heldout_each_epoch = true;
    std::size_t heldout_max_pairs = 0;
    AdamConfig adam;

    void validate() const;
    Architecture architecture() const { return {resolution, m, n}; }
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

// Item names are paths relative to `root`.
struct Dataset {
    std::filesystem::path root;
    std::vector<std::string> train_items;
    std::vector<std::string> test_items;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultTestCount = 30;
inline constexpr double kFallbackTestFraction = 0.2;

// Sorted PNG listing shuffled by seed. `test_count` items go to test when the pool
// has at least twice that many; otherwise round(0.2 N) (at least 1) with a warning.
// A non-empty manifest_path also writes the manifest there.
Dataset split_dataset(const std::filesystem::path& directory, std::uint64_t seed,
                      std::size_t test_count = kDefaultTestCount, const std::filesystem::path& manifest_path = {});

// {root, seed, items: [{path, split}], warnings}
Json manifest_json(const Dataset& d);
Dataset dataset_from_manifest(const Json& j, const std::filesystem::path& root_override = {});
void write_manifest(const std::filesystem::path& path, const Dataset& d);
Dataset read_manifest(const std::filesystem::path& path);

struct ImagePool {
    std::vector<Silhouette> train;
    std::vector<Silhouette> test;
    std::vector<std::string> train_names;
    std::vector<std::string> test_names;
};

// Loads every item; all images must be resolution x resolution.
ImagePool load_pool(const Dataset& d, std::size_t resolution);

struct PairSample {
    std::size_t source_index = 0;
    std::size_t target_index = 0;
    Silhouette source;
    Silhouette full_target;
    Silhouette partial_target;
    std::optional<RectMask> mask;
};

// Draws `count` pairs uniformly with replacement, source != target item.
std::vector<PairSample> sample_batch(const std::vector<Silhouette>& pool, const TrainConfig& config, Rng& rng,
                                     std::size_t count);

struct StepRecord {
    std::uint64_t step = 0;
    std::size_t epoch = 0;
    LossReport report;  // batch means
    std::optional<double> heldout_iou;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::uint64_t last_step = 0;
    double mean_shape_loss = 0.0;
    double mean_total = 0.0;
    // Mean TV-identity value of the applied differential over the epoch's samples.
    double mean_smoothness = 0.0;
    std::optional<double> heldout_iou;
    std::optional<double> baseline_iou;
};

std::string step_metrics_csv(const std::vector<StepRecord>& steps);
std::string epoch_metrics_csv(const std::vector<EpochRecord>& epochs);

struct TrainResult {
    Checkpoint final_checkpoint;
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
};

struct TrainOptions {
    // When set: metrics.csv, epochs.csv, checkpoints/ and final.ckpt are written here.
    std::optional<std::filesystem::path> output_dir;
    std::optional<Checkpoint> resume;
    std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(const ImagePool& pool, const TrainConfig& config, const TrainOptions& options = {});

} // namespace ffdalign
