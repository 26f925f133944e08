#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ffdalign {

using Rng = std::mt19937_64;

// Dense row-major scalar field. Used for warp channels, gradients and images alike.
struct Field {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Field() = default;
    Field(std::size_t rows_, std::size_t cols_, double fill = 0.0)
        : rows(rows_), cols(cols_), data(rows_ * cols_, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Field& o) const { return rows == o.rows && cols == o.cols; }
};

double max_abs_difference(const Field& a, const Field& b);

// Binary-ish shape image: background 0, foreground 1, soft values in between.
// Invariants: height >= 2, width >= 2, every value in [0,1].
class Silhouette {
public:
    Silhouette() = default;
    Silhouette(std::size_t height, std::size_t width, double fill = 0.0);
    // Validates the invariants; throws ValidationError.
    explicit Silhouette(Field values);

    std::size_t height() const { return field_.rows; }
    std::size_t width() const { return field_.cols; }
    std::size_t size() const { return field_.size(); }

    double operator()(std::size_t r, std::size_t c) const { return field_(r, c); }
    // Writes are clamped to [0,1].
    void set(std::size_t r, std::size_t c, double v);

    const Field& field() const { return field_; }
    std::span<const double> values() const { return field_.data; }

    bool operator==(const Silhouette& o) const {
        return field_.rows == o.field_.rows && field_.cols == o.field_.cols && field_.data == o.field_.data;
    }

private:
    Field field_;
};

struct RectMask {
    std::size_t center_row = 0;
    std::size_t center_col = 0;
    std::size_t mask_height = 1;
    std::size_t mask_width = 1;
};

// Closed interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Pixel i of n <-> -1 + 2i/(n-1).
inline double to_normalized(double pixel, std::size_t n) {
    return -1.0 + 2.0 * pixel / static_cast<double>(n - 1);
}
inline double to_pixel(double normalized, std::size_t n) {
    return (normalized + 1.0) * 0.5 * static_cast<double>(n - 1);
}

constexpr double kBinaryThreshold = 0.5;

std::size_t foreground_count(const Silhouette& s, double threshold = kBinaryThreshold);
Silhouette binarize(const Silhouette& s, double threshold = kBinaryThreshold);

// Zeroes the rectangle [center - size/2, center - size/2 + size) clipped to the image.
Silhouette apply_mask(const Silhouette& target, const RectMask& mask);
// Pointwise product with an arbitrary mask image (1 keeps, 0 removes).
Silhouette apply_mask_image(const Silhouette& target, const Silhouette& keep);

// Centre uniform over foreground pixels; each side ~ Uniform(size_range) * image side, at least 1.
RectMask random_mask(const Silhouette& target, Interval size_range, Rng& rng);

// splitmix64 of (seed, stream): independent seeds for sub-streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Intersection over union of the binarizations; 1 when both are empty.
double iou(const Silhouette& a, const Silhouette& b, double threshold = kBinaryThreshold);

} // namespace ffdalign
