#include "ffdalign/grids.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ffdalign/errors.hpp"

namespace ffdalign {

double max_abs_difference(const Field& a, const Field& b) {
    if (!a.same_shape(b)) {
        throw ValidationError("max_abs_difference: shape mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

Silhouette::Silhouette(std::size_t height, std::size_t width, double fill)
    : Silhouette(Field(height, width, fill)) {}

Silhouette::Silhouette(Field values) : field_(std::move(values)) {
    if (field_.rows < 2 || field_.cols < 2) {
        throw ValidationError("silhouette must be at least 2x2, got " + std::to_string(field_.rows) + "x" +
                              std::to_string(field_.cols));
    }
    for (double v : field_.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError("silhouette values must lie in [0,1]");
        }
    }
}

void Silhouette::set(std::size_t r, std::size_t c, double v) {
    field_(r, c) = std::clamp(v, 0.0, 1.0);
}

std::size_t foreground_count(const Silhouette& s, double threshold) {
    return static_cast<std::size_t>(
        std::count_if(s.values().begin(), s.values().end(), [threshold](double v) { return v > threshold; }));
}

Silhouette binarize(const Silhouette& s, double threshold) {
    Field f = s.field();
    for (double& v : f.data) {
        v = v > threshold ? 1.0 : 0.0;
    }
    return Silhouette(std::move(f));
}

namespace {

void check_mask(const Silhouette& target, const RectMask& mask) {
    if (mask.center_row >= target.height() || mask.center_col >= target.width()) {
        throw ValidationError("mask center lies outside the image");
    }
    if (mask.mask_height < 1 || mask.mask_width < 1) {
        throw ValidationError("mask dimensions must be >= 1");
    }
}

} // namespace

Silhouette apply_mask(const Silhouette& target, const RectMask& mask) {
    check_mask(target, mask);
    Field out = target.field();
    const auto top = static_cast<long>(mask.center_row) - static_cast<long>(mask.mask_height / 2);
    const auto left = static_cast<long>(mask.center_col) - static_cast<long>(mask.mask_width / 2);
    const long r0 = std::max(0L, top);
    const long c0 = std::max(0L, left);
    const long r1 = std::min(static_cast<long>(out.rows), top + static_cast<long>(mask.mask_height));
    const long c1 = std::min(static_cast<long>(out.cols), left + static_cast<long>(mask.mask_width));
    for (long r = r0; r < r1; ++r) {
        for (long c = c0; c < c1; ++c) {
            out(r, c) = 0.0;
        }
    }
    return Silhouette(std::move(out));
}

Silhouette apply_mask_image(const Silhouette& target, const Silhouette& keep) {
    if (target.height() != keep.height() || target.width() != keep.width()) {
        throw ValidationError("apply_mask_image: dimension mismatch");
    }
    Field out = target.field();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] *= keep.values()[i];
    }
    return Silhouette(std::move(out));
}

RectMask random_mask(const Silhouette& target, Interval size_range, Rng& rng) {
    if (!(size_range.lo > 0.0 && size_range.lo <= size_range.hi && size_range.hi <= 1.0)) {
        throw ValidationError("mask size range must satisfy 0 < lo <= hi <= 1");
    }
    std::vector<std::size_t> fg;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target.values()[i] > kBinaryThreshold) {
            fg.push_back(i);
        }
    }
    if (fg.empty()) {
        throw ValidationError("random_mask: target has no foreground pixel");
    }
    std::uniform_int_distribution<std::size_t> pick(0, fg.size() - 1);
    std::uniform_real_distribution<double> frac(size_range.lo, size_range.hi);
    const std::size_t idx = fg[pick(rng)];
    RectMask m;
    m.center_row = idx / target.width();
    m.center_col = idx % target.width();
    const double fh = frac(rng);
    const double fw = frac(rng);
    m.mask_height = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fh * target.height())));
    m.mask_width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fw * target.width())));
    return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double iou(const Silhouette& a, const Silhouette& b, double threshold) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ValidationError("iou: dimension mismatch");
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool fa = a.values()[i] > threshold;
        const bool fb = b.values()[i] > threshold;
        inter += (fa && fb) ? 1 : 0;
        uni += (fa || fb) ? 1 : 0;
    }
    if (uni == 0) {
        return 1.0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace ffdalign
