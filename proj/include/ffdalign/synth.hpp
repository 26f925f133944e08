#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ffdalign/grids.hpp"

namespace ffdalign {

// Procedural shape classes with parameter jitter. Geometry is specified in
// normalized coordinates; a pixel is foreground when its centre is inside.
enum class ShapeKind { Ellipse, RoundedRect, Cross };

ShapeKind parse_shape_kind(std::string_view text);
std::string_view to_string(ShapeKind kind);

Silhouette render_ellipse(std::size_t resolution, double cx, double cy, double semi_x, double semi_y, double angle);
Silhouette render_rounded_rect(std::size_t resolution, double cx, double cy, double half_w, double half_h,
                               double radius, double angle);
Silhouette render_cross(std::size_t resolution, double cx, double cy, double arm_length, double arm_width,
                        double angle);

// Axis-aligned square of `side` pixels whose top-left pixel is (top, left).
Silhouette render_square(std::size_t height, std::size_t width, std::size_t top, std::size_t left, std::size_t side);

// One jittered instance of the class.
Silhouette random_shape(ShapeKind kind, std::size_t resolution, Rng& rng);

std::vector<Silhouette> synthesize(ShapeKind kind, std::size_t count, std::size_t resolution, std::uint64_t seed);

// Writes <dir>/<kind>_<index>.png, returns the file names in order.
std::vector<std::string> write_synthetic_dataset(const std::filesystem::path& dir, ShapeKind kind, std::size_t count,
                                                 std::size_t resolution, std::uint64_t seed);

} // namespace ffdalign
