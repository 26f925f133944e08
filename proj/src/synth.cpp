#include "ffdalign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ffdalign/errors.hpp"
#include "ffdalign/image_io.hpp"

namespace ffdalign {

ShapeKind parse_shape_kind(std::string_view text) {
    if (text == "ellipse") return ShapeKind::Ellipse;
    if (text == "rounded-rect" || text == "rect") return ShapeKind::RoundedRect;
    if (text == "cross") return ShapeKind::Cross;
    throw ValidationError("unknown shape kind '" + std::string(text) + "' (expected ellipse, rounded-rect, cross)");
}

std::string_view to_string(ShapeKind kind) {
    switch (kind) {
    case ShapeKind::Ellipse: return "ellipse";
    case ShapeKind::RoundedRect: return "rounded-rect";
    case ShapeKind::Cross: return "cross";
    }
    return "ellipse";
}

namespace {

template <typename Inside>
Silhouette paint(std::size_t resolution, double cx, double cy, double angle, Inside inside) {
    Silhouette s(resolution, resolution);
    const double c = std::cos(angle), sn = std::sin(angle);
    for (std::size_t r = 0; r < resolution; ++r) {
        for (std::size_t col = 0; col < resolution; ++col) {
            const double x = to_normalized(static_cast<double>(col), resolution) - cx;
            const double y = to_normalized(static_cast<double>(r), resolution) - cy;
            // shape frame
            const double u = c * x + sn * y;
            const double v = -sn * x + c * y;
            if (inside(u, v)) s.set(r, col, 1.0);
        }
    }
    return s;
}

} // namespace

Silhouette render_ellipse(std::size_t resolution, double cx, double cy, double semi_x, double semi_y, double angle) {
    return paint(resolution, cx, cy, angle, [=](double u, double v) {
        return (u * u) / (semi_x * semi_x) + (v * v) / (semi_y * semi_y) <= 1.0;
    });
}

Silhouette render_rounded_rect(std::size_t resolution, double cx, double cy, double half_w, double half_h,
                               double radius, double angle) {
    radius = std::min({radius, half_w, half_h});
    return paint(resolution, cx, cy, angle, [=](double u, double v) {
        const double qx = std::abs(u) - (half_w - radius);
        const double qy = std::abs(v) - (half_h - radius);
        if (qx <= 0.0 || qy <= 0.0) return std::abs(u) <= half_w && std::abs(v) <= half_h;
        return qx * qx + qy * qy <= radius * radius;
    });
}

Silhouette render_cross(std::size_t resolution, double cx, double cy, double arm_length, double arm_width,
                        double angle) {
    return paint(resolution, cx, cy, angle, [=](double u, double v) {
        const bool horizontal = std::abs(u) <= arm_length && std::abs(v) <= arm_width;
        const bool vertical = std::abs(v) <= arm_length && std::abs(u) <= arm_width;
        return horizontal || vertical;
    });
}

Silhouette render_square(std::size_t height, std::size_t width, std::size_t top, std::size_t left, std::size_t side) {
    Silhouette s(height, width);
    for (std::size_t r = top; r < std::min(height, top + side); ++r) {
        for (std::size_t c = left; c < std::min(width, left + side); ++c) s.set(r, c, 1.0);
    }
    return s;
}

Silhouette random_shape(ShapeKind kind, std::size_t resolution, Rng& rng) {
    auto u = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const double cx = u(-0.1, 0.1);
    const double cy = u(-0.1, 0.1);
    switch (kind) {
    case ShapeKind::Ellipse: {
        const double a = u(0.3, 0.75);
        const double b = u(0.3, 0.75);
        return render_ellipse(resolution, cx, cy, a, b, u(-0.5, 0.5));
    }
    case ShapeKind::RoundedRect: {
        const double hw = u(0.3, 0.7);
        const double hh = u(0.3, 0.7);
        return render_rounded_rect(resolution, cx, cy, hw, hh, u(0.05, 0.25), u(-0.3, 0.3));
    }
    case ShapeKind::Cross: {
        return render_cross(resolution, cx, cy, u(0.5, 0.8), u(0.12, 0.25), u(-0.3, 0.3));
    }
    }
    throw ValidationError("unknown shape kind");
}

std::vector<Silhouette> synthesize(ShapeKind kind, std::size_t count, std::size_t resolution, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Silhouette> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_shape(kind, resolution, rng));
    return out;
}

std::vector<std::string> write_synthetic_dataset(const std::filesystem::path& dir, ShapeKind kind, std::size_t count,
                                                 std::size_t resolution, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    const auto shapes = synthesize(kind, count, resolution, seed);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%04zu.png", std::string(to_string(kind)).c_str(), i);
        save_silhouette(dir / name, shapes[i]);
        names.emplace_back(name);
    }
    return names;
}

} // namespace ffdalign
