#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "ffdalign/grids.hpp"
#include "ffdalign/parametrization.hpp"
#include "ffdalign/sampler.hpp"

namespace testutil {

using namespace ffdalign;

inline Field random_field(std::size_t rows, std::size_t cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Field f(rows, cols);
    for (double& v : f.data) v = u(rng);
    return f;
}

inline Silhouette random_silhouette(std::size_t h, std::size_t w, Rng& rng) {
    return Silhouette(random_field(h, w, rng));
}

// Images with soft edges so the chain is differentiable almost everywhere.
inline Silhouette smooth_blob(std::size_t n, double cx, double cy, double rx, double ry) {
    Silhouette s(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const double x = to_normalized(static_cast<double>(c), n) - cx;
            const double y = to_normalized(static_cast<double>(r), n) - cy;
            const double d = std::sqrt((x * x) / (rx * rx) + (y * y) / (ry * ry));
            s.set(r, c, 1.0 / (1.0 + std::exp(8.0 * (d - 1.0))));
        }
    }
    return s;
}

inline DifferentialWarp perturbed_identity(std::size_t m, std::size_t n, Rng& rng, double amp) {
    DifferentialWarp d = identity_differential(m, n);
    std::uniform_real_distribution<double> u(-amp, amp);
    for (double& v : d.dx.data) v += u(rng) * v;
    for (double& v : d.dy.data) v += u(rng) * v;
    d.offset_x += u(rng) * 0.05;
    d.offset_y += u(rng) * 0.05;
    return d;
}

inline double dot(const Field& a, const Field& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double rel_err(double analytic, double numeric, double floor = 1e-8) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("ffdalign_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Regular per-pixel grid, built without the library.
inline DenseWarp regular_dense(std::size_t h, std::size_t w) {
    DenseWarp d(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            d.x(r, c) = -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(w - 1);
            d.y(r, c) = -1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(h - 1);
        }
    }
    return d;
}

} // namespace testutil
