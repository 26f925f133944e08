#include <algorithm>
#include <cmath>
#include <limits>

#include "ffdalign/errors.hpp"
#include "ffdalign/evaluator.hpp"

namespace ffdalign {

bool AffineParams::all_finite() const {
    for (double v : {a11, a12, a13, a21, a22, a23}) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

DenseWarp affine_warp(const AffineParams& a, std::size_t height, std::size_t width) {
    DenseWarp w = identity_dense(height, width);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            const double col = static_cast<double>(c), row = static_cast<double>(r);
            w.x(r, c) = to_normalized(a.a11 * col + a.a12 * row + a.a13, width);
            w.y(r, c) = to_normalized(a.a21 * col + a.a22 * row + a.a23, height);
        }
    }
    return w;
}

std::vector<PixelPoint> contour_points(const Silhouette& s) {
    const std::size_t h = s.height(), w = s.width();
    auto fg = [&](std::size_t r, std::size_t c) { return s(r, c) > kBinaryThreshold; };
    std::vector<PixelPoint> out;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (!fg(r, c)) continue;
            const bool edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w || !fg(r - 1, c) || !fg(r + 1, c) ||
                              !fg(r, c - 1) || !fg(r, c + 1);
            if (edge) out.push_back({static_cast<double>(c), static_cast<double>(r)});
        }
    }
    return out;
}

namespace {

double twice_area(const std::array<PixelPoint, 3>& p) {
    return (p[1].col - p[0].col) * (p[2].row - p[0].row) - (p[2].col - p[0].col) * (p[1].row - p[0].row);
}

// Lattice triangles have |2A| >= 1 unless collinear.
constexpr double kMinTwiceArea = 0.5;

PixelPoint centroid(const std::vector<PixelPoint>& pts) {
    PixelPoint c;
    for (const auto& p : pts) {
        c.col += p.col;
        c.row += p.row;
    }
    c.col /= static_cast<double>(pts.size());
    c.row /= static_cast<double>(pts.size());
    return c;
}

const PixelPoint& nearest(const std::vector<PixelPoint>& pts, PixelPoint q) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double dc = pts[i].col - q.col, dr = pts[i].row - q.row;
        const double d = dc * dc + dr * dr;
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return pts[best];
}

} // namespace

std::optional<AffineParams> solve_affine(const std::array<PixelPoint, 3>& dst, const std::array<PixelPoint, 3>& src) {
    const double det = twice_area(dst);
    if (std::abs(det) < kMinTwiceArea || std::abs(twice_area(src)) < kMinTwiceArea) return std::nullopt;
    // Cramer's rule on [col row 1] a = rhs for each output coordinate.
    auto solve = [&](double b0, double b1, double b2) {
        const std::array<double, 3> b{b0, b1, b2};
        auto d3 = [&](int replace) {
            double m[3][3];
            for (int k = 0; k < 3; ++k) {
                m[k][0] = dst[k].col;
                m[k][1] = dst[k].row;
                m[k][2] = 1.0;
                m[k][replace] = b[k];
            }
            return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                   m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        };
        return std::array<double, 3>{d3(0) / det, d3(1) / det, d3(2) / det};
    };
    const auto cx = solve(src[0].col, src[1].col, src[2].col);
    const auto cy = solve(src[0].row, src[1].row, src[2].row);
    AffineParams a{cx[0], cx[1], cx[2], cy[0], cy[1], cy[2]};
    if (!a.all_finite()) return std::nullopt;
    return a;
}

RansacResult ransac_affine(const Silhouette& source, const Silhouette& target, const RansacConfig& config) {
    if (config.iterations == 0) throw ValidationError("RANSAC needs at least one iteration");
    if (source.height() != target.height() || source.width() != target.width()) {
        throw ValidationError("RANSAC source and target sizes differ");
    }
    if (!(config.guided_fraction >= 0.0 && config.guided_fraction <= 1.0)) {
        throw ValidationError("guided fraction must lie in [0,1]");
    }
    const auto src_pts = contour_points(source);
    const auto dst_pts = contour_points(target);
    if (src_pts.size() < 3 || dst_pts.size() < 3) throw ValidationError("RANSAC needs >= 3 contour pixels per image");

    const PixelPoint shift{centroid(dst_pts).col - centroid(src_pts).col, centroid(dst_pts).row - centroid(src_pts).row};
    Rng rng(config.seed);
    std::uniform_int_distribution<std::size_t> pick_src(0, src_pts.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_dst(0, dst_pts.size() - 1);
    std::bernoulli_distribution guided(config.guided_fraction);
    constexpr int kMaxTries = 64;

    RansacResult best;
    best.score = -1.0;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        std::optional<AffineParams> hyp;
        for (int t = 0; t < kMaxTries && !hyp; ++t) {
            std::array<PixelPoint, 3> s, d;
            for (int k = 0; k < 3; ++k) s[k] = src_pts[pick_src(rng)];
            if (guided(rng)) {
                for (int k = 0; k < 3; ++k) d[k] = nearest(dst_pts, {s[k].col + shift.col, s[k].row + shift.row});
            } else {
                for (int k = 0; k < 3; ++k) d[k] = dst_pts[pick_dst(rng)];
            }
            hyp = solve_affine(d, s);
        }
        if (hyp) {
            ++best.hypotheses;
            Silhouette warped = resample(source, affine_warp(*hyp, source.height(), source.width()));
            const double score = iou(warped, target);
            if (score > best.score) {
                best.score = score;
                best.affine = *hyp;
                best.warped = std::move(warped);
            }
        }
        best.running_best.push_back(std::max(best.score, 0.0));
    }
    if (best.hypotheses == 0) throw ValidationError("RANSAC: every sampled triple was degenerate");
    return best;
}

} // namespace ffdalign
