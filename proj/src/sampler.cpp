#include "ffdalign/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "ffdalign/errors.hpp"

namespace ffdalign {

namespace {

// Interpolation stencil along one axis of length n: base index and fraction with base <= n-2.
struct AxisStencil {
    std::size_t base;
    double frac;
};

AxisStencil clamped_stencil(double pos, std::size_t n) {
    double base = std::floor(pos);
    base = std::clamp(base, 0.0, static_cast<double>(n - 2));
    return {static_cast<std::size_t>(base), pos - base};
}

std::vector<AxisStencil> node_stencils(std::size_t pixels, std::size_t nodes) {
    std::vector<AxisStencil> s(pixels);
    for (std::size_t i = 0; i < pixels; ++i) {
        const double pos = static_cast<double>(i * (nodes - 1)) / static_cast<double>(pixels - 1);
        s[i] = clamped_stencil(pos, nodes);
    }
    return s;
}

void check_dense(const DenseWarp& w, std::size_t h, std::size_t wd, const char* who) {
    if (w.height != h || w.width != wd) {
        throw ValidationError(std::string(who) + ": warp dimensions do not match the image");
    }
}

// Zero-padded bilinear tap: corner values and the fractional position.
struct Tap {
    long x0, y0;
    double fx, fy;
    bool any_inside;
};

constexpr double kLatticeSnap = 1e-9;

Tap make_tap(double lx, double ly, std::size_t h, std::size_t w) {
    double px = to_pixel(lx, w);
    double py = to_pixel(ly, h);
    // round-trip noise from the normalized mapping would otherwise blur lattice hits
    if (std::abs(px - std::round(px)) < kLatticeSnap) px = std::round(px);
    if (std::abs(py - std::round(py)) < kLatticeSnap) py = std::round(py);
    Tap t{};
    if (!(px > -1.0 && px < static_cast<double>(w) && py > -1.0 && py < static_cast<double>(h))) {
        t.any_inside = false;
        return t;
    }
    const double fx0 = std::floor(px);
    const double fy0 = std::floor(py);
    t.x0 = static_cast<long>(fx0);
    t.y0 = static_cast<long>(fy0);
    t.fx = px - fx0;
    t.fy = py - fy0;
    t.any_inside = true;
    return t;
}

inline double padded(const Field& f, long r, long c) {
    if (r < 0 || c < 0 || r >= static_cast<long>(f.rows) || c >= static_cast<long>(f.cols)) {
        return 0.0;
    }
    return f(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

} // namespace

ControlWarp WarpGradients::as_control() const {
    ControlWarp c(d_control_x.rows, d_control_x.cols);
    c.x = d_control_x;
    c.y = d_control_y;
    return c;
}

DenseWarp identity_dense(std::size_t height, std::size_t width) {
    DenseWarp w(height, width);
    for (std::size_t r = 0; r < height; ++r) {
        const double y = to_normalized(static_cast<double>(r), height);
        for (std::size_t c = 0; c < width; ++c) {
            w.x(r, c) = to_normalized(static_cast<double>(c), width);
            w.y(r, c) = y;
        }
    }
    return w;
}

double max_abs_difference(const DenseWarp& a, const DenseWarp& b) {
    return std::max(max_abs_difference(a.x, b.x), max_abs_difference(a.y, b.y));
}

DenseWarp upsample(const ControlWarp& control, std::size_t height, std::size_t width) {
    if (height < 2 || width < 2) {
        throw ValidationError("upsample: output must be at least 2x2");
    }
    if (control.m < 2 || control.n < 2) {
        throw ValidationError("upsample: control grid must be at least 2x2");
    }
    const auto rs = node_stencils(height, control.m);
    const auto cs = node_stencils(width, control.n);
    DenseWarp out(height, width);
    for (std::size_t i = 0; i < height; ++i) {
        const auto [r0, fr] = rs[i];
        for (std::size_t j = 0; j < width; ++j) {
            const auto [c0, fc] = cs[j];
            const double w00 = (1 - fr) * (1 - fc), w01 = (1 - fr) * fc, w10 = fr * (1 - fc), w11 = fr * fc;
            out.x(i, j) = w00 * control.x(r0, c0) + w01 * control.x(r0, c0 + 1) + w10 * control.x(r0 + 1, c0) +
                          w11 * control.x(r0 + 1, c0 + 1);
            out.y(i, j) = w00 * control.y(r0, c0) + w01 * control.y(r0, c0 + 1) + w10 * control.y(r0 + 1, c0) +
                          w11 * control.y(r0 + 1, c0 + 1);
        }
    }
    return out;
}

WarpGradients upsample_backward(const ControlWarp& control, const DenseWarp& grad_dense) {
    const std::size_t height = grad_dense.height;
    const std::size_t width = grad_dense.width;
    const auto rs = node_stencils(height, control.m);
    const auto cs = node_stencils(width, control.n);
    WarpGradients g;
    g.d_control_x = Field(control.m, control.n);
    g.d_control_y = Field(control.m, control.n);
    for (std::size_t i = 0; i < height; ++i) {
        const auto [r0, fr] = rs[i];
        for (std::size_t j = 0; j < width; ++j) {
            const auto [c0, fc] = cs[j];
            const double gx = grad_dense.x(i, j);
            const double gy = grad_dense.y(i, j);
            const double w00 = (1 - fr) * (1 - fc), w01 = (1 - fr) * fc, w10 = fr * (1 - fc), w11 = fr * fc;
            g.d_control_x(r0, c0) += w00 * gx;
            g.d_control_x(r0, c0 + 1) += w01 * gx;
            g.d_control_x(r0 + 1, c0) += w10 * gx;
            g.d_control_x(r0 + 1, c0 + 1) += w11 * gx;
            g.d_control_y(r0, c0) += w00 * gy;
            g.d_control_y(r0, c0 + 1) += w01 * gy;
            g.d_control_y(r0 + 1, c0) += w10 * gy;
            g.d_control_y(r0 + 1, c0 + 1) += w11 * gy;
        }
    }
    for (double v : g.d_control_x.data) g.d_offset_x += v;
    for (double v : g.d_control_y.data) g.d_offset_y += v;
    return g;
}

Field resample_field(const Field& source, const DenseWarp& warp) {
    check_dense(warp, source.rows, source.cols, "resample");
    Field out(source.rows, source.cols);
    for (std::size_t i = 0; i < out.rows; ++i) {
        for (std::size_t j = 0; j < out.cols; ++j) {
            const Tap t = make_tap(warp.x(i, j), warp.y(i, j), source.rows, source.cols);
            if (!t.any_inside) continue;
            const double v00 = padded(source, t.y0, t.x0), v01 = padded(source, t.y0, t.x0 + 1);
            const double v10 = padded(source, t.y0 + 1, t.x0), v11 = padded(source, t.y0 + 1, t.x0 + 1);
            out(i, j) = (1 - t.fy) * ((1 - t.fx) * v00 + t.fx * v01) + t.fy * ((1 - t.fx) * v10 + t.fx * v11);
        }
    }
    return out;
}

Silhouette resample(const Silhouette& source, const DenseWarp& warp) {
    Field out = resample_field(source.field(), warp);
    // Convex weights keep values in range up to rounding; clamp the rounding.
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return Silhouette(std::move(out));
}

Field resample_nearest(const Field& source, const DenseWarp& warp, double fill) {
    check_dense(warp, source.rows, source.cols, "resample_nearest");
    Field out(source.rows, source.cols, fill);
    for (std::size_t i = 0; i < out.rows; ++i) {
        for (std::size_t j = 0; j < out.cols; ++j) {
            const double px = std::round(to_pixel(warp.x(i, j), source.cols));
            const double py = std::round(to_pixel(warp.y(i, j), source.rows));
            if (px >= 0.0 && py >= 0.0 && px < static_cast<double>(source.cols) &&
                py < static_cast<double>(source.rows)) {
                out(i, j) = source(static_cast<std::size_t>(py), static_cast<std::size_t>(px));
            }
        }
    }
    return out;
}

ResampleGradients resample_backward(const Field& source, const DenseWarp& warp, const Field& grad_output,
                                    bool want_source_grad) {
    check_dense(warp, source.rows, source.cols, "resample_backward");
    if (!grad_output.same_shape(source)) {
        throw ValidationError("resample_backward: gradient shape mismatch");
    }
    const double sx = 0.5 * static_cast<double>(source.cols - 1);
    const double sy = 0.5 * static_cast<double>(source.rows - 1);
    ResampleGradients g;
    g.grad_warp = DenseWarp(source.rows, source.cols);
    if (want_source_grad) g.grad_source = Field(source.rows, source.cols);
    for (std::size_t i = 0; i < source.rows; ++i) {
        for (std::size_t j = 0; j < source.cols; ++j) {
            const double go = grad_output(i, j);
            if (go == 0.0) continue;
            const Tap t = make_tap(warp.x(i, j), warp.y(i, j), source.rows, source.cols);
            if (!t.any_inside) continue;
            const double v00 = padded(source, t.y0, t.x0), v01 = padded(source, t.y0, t.x0 + 1);
            const double v10 = padded(source, t.y0 + 1, t.x0), v11 = padded(source, t.y0 + 1, t.x0 + 1);
            const double d_fx = (1 - t.fy) * (v01 - v00) + t.fy * (v11 - v10);
            const double d_fy = (1 - t.fx) * (v10 - v00) + t.fx * (v11 - v01);
            g.grad_warp.x(i, j) = go * d_fx * sx;
            g.grad_warp.y(i, j) = go * d_fy * sy;
            if (want_source_grad) {
                const double w[4] = {(1 - t.fy) * (1 - t.fx), (1 - t.fy) * t.fx, t.fy * (1 - t.fx), t.fy * t.fx};
                const long rr[4] = {t.y0, t.y0, t.y0 + 1, t.y0 + 1};
                const long cc[4] = {t.x0, t.x0 + 1, t.x0, t.x0 + 1};
                for (int k = 0; k < 4; ++k) {
                    if (rr[k] >= 0 && cc[k] >= 0 && rr[k] < static_cast<long>(source.rows) &&
                        cc[k] < static_cast<long>(source.cols)) {
                        g.grad_source(static_cast<std::size_t>(rr[k]), static_cast<std::size_t>(cc[k])) += w[k] * go;
                    }
                }
            }
        }
    }
    return g;
}

DenseWarp rotation_warp(double theta, std::size_t height, std::size_t width) {
    if (!std::isfinite(theta)) {
        throw ValidationError("rotation_warp: theta must be finite");
    }
    DenseWarp w = identity_dense(height, width);
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t i = 0; i < w.x.size(); ++i) {
        const double x = w.x.data[i], y = w.y.data[i];
        w.x.data[i] = c * x + s * y;
        w.y.data[i] = -s * x + c * y;
    }
    return w;
}

double rotation_warp_backward(double theta, const DenseWarp& grad) {
    const DenseWarp base = identity_dense(grad.height, grad.width);
    const double c = std::cos(theta), s = std::sin(theta);
    double acc = 0.0;
    for (std::size_t i = 0; i < base.x.size(); ++i) {
        const double x = base.x.data[i], y = base.y.data[i];
        acc += grad.x.data[i] * (-s * x + c * y) + grad.y.data[i] * (-c * x - s * y);
    }
    return acc;
}

DenseWarp scale_warp(double sx, double sy, std::size_t height, std::size_t width) {
    if (!(sx > 0.0 && sy > 0.0)) {
        throw ValidationError("scale_warp: scale factors must be positive");
    }
    DenseWarp w = identity_dense(height, width);
    for (double& v : w.x.data) v /= sx;
    for (double& v : w.y.data) v /= sy;
    return w;
}

namespace {

struct ClampedTap {
    std::size_t x0, y0;
    double fx, fy;
    double dpx, dpy;  // d pixel / d normalized, 0 where clamped
};

ClampedTap clamped_tap(double lx, double ly, std::size_t h, std::size_t w) {
    const double px_raw = to_pixel(lx, w);
    const double py_raw = to_pixel(ly, h);
    const double px = std::clamp(px_raw, 0.0, static_cast<double>(w - 1));
    const double py = std::clamp(py_raw, 0.0, static_cast<double>(h - 1));
    const AxisStencil ax = clamped_stencil(px, w);
    const AxisStencil ay = clamped_stencil(py, h);
    ClampedTap t{ax.base, ay.base, ax.frac, ay.frac, 0.0, 0.0};
    t.dpx = (px_raw == px) ? 0.5 * static_cast<double>(w - 1) : 0.0;
    t.dpy = (py_raw == py) ? 0.5 * static_cast<double>(h - 1) : 0.0;
    return t;
}

double bilerp(const Field& f, const ClampedTap& t) {
    return (1 - t.fy) * ((1 - t.fx) * f(t.y0, t.x0) + t.fx * f(t.y0, t.x0 + 1)) +
           t.fy * ((1 - t.fx) * f(t.y0 + 1, t.x0) + t.fx * f(t.y0 + 1, t.x0 + 1));
}

} // namespace

DenseWarp compose(const DenseWarp& outer, const DenseWarp& inner) {
    if (outer.height != inner.height || outer.width != inner.width) {
        throw ValidationError("compose: dimension mismatch");
    }
    DenseWarp out(outer.height, outer.width);
    for (std::size_t i = 0; i < outer.x.size(); ++i) {
        const ClampedTap t = clamped_tap(outer.x.data[i], outer.y.data[i], inner.height, inner.width);
        out.x.data[i] = bilerp(inner.x, t);
        out.y.data[i] = bilerp(inner.y, t);
    }
    return out;
}

ComposeGradients compose_backward(const DenseWarp& outer, const DenseWarp& inner, const DenseWarp& grad_result) {
    if (outer.height != inner.height || outer.width != inner.width || grad_result.height != outer.height ||
        grad_result.width != outer.width) {
        throw ValidationError("compose_backward: dimension mismatch");
    }
    ComposeGradients g{DenseWarp(outer.height, outer.width), DenseWarp(inner.height, inner.width)};
    for (std::size_t i = 0; i < outer.x.size(); ++i) {
        const ClampedTap t = clamped_tap(outer.x.data[i], outer.y.data[i], inner.height, inner.width);
        const double gx = grad_result.x.data[i];
        const double gy = grad_result.y.data[i];
        auto d_frac = [&](const Field& f, double& dfx, double& dfy) {
            const double v00 = f(t.y0, t.x0), v01 = f(t.y0, t.x0 + 1);
            const double v10 = f(t.y0 + 1, t.x0), v11 = f(t.y0 + 1, t.x0 + 1);
            dfx = (1 - t.fy) * (v01 - v00) + t.fy * (v11 - v10);
            dfy = (1 - t.fx) * (v10 - v00) + t.fx * (v11 - v01);
        };
        double xfx, xfy, yfx, yfy;
        d_frac(inner.x, xfx, xfy);
        d_frac(inner.y, yfx, yfy);
        g.grad_outer.x.data[i] = (gx * xfx + gy * yfx) * t.dpx;
        g.grad_outer.y.data[i] = (gx * xfy + gy * yfy) * t.dpy;

        const double w00 = (1 - t.fy) * (1 - t.fx), w01 = (1 - t.fy) * t.fx, w10 = t.fy * (1 - t.fx), w11 = t.fy * t.fx;
        g.grad_inner.x(t.y0, t.x0) += w00 * gx;
        g.grad_inner.x(t.y0, t.x0 + 1) += w01 * gx;
        g.grad_inner.x(t.y0 + 1, t.x0) += w10 * gx;
        g.grad_inner.x(t.y0 + 1, t.x0 + 1) += w11 * gx;
        g.grad_inner.y(t.y0, t.x0) += w00 * gy;
        g.grad_inner.y(t.y0, t.x0 + 1) += w01 * gy;
        g.grad_inner.y(t.y0 + 1, t.x0) += w10 * gy;
        g.grad_inner.y(t.y0 + 1, t.x0 + 1) += w11 * gy;
    }
    return g;
}

} // namespace ffdalign
