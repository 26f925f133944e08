#include "ffdalign/parametrization.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ffdalign/errors.hpp"

namespace ffdalign {

std::string_view to_string(RegularizationMode mode) {
    switch (mode) {
    case RegularizationMode::None: return "none";
    case RegularizationMode::TV: return "tv";
    case RegularizationMode::TVMonotonic: return "tvm";
    }
    return "none";
}

RegularizationMode parse_mode(std::string_view text) {
    std::string t(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "none") return RegularizationMode::None;
    if (t == "tv") return RegularizationMode::TV;
    if (t == "tvm" || t == "tv&m" || t == "tvmonotonic") return RegularizationMode::TVMonotonic;
    throw ValidationError("unknown regularization mode '" + t + "' (expected none, tv or tvm)");
}

bool DifferentialWarp::all_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(dx.data.begin(), dx.data.end(), finite) && std::all_of(dy.data.begin(), dy.data.end(), finite) &&
           std::isfinite(offset_x) && std::isfinite(offset_y);
}

double identity_spacing(std::size_t n) {
    if (n < 2) {
        throw ValidationError("grid dimension must be >= 2");
    }
    return 2.0 / static_cast<double>(n - 1);
}

std::vector<double> cumsum_1d(std::span<const double> delta, double a0) {
    if (delta.empty()) {
        throw ValidationError("cumsum_1d: empty sequence");
    }
    std::vector<double> out(delta.size());
    double acc = a0;
    for (std::size_t k = 0; k < delta.size(); ++k) {
        acc += delta[k];
        out[k] = acc;
    }
    return out;
}

CumsumAdjoint cumsum_1d_adjoint(std::span<const double> grad_out) {
    if (grad_out.empty()) {
        throw ValidationError("cumsum_1d_adjoint: empty sequence");
    }
    CumsumAdjoint adj;
    adj.grad_delta.resize(grad_out.size());
    double acc = 0.0;
    for (std::size_t k = grad_out.size(); k-- > 0;) {
        acc += grad_out[k];
        adj.grad_delta[k] = acc;
    }
    adj.grad_a0 = acc;
    return adj;
}

DifferentialWarp identity_differential(std::size_t m, std::size_t n) {
    if (m < 2 || n < 2) {
        throw ValidationError("identity_differential: m and n must be >= 2");
    }
    DifferentialWarp d(m, n);
    const double dc = identity_spacing(n);
    const double dr = identity_spacing(m);
    std::fill(d.dx.data.begin(), d.dx.data.end(), dc);
    std::fill(d.dy.data.begin(), d.dy.data.end(), dr);
    d.offset_x = -1.0 - dc;
    d.offset_y = -1.0 - dr;
    return d;
}

ControlWarp identity_control(std::size_t m, std::size_t n) {
    if (m < 2 || n < 2) {
        throw ValidationError("identity_control: m and n must be >= 2");
    }
    ControlWarp w(m, n);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            w.x(r, c) = to_normalized(static_cast<double>(c), n);
            w.y(r, c) = to_normalized(static_cast<double>(r), m);
        }
    }
    return w;
}

DifferentialWarp enforce_monotonic(const DifferentialWarp& raw) {
    DifferentialWarp out = raw;
    for (double& v : out.dx.data) v = std::abs(v);
    for (double& v : out.dy.data) v = std::abs(v);
    return out;
}

DifferentialWarp enforce_monotonic_adjoint(const DifferentialWarp& raw, const DifferentialWarp& grad) {
    auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    DifferentialWarp out = grad;
    for (std::size_t i = 0; i < out.dx.size(); ++i) {
        out.dx.data[i] *= sign(raw.dx.data[i]);
        out.dy.data[i] *= sign(raw.dy.data[i]);
    }
    return out;
}

ControlWarp integrate(const DifferentialWarp& delta) {
    ControlWarp w(delta.m, delta.n);
    for (std::size_t r = 0; r < delta.m; ++r) {
        double acc = delta.offset_x;
        for (std::size_t c = 0; c < delta.n; ++c) {
            acc += delta.dx(r, c);
            w.x(r, c) = acc;
        }
    }
    for (std::size_t c = 0; c < delta.n; ++c) {
        double acc = delta.offset_y;
        for (std::size_t r = 0; r < delta.m; ++r) {
            acc += delta.dy(r, c);
            w.y(r, c) = acc;
        }
    }
    return w;
}

DifferentialWarp integrate_adjoint(const ControlWarp& grad) {
    DifferentialWarp out(grad.m, grad.n);
    for (std::size_t r = 0; r < grad.m; ++r) {
        const CumsumAdjoint adj = cumsum_1d_adjoint(grad.x.row(r));
        std::copy(adj.grad_delta.begin(), adj.grad_delta.end(), out.dx.row(r).begin());
        out.offset_x += adj.grad_a0;
    }
    std::vector<double> column(grad.m);
    for (std::size_t c = 0; c < grad.n; ++c) {
        for (std::size_t r = 0; r < grad.m; ++r) column[r] = grad.y(r, c);
        const CumsumAdjoint adj = cumsum_1d_adjoint(column);
        for (std::size_t r = 0; r < grad.m; ++r) out.dy(r, c) = adj.grad_delta[r];
        out.offset_y += adj.grad_a0;
    }
    return out;
}

ControlWarp build_control_warp(const DifferentialWarp& raw, RegularizationMode mode) {
    if (mode == RegularizationMode::TVMonotonic) {
        return integrate(enforce_monotonic(raw));
    }
    return integrate(raw);
}

DifferentialWarp build_control_warp_adjoint(const DifferentialWarp& raw, RegularizationMode mode,
                                            const ControlWarp& grad) {
    DifferentialWarp g = integrate_adjoint(grad);
    if (mode == RegularizationMode::TVMonotonic) {
        return enforce_monotonic_adjoint(raw, g);
    }
    return g;
}

bool is_axially_monotonic(const ControlWarp& w) {
    for (std::size_t r = 0; r < w.m; ++r) {
        for (std::size_t c = 0; c + 1 < w.n; ++c) {
            if (w.x(r, c) > w.x(r, c + 1)) return false;
        }
    }
    for (std::size_t r = 0; r + 1 < w.m; ++r) {
        for (std::size_t c = 0; c < w.n; ++c) {
            if (w.y(r, c) > w.y(r + 1, c)) return false;
        }
    }
    return true;
}

double max_abs_difference(const ControlWarp& a, const ControlWarp& b) {
    return std::max(max_abs_difference(a.x, b.x), max_abs_difference(a.y, b.y));
}

} // namespace ffdalign
