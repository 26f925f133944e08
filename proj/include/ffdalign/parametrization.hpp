#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ffdalign/grids.hpp"

namespace ffdalign {

enum class RegularizationMode { None, TV, TVMonotonic };

std::string_view to_string(RegularizationMode mode);
// Accepts "none", "tv", "tvm" (also "tv&m", "tvmonotonic").
RegularizationMode parse_mode(std::string_view text);

// Per-axis increments of an m x n control grid plus one offset per axis.
// dx is integrated left-to-right along each row, dy top-to-bottom along each column.
// The same type carries gradients with respect to a differential warp.
struct DifferentialWarp {
    std::size_t m = 0;
    std::size_t n = 0;
    Field dx;
    Field dy;
    double offset_x = 0.0;
    double offset_y = 0.0;

    DifferentialWarp() = default;
    DifferentialWarp(std::size_t m_, std::size_t n_) : m(m_), n(n_), dx(m_, n_), dy(m_, n_) {}

    bool all_finite() const;
};

// Absolute lookup coordinates at the control nodes, normalized [-1,1] space.
struct ControlWarp {
    std::size_t m = 0;
    std::size_t n = 0;
    Field x;
    Field y;

    ControlWarp() = default;
    ControlWarp(std::size_t m_, std::size_t n_) : m(m_), n(n_), x(m_, n_), y(m_, n_) {}
};

// Uniform spacing of n points over [-1,1]: 2/(n-1).
double identity_spacing(std::size_t n);

std::vector<double> cumsum_1d(std::span<const double> delta, double a0);

struct CumsumAdjoint {
    std::vector<double> grad_delta;  // suffix sums of grad_out
    double grad_a0 = 0.0;
};
CumsumAdjoint cumsum_1d_adjoint(std::span<const double> grad_out);

// Increments of the regular grid, offsets -1 - spacing so that integration is exact.
DifferentialWarp identity_differential(std::size_t m, std::size_t n);
// The regular grid itself, built directly.
ControlWarp identity_control(std::size_t m, std::size_t n);

DifferentialWarp enforce_monotonic(const DifferentialWarp& raw);
// Multiplies grad by sign(raw), 0 at exactly 0. Offsets pass through.
DifferentialWarp enforce_monotonic_adjoint(const DifferentialWarp& raw, const DifferentialWarp& grad);

ControlWarp integrate(const DifferentialWarp& delta);
DifferentialWarp integrate_adjoint(const ControlWarp& grad);

ControlWarp build_control_warp(const DifferentialWarp& raw, RegularizationMode mode);
DifferentialWarp build_control_warp_adjoint(const DifferentialWarp& raw, RegularizationMode mode,
                                            const ControlWarp& grad);

// x non-decreasing along rows, y non-decreasing along columns.
bool is_axially_monotonic(const ControlWarp& w);

double max_abs_difference(const ControlWarp& a, const ControlWarp& b);

} // namespace ffdalign
