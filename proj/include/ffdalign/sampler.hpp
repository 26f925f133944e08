#pragma once

#include "ffdalign/grids.hpp"
#include "ffdalign/parametrization.hpp"

namespace ffdalign {

// Per-pixel lookup coordinates (normalized) at full image resolution.
// Also used as the container for gradients with respect to such a field.
struct DenseWarp {
    std::size_t height = 0;
    std::size_t width = 0;
    Field x;
    Field y;

    DenseWarp() = default;
    DenseWarp(std::size_t h, std::size_t w) : height(h), width(w), x(h, w), y(h, w) {}
};

// Gradient of a scalar loss with respect to the control grid coordinates.
// d_offset_x / d_offset_y are the pull-backs onto the two integration offsets
// (each node coordinate carries its axis offset, so they are the channel sums).
struct WarpGradients {
    Field d_control_x;
    Field d_control_y;
    double d_offset_x = 0.0;
    double d_offset_y = 0.0;

    ControlWarp as_control() const;
};

DenseWarp identity_dense(std::size_t height, std::size_t width);
double max_abs_difference(const DenseWarp& a, const DenseWarp& b);

// Bilinear interpolation of the control grid laid regularly over the whole image.
// Node (r,c) sits at (-1 + 2c/(n-1), -1 + 2r/(m-1)).
DenseWarp upsample(const ControlWarp& control, std::size_t height, std::size_t width);
// Exact adjoint of upsample (scatter with the forward weights, fixed pixel order).
WarpGradients upsample_backward(const ControlWarp& control, const DenseWarp& grad_dense);

// Backward warp: out[p] = bilinear(source, warp[p]); samples outside the image read 0.
Silhouette resample(const Silhouette& source, const DenseWarp& warp);
// Same sampler on an unconstrained field (texture channels, probes).
Field resample_field(const Field& source, const DenseWarp& warp);
// Nearest-neighbour lookup for categorical images; outside the image reads `fill`.
Field resample_nearest(const Field& source, const DenseWarp& warp, double fill = 0.0);

struct ResampleGradients {
    DenseWarp grad_warp;
    Field grad_source;  // left empty unless requested
};
ResampleGradients resample_backward(const Field& source, const DenseWarp& warp, const Field& grad_output,
                                    bool want_source_grad = false);

// Lookup at p is p rotated by -theta about the image centre, so the output appears rotated by +theta.
DenseWarp rotation_warp(double theta, std::size_t height, std::size_t width);
// d loss / d theta given d loss / d rotation_warp(theta).
double rotation_warp_backward(double theta, const DenseWarp& grad);

// Lookup at p is p scaled by 1/sx, 1/sy about the centre (content grows for s > 1).
DenseWarp scale_warp(double sx, double sy, std::size_t height, std::size_t width);

// result[p] = inner evaluated (bilinearly, border-clamped) at outer[p].
// resample(S, compose(A, B)) ~ resample(resample(S, B), A).
DenseWarp compose(const DenseWarp& outer, const DenseWarp& inner);

struct ComposeGradients {
    DenseWarp grad_outer;
    DenseWarp grad_inner;
};
ComposeGradients compose_backward(const DenseWarp& outer, const DenseWarp& inner, const DenseWarp& grad_result);

} // namespace ffdalign
