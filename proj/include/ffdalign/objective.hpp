#pragma once

#include <optional>

#include "ffdalign/losses.hpp"
#include "ffdalign/parametrization.hpp"
#include "ffdalign/sampler.hpp"

namespace ffdalign {

struct ObjectiveSettings {
    double lambda = 1e-5;
    RegularizationMode mode = RegularizationMode::TVMonotonic;
    LossNormalization normalization = LossNormalization::Sum;
};

// The differential the warp is integrated from, which is also where the
// regularizer taps in: |raw| in TVMonotonic, raw otherwise.
DifferentialWarp effective_differential(const DifferentialWarp& raw, RegularizationMode mode);

struct ChainEvaluation {
    LossReport report;
    DifferentialWarp effective;
    ControlWarp control;
    DenseWarp dense;  // final per-pixel lookup, rotation included
    Silhouette estimated;
    DifferentialWarp grad_raw;
    double grad_theta = 0.0;
};

// Warp field applied to the source: upsample(control), or compose(upsample(control), rotation(theta)).
DenseWarp chain_dense_warp(const ControlWarp& control, std::size_t height, std::size_t width,
                           std::optional<double> theta);

// loss(raw [, theta]) = combined_loss(resample(source, W), target, tap(raw)),
// W = upsample(build_control_warp(raw)) [composed with rotation_warp(theta)].
ChainEvaluation evaluate_chain(const Silhouette& source, const Silhouette& target, const DifferentialWarp& raw,
                               const ObjectiveSettings& settings, std::optional<double> theta = std::nullopt,
                               bool want_gradients = true);

} // namespace ffdalign
