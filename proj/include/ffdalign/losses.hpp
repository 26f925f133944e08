#pragma once

#include "ffdalign/grids.hpp"
#include "ffdalign/parametrization.hpp"

namespace ffdalign {

struct LossReport {
    double shape_loss = 0.0;
    double reg_loss = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

// Sum convention by default. Mean divides the shape term by the pixel count
// and the regularizer by the number of grid increments (2mn).
enum class LossNormalization { Sum, Mean };

struct ShapeLoss {
    double value = 0.0;
    Field gradient;  // d/d estimated = estimated - target
};

// sum_i 0.5 (T_i - That_i)^2
ShapeLoss shape_loss(const Silhouette& estimated, const Silhouette& target);

struct TvIdentityLoss {
    double value = 0.0;
    DifferentialWarp gradient;  // sign(d - spacing), offsets 0
};

// |dx - 2/(n-1)|_1 + |dy - 2/(m-1)|_1
TvIdentityLoss tv_identity_loss(const DifferentialWarp& delta);

struct CombinedLoss {
    LossReport report;
    Field grad_estimated;
    DifferentialWarp grad_delta;  // zero in mode None
};

// `delta` is the differential the regularizer sees (the caller picks the tap point).
CombinedLoss combined_loss(const Silhouette& estimated, const Silhouette& target, const DifferentialWarp& delta,
                           double lambda, RegularizationMode mode,
                           LossNormalization normalization = LossNormalization::Sum);

} // namespace ffdalign
