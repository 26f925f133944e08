#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ffdalign/adam.hpp"
#include "ffdalign/losses.hpp"
#include "ffdalign/objective.hpp"
#include "ffdalign/parametrization.hpp"

namespace ffdalign {

struct OptimizeConfig {
    std::size_t max_iters = 1000;
    double learning_rate = 0.05;
    double lambda = 1e-5;
    RegularizationMode mode = RegularizationMode::TVMonotonic;
    LossNormalization normalization = LossNormalization::Sum;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double convergence_tol = 1e-6;
    std::size_t grid_m = 8;
    std::size_t grid_n = 8;
    // Step size of the rotation angle relative to learning_rate (> 0).
    double rotation_lr_scale = 1.0;
    double initial_theta = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct AlignmentResult {
    ControlWarp control;
    DifferentialWarp delta;  // raw (pre-monotonic) differential of the best iterate
    std::vector<LossReport> loss_trace;
    std::size_t iters_run = 0;
    bool converged = false;
    double theta = 0.0;
    Silhouette warped;
};

// Invoked after every evaluated iterate with (iteration, control warp).
using IterateObserver = std::function<void(std::size_t, const ControlWarp&)>;

// ADAM on (dx, dy, offsets) from the identity differential. Returns the lowest-loss iterate.
AlignmentResult align_pair(const Silhouette& source, const Silhouette& target, const OptimizeConfig& config,
                           const IterateObserver& observer = {});

// Same, with a global rotation angle optimized jointly: That = S o (W_c o W_R(theta)).
AlignmentResult align_pair_with_rotation(const Silhouette& source, const Silhouette& target,
                                         const OptimizeConfig& config, const IterateObserver& observer = {});

} // namespace ffdalign
