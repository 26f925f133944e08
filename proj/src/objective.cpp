#include "ffdalign/objective.hpp"

#include "ffdalign/errors.hpp"

namespace ffdalign {

DifferentialWarp effective_differential(const DifferentialWarp& raw, RegularizationMode mode) {
    return mode == RegularizationMode::TVMonotonic ? enforce_monotonic(raw) : raw;
}

DenseWarp chain_dense_warp(const ControlWarp& control, std::size_t height, std::size_t width,
                           std::optional<double> theta) {
    DenseWarp w = upsample(control, height, width);
    if (theta) {
        return compose(w, rotation_warp(*theta, height, width));
    }
    return w;
}

ChainEvaluation evaluate_chain(const Silhouette& source, const Silhouette& target, const DifferentialWarp& raw,
                               const ObjectiveSettings& settings, std::optional<double> theta, bool want_gradients) {
    if (source.height() != target.height() || source.width() != target.width()) {
        throw ValidationError("source and target dimensions differ");
    }
    const std::size_t h = source.height(), w = source.width();
    ChainEvaluation ev;
    ev.effective = effective_differential(raw, settings.mode);
    ev.control = integrate(ev.effective);
    const DenseWarp upsampled = upsample(ev.control, h, w);
    std::optional<DenseWarp> rotation;
    if (theta) {
        rotation = rotation_warp(*theta, h, w);
        ev.dense = compose(upsampled, *rotation);
    } else {
        ev.dense = upsampled;
    }
    ev.estimated = resample(source, ev.dense);

    CombinedLoss loss = combined_loss(ev.estimated, target, ev.effective, settings.lambda, settings.mode,
                                      settings.normalization);
    ev.report = loss.report;
    if (!want_gradients) {
        return ev;
    }

    const ResampleGradients rg = resample_backward(source.field(), ev.dense, loss.grad_estimated);
    DenseWarp grad_upsampled;
    if (theta) {
        ComposeGradients cg = compose_backward(upsampled, *rotation, rg.grad_warp);
        ev.grad_theta = rotation_warp_backward(*theta, cg.grad_inner);
        grad_upsampled = std::move(cg.grad_outer);
    } else {
        grad_upsampled = rg.grad_warp;
    }
    const WarpGradients wg = upsample_backward(ev.control, grad_upsampled);
    ev.grad_raw = build_control_warp_adjoint(raw, settings.mode, wg.as_control());

    if (settings.mode != RegularizationMode::None) {
        const DifferentialWarp reg = settings.mode == RegularizationMode::TVMonotonic
                                         ? enforce_monotonic_adjoint(raw, loss.grad_delta)
                                         : loss.grad_delta;
        for (std::size_t i = 0; i < reg.dx.size(); ++i) {
            ev.grad_raw.dx.data[i] += reg.dx.data[i];
            ev.grad_raw.dy.data[i] += reg.dy.data[i];
        }
    }
    return ev;
}

} // namespace ffdalign
