#include "ffdalign/losses.hpp"

#include <cmath>

#include "ffdalign/errors.hpp"

namespace ffdalign {

ShapeLoss shape_loss(const Silhouette& estimated, const Silhouette& target) {
    if (estimated.height() != target.height() || estimated.width() != target.width()) {
        throw ValidationError("shape_loss: dimension mismatch");
    }
    ShapeLoss out;
    out.gradient = Field(target.height(), target.width());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = estimated.values()[i] - target.values()[i];
        out.value += 0.5 * d * d;
        out.gradient.data[i] = d;
    }
    return out;
}

TvIdentityLoss tv_identity_loss(const DifferentialWarp& delta) {
    const double sc = identity_spacing(delta.n);
    const double sr = identity_spacing(delta.m);
    auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    TvIdentityLoss out;
    out.gradient = DifferentialWarp(delta.m, delta.n);
    for (std::size_t i = 0; i < delta.dx.size(); ++i) {
        const double ex = delta.dx.data[i] - sc;
        const double ey = delta.dy.data[i] - sr;
        out.value += std::abs(ex) + std::abs(ey);
        out.gradient.dx.data[i] = sign(ex);
        out.gradient.dy.data[i] = sign(ey);
    }
    return out;
}

CombinedLoss combined_loss(const Silhouette& estimated, const Silhouette& target, const DifferentialWarp& delta,
                           double lambda, RegularizationMode mode, LossNormalization normalization) {
    if (!(lambda >= 0.0)) {
        throw ValidationError("combined_loss: lambda must be >= 0");
    }
    ShapeLoss s = shape_loss(estimated, target);
    CombinedLoss out;
    out.report.lambda = lambda;
    out.grad_delta = DifferentialWarp(delta.m, delta.n);

    double shape_scale = 1.0;
    double reg_scale = 1.0;
    if (normalization == LossNormalization::Mean) {
        shape_scale = 1.0 / static_cast<double>(target.size());
        reg_scale = 1.0 / static_cast<double>(2 * delta.m * delta.n);
    }
    out.report.shape_loss = s.value * shape_scale;
    out.grad_estimated = std::move(s.gradient);
    if (shape_scale != 1.0) {
        for (double& g : out.grad_estimated.data) g *= shape_scale;
    }

    if (mode != RegularizationMode::None) {
        TvIdentityLoss r = tv_identity_loss(delta);
        out.report.reg_loss = r.value * reg_scale;
        const double w = lambda * reg_scale;
        for (std::size_t i = 0; i < r.gradient.dx.size(); ++i) {
            out.grad_delta.dx.data[i] = w * r.gradient.dx.data[i];
            out.grad_delta.dy.data[i] = w * r.gradient.dy.data[i];
        }
    }
    out.report.total = out.report.shape_loss + lambda * out.report.reg_loss;
    return out;
}

} // namespace ffdalign
