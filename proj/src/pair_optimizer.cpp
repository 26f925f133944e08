#include "ffdalign/pair_optimizer.hpp"

#include <cmath>
#include <optional>

#include "ffdalign/errors.hpp"

namespace ffdalign {

void OptimizeConfig::validate() const {
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ValidationError("ADAM betas must lie in [0,1)");
    }
    if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be > 0");
    if (grid_m < 2 || grid_n < 2) throw ValidationError("grid dimensions must be >= 2");
    if (!(rotation_lr_scale > 0.0)) throw ValidationError("rotation_lr_scale must be > 0");
}

namespace {

constexpr std::size_t kConvergenceWindow = 10;
constexpr double kDivergenceFactor = 10.0;

// Flat layout: dx (mn), dy (mn), offset_x, offset_y [, theta].
// theta is stored divided by rotation_lr_scale so that ADAM's step on it is scaled.
std::vector<double> pack(const DifferentialWarp& d, std::optional<double> theta, double theta_scale) {
    std::vector<double> p;
    p.reserve(2 * d.dx.size() + 3);
    p.insert(p.end(), d.dx.data.begin(), d.dx.data.end());
    p.insert(p.end(), d.dy.data.begin(), d.dy.data.end());
    p.push_back(d.offset_x);
    p.push_back(d.offset_y);
    if (theta) p.push_back(*theta / theta_scale);
    return p;
}

void unpack(const std::vector<double>& p, DifferentialWarp& d, std::optional<double>& theta, double theta_scale) {
    const std::size_t mn = d.dx.size();
    std::copy(p.begin(), p.begin() + mn, d.dx.data.begin());
    std::copy(p.begin() + mn, p.begin() + 2 * mn, d.dy.data.begin());
    d.offset_x = p[2 * mn];
    d.offset_y = p[2 * mn + 1];
    if (theta) theta = p[2 * mn + 2] * theta_scale;
}

AlignmentResult run(const Silhouette& source, const Silhouette& target, const OptimizeConfig& config,
                    std::optional<double> theta, const IterateObserver& observer) {
    config.validate();
    if (source.height() != target.height() || source.width() != target.width()) {
        throw ValidationError("source and target dimensions differ");
    }
    if (foreground_count(source) == 0) {
        throw ValidationError("source has no foreground");
    }
    const ObjectiveSettings settings{config.lambda, config.mode, config.normalization};
    const AdamConfig adam{config.adam_beta1, config.adam_beta2, config.adam_eps};

    DifferentialWarp delta = identity_differential(config.grid_m, config.grid_n);
    const double theta_scale = config.rotation_lr_scale;
    std::vector<double> params = pack(delta, theta, theta_scale);
    std::vector<double> grads(params.size());
    AdamState state(params.size());

    AlignmentResult result;
    double best_total = 0.0;
    std::vector<double> best_params;
    double initial_total = 0.0;

    for (std::size_t it = 0;; ++it) {
        unpack(params, delta, theta, theta_scale);
        ChainEvaluation ev = evaluate_chain(source, target, delta, settings, theta, true);
        const double total = ev.report.total;
        if (!std::isfinite(total)) {
            throw NumericError("non-finite loss", it);
        }
        if (it == 0) {
            initial_total = total;
        } else if (initial_total > 0.0 && total > kDivergenceFactor * initial_total) {
            throw NumericError("loss diverged beyond " + std::to_string(kDivergenceFactor) + "x its initial value",
                               it);
        }
        result.loss_trace.push_back(ev.report);
        if (observer) observer(it, ev.control);
        if (it == 0 || total < best_total) {
            best_total = total;
            best_params = params;
        }

        if (total == 0.0) {
            result.converged = true;
            break;
        }
        if (it >= kConvergenceWindow) {
            const double before = result.loss_trace[it - kConvergenceWindow].total;
            if (std::abs(total - before) / total < config.convergence_tol) {
                result.converged = true;
                break;
            }
        }
        if (it == config.max_iters) {
            break;
        }

        const std::size_t mn = delta.dx.size();
        std::copy(ev.grad_raw.dx.data.begin(), ev.grad_raw.dx.data.end(), grads.begin());
        std::copy(ev.grad_raw.dy.data.begin(), ev.grad_raw.dy.data.end(), grads.begin() + mn);
        grads[2 * mn] = ev.grad_raw.offset_x;
        grads[2 * mn + 1] = ev.grad_raw.offset_y;
        if (theta) grads[2 * mn + 2] = ev.grad_theta * theta_scale;
        adam_update<double>(params, grads, state, config.learning_rate, adam);
        ++result.iters_run;
    }

    unpack(best_params, delta, theta, theta_scale);
    const ChainEvaluation best = evaluate_chain(source, target, delta, settings, theta, false);
    result.delta = delta;
    result.control = best.control;
    result.warped = best.estimated;
    result.theta = theta.value_or(0.0);
    return result;
}

} // namespace

AlignmentResult align_pair(const Silhouette& source, const Silhouette& target, const OptimizeConfig& config,
                           const IterateObserver& observer) {
    return run(source, target, config, std::nullopt, observer);
}

AlignmentResult align_pair_with_rotation(const Silhouette& source, const Silhouette& target,
                                         const OptimizeConfig& config, const IterateObserver& observer) {
    return run(source, target, config, config.initial_theta, observer);
}

} // namespace ffdalign
