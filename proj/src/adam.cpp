#include "ffdalign/adam.hpp"

#include <cmath>

#include "ffdalign/errors.hpp"

namespace ffdalign {

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, AdamState& state, double learning_rate,
                 const AdamConfig& config) {
    if (params.size() != grads.size()) {
        throw ValidationError("adam_update: parameter/gradient size mismatch");
    }
    if (state.m.empty() && state.v.empty() && state.step == 0) {
        state = AdamState(params.size());
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ValidationError("adam_update: optimizer state does not match the parameters");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads[i]);
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        const double update = learning_rate * mhat / (std::sqrt(vhat) + config.eps);
        params[i] = static_cast<T>(static_cast<double>(params[i]) - update);
    }
}

template void adam_update<float>(std::span<float>, std::span<const float>, AdamState&, double, const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, AdamState&, double,
                                  const AdamConfig&);

} // namespace ffdalign
