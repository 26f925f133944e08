#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ffdalign {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment accumulators mirror the flat parameter vector.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected ADAM update, in place. Moments are kept in double for every T.
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, AdamState& state, double learning_rate,
                 const AdamConfig& config = {});

} // namespace ffdalign
