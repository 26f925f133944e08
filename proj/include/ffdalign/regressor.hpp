#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ffdalign/adam.hpp"
#include "ffdalign/grids.hpp"
#include "ffdalign/parametrization.hpp"

namespace ffdalign {

// Four [max-pool 2x2/2 -> conv (same padding) -> ReLU] blocks, fc1 + ReLU, fc2.
//
//   layer   kernel    out shape at resolution R
//   input             2 x R x R         (channel 0 source, 1 partial target)
//   pool1             2 x R/2 x R/2
//   conv1   5x5       20 x R/2 x R/2
//   pool2             20 x R/4 x R/4
//   conv2   5x5       20 x R/4 x R/4
//   pool3             20 x R/8 x R/8
//   conv3   2x2       20 x R/8 x R/8    (pad 0 before, 1 after)
//   pool4             20 x R/16 x R/16
//   conv4   4x4       20 x R/16 x R/16  (pad 1 before, 2 after)
//   fc1               20                (input 20 * (R/16)^2)
//   fc2               2mn               (dx row-major, then dy)
//
// plus two learned integration offsets (w0_x, w0_y).
struct Architecture {
    std::size_t resolution = 64;
    std::size_t m = 8;
    std::size_t n = 8;

    static constexpr std::size_t kInputChannels = 2;
    static constexpr std::size_t kChannels = 20;
    static constexpr std::size_t kHidden = 20;
    static constexpr std::array<std::size_t, 4> kKernels{5, 5, 2, 4};

    void validate() const;
    std::size_t feature_side() const { return resolution / 16; }
    std::size_t flatten_size() const { return kChannels * feature_side() * feature_side(); }
    std::size_t output_size() const { return 2 * m * n; }
    bool operator==(const Architecture&) const = default;
};

struct TensorSlot {
    std::size_t offset = 0;
    std::size_t size = 0;
};

// Fixed parameter order: conv1.w conv1.b conv2.w conv2.b conv3.w conv3.b conv4.w conv4.b
// fc1.w fc1.b fc2.w fc2.b w0. Conv weights are [out][in][ky][kx], fc weights [out][in].
struct ParamLayout {
    std::array<TensorSlot, 4> conv_w;
    std::array<TensorSlot, 4> conv_b;
    TensorSlot fc1_w, fc1_b, fc2_w, fc2_b, w0;
    std::size_t total = 0;

    static ParamLayout of(const Architecture& arch);
};

std::size_t parameter_count(const Architecture& arch);

template <typename T>
struct RegressorParams {
    Architecture arch;
    ParamLayout layout;
    std::vector<T> values;

    std::span<T> slot(const TensorSlot& s) { return {values.data() + s.offset, s.size}; }
    std::span<const T> slot(const TensorSlot& s) const { return {values.data() + s.offset, s.size}; }

    template <typename U>
    RegressorParams<U> cast() const {
        RegressorParams<U> out{arch, layout, std::vector<U>(values.size())};
        for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
        return out;
    }
};

// Activations kept for backward.
template <typename T>
struct ForwardCache {
    std::vector<T> input;                           // 2 x R x R
    std::array<std::vector<T>, 4> pooled;           // conv inputs
    std::array<std::vector<std::uint32_t>, 4> argmax;  // pooled element -> index into the pre-pool tensor
    std::array<std::vector<T>, 4> activations;      // post-ReLU conv outputs
    std::vector<T> hidden;                          // post-ReLU fc1 output
};

// Glorot-uniform conv/fc1 weights, zero biases, zero fc2 weights, fc2 bias = identity increments,
// w0 = identity offsets: the fresh network outputs the identity warp for any input.
template <typename T>
RegressorParams<T> init_params(Rng& rng, const Architecture& arch);

template <typename T>
DifferentialWarp forward(const RegressorParams<T>& params, const Silhouette& source, const Silhouette& partial_target,
                         ForwardCache<T>* cache = nullptr);

// Reverse-mode gradient of every parameter (flat, params order) given d loss / d raw differential.
template <typename T>
std::vector<T> backward(const RegressorParams<T>& params, const ForwardCache<T>& cache,
                        const DifferentialWarp& grad_raw);

template <typename T>
void adam_step(RegressorParams<T>& params, std::span<const T> grads, AdamState& state, double learning_rate,
               const AdamConfig& config = {});

} // namespace ffdalign
