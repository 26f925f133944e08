#include "ffdalign/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ffdalign/errors.hpp"

namespace ffdalign {

void Architecture::validate() const {
    if (resolution < 16 || resolution % 16 != 0) {
        throw ValidationError("regressor resolution must be a positive multiple of 16, got " +
                              std::to_string(resolution));
    }
    if (m < 2 || n < 2) {
        throw ValidationError("grid dimensions must be >= 2");
    }
}

ParamLayout ParamLayout::of(const Architecture& arch) {
    arch.validate();
    ParamLayout l;
    std::size_t at = 0;
    auto take = [&at](std::size_t size) {
        TensorSlot s{at, size};
        at += size;
        return s;
    };
    std::size_t in_ch = Architecture::kInputChannels;
    for (std::size_t b = 0; b < 4; ++b) {
        const std::size_t k = Architecture::kKernels[b];
        l.conv_w[b] = take(Architecture::kChannels * in_ch * k * k);
        l.conv_b[b] = take(Architecture::kChannels);
        in_ch = Architecture::kChannels;
    }
    l.fc1_w = take(Architecture::kHidden * arch.flatten_size());
    l.fc1_b = take(Architecture::kHidden);
    l.fc2_w = take(arch.output_size() * Architecture::kHidden);
    l.fc2_b = take(arch.output_size());
    l.w0 = take(2);
    l.total = at;
    return l;
}

std::size_t parameter_count(const Architecture& arch) {
    return ParamLayout::of(arch).total;
}

namespace {

// "Same" convolution over C_in x S x S, zero padding pad_before = (k-1)/2.
template <typename T>
void conv_forward(std::span<const T> in, std::size_t c_in, std::size_t side, std::span<const T> w,
                  std::span<const T> bias, std::size_t c_out, std::size_t k, std::span<T> out) {
    const long S = static_cast<long>(side);
    const long pb = static_cast<long>((k - 1) / 2);
    for (std::size_t o = 0; o < c_out; ++o) {
        T* out_o = out.data() + o * side * side;
        std::fill(out_o, out_o + side * side, bias[o]);
        for (std::size_t i = 0; i < c_in; ++i) {
            const T* in_i = in.data() + i * side * side;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const long dy = static_cast<long>(ky) - pb;
                const long y0 = std::max(0L, -dy), y1 = std::min(S, S - dy);
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const long dx = static_cast<long>(kx) - pb;
                    const long x0 = std::max(0L, -dx), x1 = std::min(S, S - dx);
                    const T wv = w[((o * c_in + i) * k + ky) * k + kx];
                    for (long y = y0; y < y1; ++y) {
                        T* orow = out_o + y * S;
                        const T* irow = in_i + (y + dy) * S + dx;
                        for (long x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_backward(std::span<const T> in, std::size_t c_in, std::size_t side, std::span<const T> w,
                   std::size_t c_out, std::size_t k, std::span<const T> d_out, std::span<T> d_w, std::span<T> d_b,
                   std::span<T> d_in /* may be empty */) {
    const long S = static_cast<long>(side);
    const long pb = static_cast<long>((k - 1) / 2);
    for (std::size_t o = 0; o < c_out; ++o) {
        const T* g_o = d_out.data() + o * side * side;
        T acc = 0;
        for (std::size_t p = 0; p < side * side; ++p) acc += g_o[p];
        d_b[o] += acc;
        for (std::size_t i = 0; i < c_in; ++i) {
            const T* in_i = in.data() + i * side * side;
            T* din_i = d_in.empty() ? nullptr : d_in.data() + i * side * side;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const long dy = static_cast<long>(ky) - pb;
                const long y0 = std::max(0L, -dy), y1 = std::min(S, S - dy);
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const long dx = static_cast<long>(kx) - pb;
                    const long x0 = std::max(0L, -dx), x1 = std::min(S, S - dx);
                    const std::size_t wi = ((o * c_in + i) * k + ky) * k + kx;
                    const T wv = w[wi];
                    T gw = 0;
                    for (long y = y0; y < y1; ++y) {
                        const T* grow = g_o + y * S;
                        const T* irow = in_i + (y + dy) * S + dx;
                        for (long x = x0; x < x1; ++x) gw += grow[x] * irow[x];
                        if (din_i) {
                            T* drow = din_i + (y + dy) * S + dx;
                            for (long x = x0; x < x1; ++x) drow[x] += wv * grow[x];
                        }
                    }
                    d_w[wi] += gw;
                }
            }
        }
    }
}

// 2x2 stride-2 max pool; the first maximum in scan order wins.
template <typename T>
void pool_forward(std::span<const T> in, std::size_t channels, std::size_t side, std::span<T> out,
                  std::span<std::uint32_t> argmax) {
    const std::size_t half = side / 2;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < half; ++y) {
            for (std::size_t x = 0; x < half; ++x) {
                const std::size_t base = c * side * side + (2 * y) * side + 2 * x;
                const std::size_t cand[4] = {base, base + 1, base + side, base + side + 1};
                std::size_t best = cand[0];
                for (int q = 1; q < 4; ++q) {
                    if (in[cand[q]] > in[best]) best = cand[q];
                }
                const std::size_t o = c * half * half + y * half + x;
                out[o] = in[best];
                argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
}

template <typename T>
void relu_inplace(std::span<T> v) {
    for (T& x : v) x = x > T(0) ? x : T(0);
}

} // namespace

template <typename T>
RegressorParams<T> init_params(Rng& rng, const Architecture& arch) {
    RegressorParams<T> p;
    p.arch = arch;
    p.layout = ParamLayout::of(arch);
    p.values.assign(p.layout.total, T(0));
    auto glorot = [&](std::span<T> w, std::size_t fan_in, std::size_t fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-a, a);
        for (T& v : w) v = static_cast<T>(u(rng));
    };
    std::size_t in_ch = Architecture::kInputChannels;
    for (std::size_t b = 0; b < 4; ++b) {
        const std::size_t kk = Architecture::kKernels[b] * Architecture::kKernels[b];
        glorot(p.slot(p.layout.conv_w[b]), in_ch * kk, Architecture::kChannels * kk);
        in_ch = Architecture::kChannels;
    }
    glorot(p.slot(p.layout.fc1_w), arch.flatten_size(), Architecture::kHidden);

    const DifferentialWarp id = identity_differential(arch.m, arch.n);
    auto fc2_b = p.slot(p.layout.fc2_b);
    const std::size_t mn = arch.m * arch.n;
    for (std::size_t i = 0; i < mn; ++i) {
        fc2_b[i] = static_cast<T>(id.dx.data[i]);
        fc2_b[mn + i] = static_cast<T>(id.dy.data[i]);
    }
    auto w0 = p.slot(p.layout.w0);
    w0[0] = static_cast<T>(id.offset_x);
    w0[1] = static_cast<T>(id.offset_y);
    return p;
}

template <typename T>
DifferentialWarp forward(const RegressorParams<T>& params, const Silhouette& source, const Silhouette& partial_target,
                         ForwardCache<T>* cache) {
    const Architecture& arch = params.arch;
    const std::size_t R = arch.resolution;
    if (source.height() != R || source.width() != R || partial_target.height() != R || partial_target.width() != R) {
        throw ValidationError("regressor expects " + std::to_string(R) + "x" + std::to_string(R) +
                              " inputs, got " + std::to_string(source.height()) + "x" +
                              std::to_string(source.width()));
    }
    const ParamLayout& L = params.layout;
    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;

    c.input.resize(2 * R * R);
    for (std::size_t i = 0; i < R * R; ++i) {
        c.input[i] = static_cast<T>(source.values()[i]);
        c.input[R * R + i] = static_cast<T>(partial_target.values()[i]);
    }

    std::span<const T> x = c.input;
    std::size_t channels = Architecture::kInputChannels;
    std::size_t side = R;
    for (std::size_t b = 0; b < 4; ++b) {
        const std::size_t half = side / 2;
        c.pooled[b].resize(channels * half * half);
        c.argmax[b].resize(channels * half * half);
        pool_forward<T>(x, channels, side, c.pooled[b], c.argmax[b]);
        c.activations[b].resize(Architecture::kChannels * half * half);
        conv_forward<T>(c.pooled[b], channels, half, params.slot(L.conv_w[b]), params.slot(L.conv_b[b]),
                        Architecture::kChannels, Architecture::kKernels[b], c.activations[b]);
        relu_inplace<T>(c.activations[b]);
        x = c.activations[b];
        channels = Architecture::kChannels;
        side = half;
    }

    const std::size_t F = arch.flatten_size();
    const auto w1 = params.slot(L.fc1_w);
    const auto b1 = params.slot(L.fc1_b);
    c.hidden.resize(Architecture::kHidden);
    for (std::size_t j = 0; j < Architecture::kHidden; ++j) {
        T acc = b1[j];
        const T* row = w1.data() + j * F;
        for (std::size_t k = 0; k < F; ++k) acc += row[k] * x[k];
        c.hidden[j] = acc > T(0) ? acc : T(0);
    }

    const std::size_t out_n = arch.output_size();
    const auto w2 = params.slot(L.fc2_w);
    const auto b2 = params.slot(L.fc2_b);
    const std::size_t mn = arch.m * arch.n;
    DifferentialWarp raw(arch.m, arch.n);
    for (std::size_t o = 0; o < out_n; ++o) {
        T acc = b2[o];
        const T* row = w2.data() + o * Architecture::kHidden;
        for (std::size_t j = 0; j < Architecture::kHidden; ++j) acc += row[j] * c.hidden[j];
        if (o < mn) {
            raw.dx.data[o] = static_cast<double>(acc);
        } else {
            raw.dy.data[o - mn] = static_cast<double>(acc);
        }
    }
    const auto w0 = params.slot(L.w0);
    raw.offset_x = static_cast<double>(w0[0]);
    raw.offset_y = static_cast<double>(w0[1]);
    return raw;
}

template <typename T>
std::vector<T> backward(const RegressorParams<T>& params, const ForwardCache<T>& c, const DifferentialWarp& grad_raw) {
    const Architecture& arch = params.arch;
    const ParamLayout& L = params.layout;
    if (grad_raw.m != arch.m || grad_raw.n != arch.n) {
        throw ValidationError("backward: gradient grid does not match the architecture");
    }
    if (c.hidden.size() != Architecture::kHidden) {
        throw ValidationError("backward: forward cache is empty");
    }
    std::vector<T> grads(L.total, T(0));
    auto gslot = [&grads](const TensorSlot& s) { return std::span<T>(grads.data() + s.offset, s.size); };

    const std::size_t mn = arch.m * arch.n;
    const std::size_t out_n = arch.output_size();
    std::vector<T> d_out(out_n);
    for (std::size_t i = 0; i < mn; ++i) {
        d_out[i] = static_cast<T>(grad_raw.dx.data[i]);
        d_out[mn + i] = static_cast<T>(grad_raw.dy.data[i]);
    }
    auto g_w0 = gslot(L.w0);
    g_w0[0] = static_cast<T>(grad_raw.offset_x);
    g_w0[1] = static_cast<T>(grad_raw.offset_y);

    // fc2
    const std::size_t H = Architecture::kHidden;
    const auto w2 = params.slot(L.fc2_w);
    auto g_w2 = gslot(L.fc2_w);
    auto g_b2 = gslot(L.fc2_b);
    std::vector<T> d_hidden(H, T(0));
    for (std::size_t o = 0; o < out_n; ++o) {
        const T g = d_out[o];
        g_b2[o] = g;
        if (g == T(0)) continue;
        for (std::size_t j = 0; j < H; ++j) {
            g_w2[o * H + j] = g * c.hidden[j];
            d_hidden[j] += w2[o * H + j] * g;
        }
    }
    for (std::size_t j = 0; j < H; ++j) {
        if (!(c.hidden[j] > T(0))) d_hidden[j] = T(0);
    }

    // fc1
    const std::size_t F = arch.flatten_size();
    const auto& flat = c.activations[3];
    const auto w1 = params.slot(L.fc1_w);
    auto g_w1 = gslot(L.fc1_w);
    auto g_b1 = gslot(L.fc1_b);
    std::vector<T> d_act(F, T(0));
    for (std::size_t j = 0; j < H; ++j) {
        const T g = d_hidden[j];
        g_b1[j] = g;
        if (g == T(0)) continue;
        for (std::size_t k = 0; k < F; ++k) {
            g_w1[j * F + k] = g * flat[k];
            d_act[k] += w1[j * F + k] * g;
        }
    }

    // conv blocks, last to first
    std::size_t side = arch.feature_side();
    for (std::size_t bi = 4; bi-- > 0;) {
        const std::size_t c_in = bi == 0 ? Architecture::kInputChannels : Architecture::kChannels;
        const auto& act = c.activations[bi];
        for (std::size_t p = 0; p < d_act.size(); ++p) {
            if (!(act[p] > T(0))) d_act[p] = T(0);
        }
        std::vector<T> d_pooled;
        if (bi > 0) d_pooled.assign(c_in * side * side, T(0));
        conv_backward<T>(c.pooled[bi], c_in, side, params.slot(L.conv_w[bi]), Architecture::kChannels,
                         Architecture::kKernels[bi], d_act, gslot(L.conv_w[bi]), gslot(L.conv_b[bi]), d_pooled);
        if (bi == 0) break;
        // unpool into the previous block's activation gradient
        std::vector<T> d_prev(c.activations[bi - 1].size(), T(0));
        const auto& am = c.argmax[bi];
        for (std::size_t p = 0; p < d_pooled.size(); ++p) d_prev[am[p]] += d_pooled[p];
        d_act = std::move(d_prev);
        side *= 2;
    }
    return grads;
}

template <typename T>
void adam_step(RegressorParams<T>& params, std::span<const T> grads, AdamState& state, double learning_rate,
               const AdamConfig& config) {
    adam_update<T>(params.values, grads, state, learning_rate, config);
}

#define FFDALIGN_INSTANTIATE(T)                                                                                    \
    template RegressorParams<T> init_params<T>(Rng&, const Architecture&);                                        \
    template DifferentialWarp forward<T>(const RegressorParams<T>&, const Silhouette&, const Silhouette&,         \
                                         ForwardCache<T>*);                                                        \
    template std::vector<T> backward<T>(const RegressorParams<T>&, const ForwardCache<T>&,                         \
                                        const DifferentialWarp&);                                                  \
    template void adam_step<T>(RegressorParams<T>&, std::span<const T>, AdamState&, double, const AdamConfig&);

FFDALIGN_INSTANTIATE(float)
FFDALIGN_INSTANTIATE(double)

#undef FFDALIGN_INSTANTIATE

} // namespace ffdalign
