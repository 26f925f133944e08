#include "doctest.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "helpers.hpp"

#include "ffdalign/checkpoint.hpp"
#include "ffdalign/errors.hpp"
#include "ffdalign/parametrization.hpp"
#include "ffdalign/regressor.hpp"
#include "ffdalign/synth.hpp"

using namespace ffdalign;
using namespace testutil;

namespace {

// Table of per-layer shapes, summed without the library's layout.
std::size_t closed_form_count(std::size_t R, std::size_t m, std::size_t n) {
    const std::size_t c = 20, side = R / 16;
    const std::size_t conv1 = 2 * c * 5 * 5 + c;
    const std::size_t conv2 = c * c * 5 * 5 + c;
    const std::size_t conv3 = c * c * 2 * 2 + c;
    const std::size_t conv4 = c * c * 4 * 4 + c;
    const std::size_t fc1 = c * side * side * 20 + 20;
    const std::size_t fc2 = 20 * 2 * m * n + 2 * m * n;
    return conv1 + conv2 + conv3 + conv4 + fc1 + fc2 + 2;
}

template <typename T>
void randomize(RegressorParams<T>& p, Rng& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    auto fill = [&](const TensorSlot& s) {
        for (T& v : p.slot(s)) v = static_cast<T>(u(rng));
    };
    for (std::size_t b = 0; b < 4; ++b) fill(p.layout.conv_b[b]);
    fill(p.layout.fc1_b);
    fill(p.layout.fc2_w);
}

double raw_dot(const DifferentialWarp& a, const DifferentialWarp& g) {
    return dot(a.dx, g.dx) + dot(a.dy, g.dy) + a.offset_x * g.offset_x + a.offset_y * g.offset_y;
}

DifferentialWarp random_raw_gradient(std::size_t m, std::size_t n, Rng& rng) {
    DifferentialWarp g(m, n);
    g.dx = random_field(m, n, rng, -1, 1);
    g.dy = random_field(m, n, rng, -1, 1);
    g.offset_x = 0.3;
    g.offset_y = -0.7;
    return g;
}

} // namespace

TEST_SUITE("regressor layout") {
    TEST_CASE("parameter count at 64x64 with an 8x8 grid") {
        CHECK(closed_form_count(64, 8, 8) == 28190);
        CHECK(parameter_count(Architecture{64, 8, 8}) == 28190);
        CHECK(parameter_count(Architecture{128, 4, 6}) == closed_form_count(128, 4, 6));
        CHECK(parameter_count(Architecture{16, 2, 2}) == closed_form_count(16, 2, 2));
    }

    TEST_CASE("slots tile the flat vector in the documented order") {
        const ParamLayout L = ParamLayout::of(Architecture{64, 8, 8});
        std::size_t offset = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            CHECK(L.conv_w[b].offset == offset);
            offset += L.conv_w[b].size;
            CHECK(L.conv_b[b].offset == offset);
            offset += L.conv_b[b].size;
        }
        for (const TensorSlot* s : {&L.fc1_w, &L.fc1_b, &L.fc2_w, &L.fc2_b, &L.w0}) {
            CHECK(s->offset == offset);
            offset += s->size;
        }
        CHECK(offset == L.total);
        CHECK(L.w0.size == 2);
    }

    TEST_CASE("invalid architectures are rejected") {
        CHECK_THROWS_AS(Architecture({60, 8, 8}).validate(), ValidationError);
        CHECK_THROWS_AS(Architecture({64, 1, 8}).validate(), ValidationError);
    }
}

TEST_SUITE("regressor forward") {
    TEST_CASE("fresh network outputs the identity warp for any input") {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            Rng rng(seed);
            const auto pf = init_params<float>(rng, Architecture{});
            Rng rd(seed);
            const auto pd = init_params<double>(rd, Architecture{});
            for (int t = 0; t < 5; ++t) {
                const Silhouette a = random_silhouette(64, 64, rng), b = random_silhouette(64, 64, rng);
                for (auto mode : {RegularizationMode::TV, RegularizationMode::TVMonotonic}) {
                    const ControlWarp wd = build_control_warp(forward(pd, a, b), mode);
                    CHECK(max_abs_difference(wd, identity_control(8, 8)) < 1e-9);
                    // 2/7 is not representable in 32 bits; eight rounded increments stay well under 1e-6
                    const ControlWarp wf = build_control_warp(forward(pf, a, b), mode);
                    CHECK(max_abs_difference(wf, identity_control(8, 8)) < 1e-6);
                }
                const DenseWarp dense = upsample(build_control_warp(forward(pd, a, b), RegularizationMode::TVMonotonic), 64, 64);
                CHECK(max_abs_difference(resample(a, dense).field(), a.field()) < 1e-9);
            }
        }
    }

    TEST_CASE("fresh output equals the fc2 bias values") {
        Rng rng(4);
        const auto p = init_params<double>(rng, Architecture{});
        const auto b2 = p.slot(p.layout.fc2_b);
        const DifferentialWarp raw = forward(p, random_silhouette(64, 64, rng), random_silhouette(64, 64, rng));
        for (std::size_t i = 0; i < 64; ++i) {
            CHECK(raw.dx.data[i] == b2[i]);
            CHECK(raw.dy.data[i] == b2[64 + i]);
        }
        CHECK(raw.offset_x == p.slot(p.layout.w0)[0]);
    }

    TEST_CASE("different seeds draw different conv weights and identical fc2 weights") {
        Rng a(10), b(11);
        const auto pa = init_params<float>(a, Architecture{}), pb = init_params<float>(b, Architecture{});
        const auto ca = pa.slot(pa.layout.conv_w[0]), cb = pb.slot(pb.layout.conv_w[0]);
        CHECK(!std::equal(ca.begin(), ca.end(), cb.begin()));
        for (float v : pa.slot(pa.layout.fc2_w)) CHECK(v == 0.0f);
        for (float v : pb.slot(pb.layout.fc2_w)) CHECK(v == 0.0f);
    }

    TEST_CASE("conv weights stay within the Glorot bound") {
        Rng rng(12);
        const auto p = init_params<double>(rng, Architecture{});
        const double bound1 = std::sqrt(6.0 / (2 * 25 + 20 * 25));
        for (double v : p.slot(p.layout.conv_w[0])) CHECK(std::abs(v) <= bound1);
    }

    TEST_CASE("all-zero input gives rectified biases after the first conv") {
        Rng rng(5);
        auto p = init_params<double>(rng, Architecture{});
        std::uniform_real_distribution<double> u(-1, 1);
        for (double& v : p.slot(p.layout.conv_b[0])) v = u(rng);
        ForwardCache<double> cache;
        forward(p, Silhouette(64, 64), Silhouette(64, 64), &cache);
        const auto bias = p.slot(p.layout.conv_b[0]);
        for (std::size_t o = 0; o < 20; ++o) {
            for (std::size_t i = 0; i < 32 * 32; ++i) CHECK(cache.activations[0][o * 1024 + i] == std::max(0.0, bias[o]));
        }
    }

    TEST_CASE("first block matches a direct pooling and convolution loop") {
        Rng rng(6);
        auto p = init_params<double>(rng, Architecture{32, 4, 4});
        randomize(p, rng, 0.3);
        const Silhouette a = random_silhouette(32, 32, rng), b = random_silhouette(32, 32, rng);
        ForwardCache<double> cache;
        forward(p, a, b, &cache);
        const std::size_t half = 16;
        std::vector<double> pooled(2 * half * half);
        for (std::size_t ch = 0; ch < 2; ++ch) {
            const Silhouette& img = ch == 0 ? a : b;
            for (std::size_t r = 0; r < half; ++r) {
                for (std::size_t c = 0; c < half; ++c) {
                    pooled[(ch * half + r) * half + c] = std::max({img(2 * r, 2 * c), img(2 * r, 2 * c + 1),
                                                                  img(2 * r + 1, 2 * c), img(2 * r + 1, 2 * c + 1)});
                }
            }
        }
        const auto w = p.slot(p.layout.conv_w[0]);
        const auto bias = p.slot(p.layout.conv_b[0]);
        double worst = 0.0;
        for (std::size_t o = 0; o < 20; ++o) {
            for (long r = 0; r < 16; ++r) {
                for (long c = 0; c < 16; ++c) {
                    double acc = bias[o];
                    for (std::size_t ch = 0; ch < 2; ++ch) {
                        for (long ky = 0; ky < 5; ++ky) {
                            for (long kx = 0; kx < 5; ++kx) {
                                const long y = r + ky - 2, x = c + kx - 2;
                                if (y < 0 || x < 0 || y >= 16 || x >= 16) continue;
                                acc += w[((o * 2 + ch) * 5 + ky) * 5 + kx] * pooled[(ch * half + y) * half + x];
                            }
                        }
                    }
                    const double out = cache.activations[0][(o * 16 + r) * 16 + c];
                    worst = std::max(worst, std::abs(out - std::max(0.0, acc)));
                }
            }
        }
        CHECK(worst < 1e-12);
        for (std::size_t i = 0; i < pooled.size(); ++i) CHECK(cache.pooled[0][i] == pooled[i]);
    }

    TEST_CASE("doubling fc2 weights doubles the deviation from the bias") {
        Rng rng(7);
        auto p = init_params<double>(rng, Architecture{32, 4, 4});
        randomize(p, rng, 0.5);
        const Silhouette a = random_silhouette(32, 32, rng), b = random_silhouette(32, 32, rng);
        const DifferentialWarp base = forward(p, a, b);
        auto p2 = p;
        for (double& v : p2.slot(p2.layout.fc2_w)) v *= 2.0;
        const DifferentialWarp doubled = forward(p2, a, b);
        const auto b2 = p.slot(p.layout.fc2_b);
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(std::abs((doubled.dx.data[i] - b2[i]) - 2.0 * (base.dx.data[i] - b2[i])) < 1e-12);
            CHECK(std::abs((doubled.dy.data[i] - b2[16 + i]) - 2.0 * (base.dy.data[i] - b2[16 + i])) < 1e-12);
        }
        // with zero fc2 biases the doubling is exact
        for (double& v : p.slot(p.layout.fc2_b)) v = 0.0;
        for (double& v : p2.slot(p2.layout.fc2_b)) v = 0.0;
        const DifferentialWarp z1 = forward(p, a, b), z2 = forward(p2, a, b);
        for (std::size_t i = 0; i < 16; ++i) CHECK(z2.dx.data[i] == 2.0 * z1.dx.data[i]);
    }

    TEST_CASE("forward is deterministic and checks the resolution") {
        Rng rng(8);
        auto p = init_params<float>(rng, Architecture{});
        randomize(p, rng, 0.2);
        const Silhouette a = random_silhouette(64, 64, rng), b = random_silhouette(64, 64, rng);
        const DifferentialWarp x = forward(p, a, b), y = forward(p, a, b);
        CHECK(x.dx.data == y.dx.data);
        CHECK(x.dy.data == y.dy.data);
        CHECK_THROWS_AS(forward(p, Silhouette(32, 32), Silhouette(32, 32)), ValidationError);
    }
}

TEST_SUITE("regressor backward") {
    TEST_CASE("zero upstream gradient gives zero parameter gradients") {
        Rng rng(20);
        auto p = init_params<double>(rng, Architecture{16, 2, 2});
        randomize(p, rng, 0.5);
        ForwardCache<double> cache;
        forward(p, random_silhouette(16, 16, rng), random_silhouette(16, 16, rng), &cache);
        for (double g : backward(p, cache, DifferentialWarp(2, 2))) CHECK(g == 0.0);
    }

    TEST_CASE("fc2 bias and offset gradients pass the upstream gradient through") {
        Rng rng(21);
        auto p = init_params<double>(rng, Architecture{16, 2, 2});
        randomize(p, rng, 0.5);
        ForwardCache<double> cache;
        forward(p, random_silhouette(16, 16, rng), random_silhouette(16, 16, rng), &cache);
        const DifferentialWarp g = random_raw_gradient(2, 2, rng);
        const std::vector<double> grads = backward(p, cache, g);
        const TensorSlot b2 = p.layout.fc2_b;
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(grads[b2.offset + i] == g.dx.data[i]);
            CHECK(grads[b2.offset + 4 + i] == g.dy.data[i]);
        }
        CHECK(grads[p.layout.w0.offset] == g.offset_x);
        CHECK(grads[p.layout.w0.offset + 1] == g.offset_y);
    }

    TEST_CASE("parameter gradients match central differences") {
        Rng rng(22);
        for (int trial = 0; trial < 3; ++trial) {
            auto p = init_params<double>(rng, Architecture{16, 2, 2});
            randomize(p, rng, 0.5);
            const Silhouette a = smooth_blob(16, 0.1, 0.0, 0.6, 0.4), b = random_silhouette(16, 16, rng);
            const DifferentialWarp g = random_raw_gradient(2, 2, rng);
            ForwardCache<double> cache;
            forward(p, a, b, &cache);
            const std::vector<double> grads = backward(p, cache, g);
            double scale = 0.0;
            for (double v : grads) scale = std::max(scale, std::abs(v));
            std::uniform_int_distribution<std::size_t> pick(0, p.values.size() - 1);
            const double h = 1e-4;
            int bad = 0;
            for (int s = 0; s < 50; ++s) {
                const std::size_t i = pick(rng);
                auto pp = p, pm = p;
                pp.values[i] += h;
                pm.values[i] -= h;
                const double num = (raw_dot(forward(pp, a, b), g) - raw_dot(forward(pm, a, b), g)) / (2 * h);
                bad += rel_err(grads[i], num, 1e-6 * scale) > 1e-3;
            }
            CHECK(bad == 0);
        }
    }

    TEST_CASE("every layer receives gradient in a generic configuration") {
        Rng rng(23);
        auto p = init_params<double>(rng, Architecture{16, 2, 2});
        randomize(p, rng, 0.5);
        ForwardCache<double> cache;
        forward(p, smooth_blob(16, 0, 0, 0.6, 0.5), random_silhouette(16, 16, rng), &cache);
        const std::vector<double> grads = backward(p, cache, random_raw_gradient(2, 2, rng));
        auto any_nonzero = [&](const TensorSlot& s) {
            for (std::size_t i = 0; i < s.size; ++i) {
                if (grads[s.offset + i] != 0.0) return true;
            }
            return false;
        };
        for (std::size_t b = 0; b < 4; ++b) CHECK(any_nonzero(p.layout.conv_w[b]));
        CHECK(any_nonzero(p.layout.fc1_w));
        CHECK(any_nonzero(p.layout.fc2_w));
    }
}

TEST_SUITE("regressor adam") {
    TEST_CASE("zero gradients leave parameters unchanged and count the step") {
        Rng rng(30);
        auto p = init_params<double>(rng, Architecture{16, 2, 2});
        const auto before = p.values;
        AdamState state(p.values.size());
        const std::vector<double> zeros(p.values.size(), 0.0);
        adam_step<double>(p, zeros, state, 1e-3);
        CHECK(p.values == before);
        CHECK(state.step == 1);
    }

    TEST_CASE("constant gradient follows the closed-form trajectory") {
        // bias-corrected moments of a constant g are exactly g and g^2
        Rng rng(31);
        auto p = init_params<double>(rng, Architecture{16, 2, 2});
        const auto start = p.values;
        AdamState state(p.values.size());
        const double g = 0.37, lr = 1e-3, eps = 1e-8;
        const std::vector<double> grads(p.values.size(), g);
        const int k = 25;
        for (int t = 0; t < k; ++t) adam_step<double>(p, grads, state, lr);
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            CHECK(std::abs(p.values[i] - (start[i] - k * lr * g / (g + eps))) < 1e-12);
        }
    }

    TEST_CASE("zero learning rate leaves parameters unchanged") {
        Rng rng(32);
        auto p = init_params<double>(rng, Architecture{16, 2, 2});
        const auto before = p.values;
        AdamState state(p.values.size());
        adam_step<double>(p, std::vector<double>(p.values.size(), 1.0), state, 0.0);
        CHECK(p.values == before);
    }
}

TEST_SUITE("checkpoint") {
    TEST_CASE("save then load reproduces parameters and outputs bitwise") {
        Rng rng(40);
        Checkpoint c;
        c.params = init_params<float>(rng, Architecture{});
        randomize(c.params, rng, 0.2);
        c.mode = RegularizationMode::TV;
        c.step = 1234;
        c.config = Json{{"note", "x"}};
        AdamState st(c.params.values.size());
        for (std::size_t i = 0; i < st.m.size(); ++i) {
            st.m[i] = 1e-3 * static_cast<double>(i);
            st.v[i] = 1.0 / (1.0 + static_cast<double>(i));
        }
        st.step = 77;
        c.optimizer = st;
        const auto dir = temp_dir("ckpt");
        save_checkpoint(dir / "a.ckpt", c);
        const Checkpoint d = load_checkpoint(dir / "a.ckpt");
        CHECK(d.params.values == c.params.values);
        CHECK(d.params.arch == c.params.arch);
        CHECK(d.mode == RegularizationMode::TV);
        CHECK(d.step == 1234);
        CHECK(d.config == c.config);
        REQUIRE(d.optimizer.has_value());
        CHECK(d.optimizer->m == st.m);
        CHECK(d.optimizer->v == st.v);
        CHECK(d.optimizer->step == 77);
        const Silhouette a = random_silhouette(64, 64, rng), b = random_silhouette(64, 64, rng);
        const DifferentialWarp x = forward(c.params, a, b), y = forward(d.params, a, b);
        CHECK(x.dx.data == y.dx.data);
        CHECK(x.dy.data == y.dy.data);
        CHECK(encode_checkpoint(d) == encode_checkpoint(c));
    }

    TEST_CASE("file starts with the magic and uses 32-bit parameters") {
        Rng rng(41);
        Checkpoint c;
        c.params = init_params<float>(rng, Architecture{});
        const std::string bytes = encode_checkpoint(c);
        CHECK(bytes.compare(0, 16, kCheckpointMagic) == 0);
        std::uint32_t header = 0;
        std::memcpy(&header, bytes.data() + 16, 4);
        CHECK(bytes.size() == 20 + header + 4 * 28190);
    }

    TEST_CASE("corrupt and truncated files are rejected") {
        Rng rng(42);
        Checkpoint c;
        c.params = init_params<float>(rng, Architecture{});
        std::string bytes = encode_checkpoint(c);
        CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 7)), Error);
        bytes[3] = 'X';
        CHECK_THROWS_AS(decode_checkpoint(bytes), Error);
        CHECK_THROWS_AS(load_checkpoint(temp_dir("ckpt_missing") / "none.ckpt"), IoError);
    }
}
