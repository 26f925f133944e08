#include "doctest.h"

#include <cmath>
#include <numbers>

#include "helpers.hpp"

#include "ffdalign/errors.hpp"
#include "ffdalign/sampler.hpp"
#include "ffdalign/synth.hpp"

using namespace ffdalign;
using namespace testutil;

namespace {

// Warp whose pixel-space lookups keep a margin from the lattice lines.
DenseWarp off_lattice_warp(std::size_t h, std::size_t w, Rng& rng, double margin) {
    std::uniform_real_distribution<double> frac(margin, 1.0 - margin);
    std::uniform_int_distribution<int> col(-1, static_cast<int>(w) - 1), row(-1, static_cast<int>(h) - 1);
    DenseWarp d(h, w);
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        d.x.data[i] = to_normalized(col(rng) + frac(rng), w);
        d.y.data[i] = to_normalized(row(rng) + frac(rng), h);
    }
    return d;
}

double dense_dot(const DenseWarp& a, const DenseWarp& b) { return dot(a.x, b.x) + dot(a.y, b.y); }

// Independent bilinear stencil along one axis: pixel i of `extent` over `nodes` control nodes.
std::pair<std::size_t, double> stencil(std::size_t i, std::size_t extent, std::size_t nodes) {
    const double t = static_cast<double>(i) * static_cast<double>(nodes - 1) / static_cast<double>(extent - 1);
    std::size_t base = static_cast<std::size_t>(std::floor(t));
    if (base > nodes - 2) base = nodes - 2;
    return {base, t - static_cast<double>(base)};
}

} // namespace

TEST_SUITE("upsample") {
    TEST_CASE("identity control gives the regular dense grid") {
        for (auto [h, w] : {std::pair<std::size_t, std::size_t>{64, 64}, {37, 50}, {8, 8}}) {
            const DenseWarp d = upsample(identity_control(8, 8), h, w);
            CHECK(max_abs_difference(d, regular_dense(h, w)) < 1e-9);
        }
    }

    TEST_CASE("constant control looks up the centre everywhere") {
        ControlWarp c(8, 8);
        const DenseWarp d = upsample(c, 32, 32);
        for (double v : d.x.data) CHECK(v == 0.0);
        for (double v : d.y.data) CHECK(v == 0.0);
    }

    TEST_CASE("2x2 corner grid scaled by one half halves every coordinate") {
        ControlWarp c(2, 2);
        c.x(0, 0) = -0.5; c.x(0, 1) = 0.5; c.x(1, 0) = -0.5; c.x(1, 1) = 0.5;
        c.y(0, 0) = -0.5; c.y(0, 1) = -0.5; c.y(1, 0) = 0.5; c.y(1, 1) = 0.5;
        const DenseWarp d = upsample(c, 21, 17);
        const DenseWarp id = regular_dense(21, 17);
        for (std::size_t i = 0; i < d.x.size(); ++i) {
            CHECK(std::abs(d.x.data[i] - 0.5 * id.x.data[i]) < 1e-15);
            CHECK(std::abs(d.y.data[i] - 0.5 * id.y.data[i]) < 1e-15);
        }
    }

    TEST_CASE("gradient at a node-coincident pixel lands on that node only") {
        // 63 / 7 = 9: pixel 9k sits on node k
        DenseWarp g(64, 64);
        g.x(18, 27) = 1.0;
        g.y(18, 27) = -2.0;
        const WarpGradients wg = upsample_backward(identity_control(8, 8), g);
        for (std::size_t r = 0; r < 8; ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                const bool node = r == 2 && c == 3;
                CHECK(wg.d_control_x(r, c) == doctest::Approx(node ? 1.0 : 0.0));
                CHECK(wg.d_control_y(r, c) == doctest::Approx(node ? -2.0 : 0.0));
            }
        }
    }

    TEST_CASE("uniform gradient yields the basis-function sums") {
        const std::size_t h = 40, w = 29, m = 5, n = 7;
        DenseWarp g(h, w);
        for (double& v : g.x.data) v = 1.0;
        const WarpGradients wg = upsample_backward(identity_control(m, n), g);
        Field row_mass(1, m), col_mass(1, n);
        for (std::size_t r = 0; r < h; ++r) {
            const auto [b, f] = stencil(r, h, m);
            row_mass(0, b) += 1.0 - f;
            row_mass(0, b + 1) += f;
        }
        for (std::size_t c = 0; c < w; ++c) {
            const auto [b, f] = stencil(c, w, n);
            col_mass(0, b) += 1.0 - f;
            col_mass(0, b + 1) += f;
        }
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                CHECK(wg.d_control_x(r, c) == doctest::Approx(row_mass(0, r) * col_mass(0, c)).epsilon(1e-12));
                CHECK(wg.d_control_y(r, c) == 0.0);
            }
        }
    }

    TEST_CASE("upsample and its adjoint satisfy the dot-product identity") {
        Rng rng(4);
        for (int t = 0; t < 20; ++t) {
            ControlWarp c(8, 8);
            c.x = random_field(8, 8, rng, -1, 1);
            c.y = random_field(8, 8, rng, -1, 1);
            DenseWarp g(33, 47);
            g.x = random_field(33, 47, rng, -1, 1);
            g.y = random_field(33, 47, rng, -1, 1);
            const WarpGradients back = upsample_backward(c, g);
            const double lhs = dense_dot(upsample(c, 33, 47), g);
            const double rhs = dot(c.x, back.d_control_x) + dot(c.y, back.d_control_y);
            CHECK(rel_err(lhs, rhs) < 1e-10);
        }
    }

    TEST_CASE("upsample is linear in the control grid") {
        Rng rng(6);
        ControlWarp a(6, 6), b(6, 6), mix(6, 6);
        a.x = random_field(6, 6, rng, -1, 1); a.y = random_field(6, 6, rng, -1, 1);
        b.x = random_field(6, 6, rng, -1, 1); b.y = random_field(6, 6, rng, -1, 1);
        for (std::size_t i = 0; i < 36; ++i) {
            mix.x.data[i] = 2.0 * a.x.data[i] - 0.5 * b.x.data[i];
            mix.y.data[i] = 2.0 * a.y.data[i] - 0.5 * b.y.data[i];
        }
        const DenseWarp da = upsample(a, 20, 20), db = upsample(b, 20, 20), dm = upsample(mix, 20, 20);
        for (std::size_t i = 0; i < dm.x.size(); ++i) {
            CHECK(std::abs(dm.x.data[i] - (2.0 * da.x.data[i] - 0.5 * db.x.data[i])) < 1e-12);
            CHECK(std::abs(dm.y.data[i] - (2.0 * da.y.data[i] - 0.5 * db.y.data[i])) < 1e-12);
        }
    }
}

TEST_SUITE("resample") {
    TEST_CASE("identity warp returns the source exactly") {
        Rng rng(1);
        const Silhouette s = random_silhouette(23, 31, rng);
        CHECK(resample(s, identity_dense(23, 31)) == s);
        CHECK(resample(s, regular_dense(23, 31)) == s);
    }

    TEST_CASE("lookups outside the image read zero") {
        const Silhouette s(16, 16, 1.0);
        DenseWarp d = identity_dense(16, 16);
        for (double& v : d.x.data) v += 2.5;
        CHECK(resample(s, d) == Silhouette(16, 16, 0.0));
    }

    TEST_CASE("halving the lookup magnifies a centred square twofold") {
        const Silhouette square = render_square(64, 64, 24, 24, 16);
        DenseWarp d = regular_dense(64, 64);
        for (double& v : d.x.data) v *= 0.5;
        for (double& v : d.y.data) v *= 0.5;
        const Silhouette out = resample(square, d);
        CHECK(iou(out, render_square(64, 64, 16, 16, 32)) >= 0.9);
    }

    TEST_CASE("output stays within the source value range") {
        Rng rng(2);
        for (int t = 0; t < 10; ++t) {
            Field f = random_field(12, 12, rng, 0.2, 0.7);
            const DenseWarp d = off_lattice_warp(12, 12, rng, 0.0);
            const Field out = resample_field(f, d);
            for (std::size_t i = 0; i < out.size(); ++i) {
                CHECK(out.data[i] <= 0.7 + 1e-12);
                CHECK(out.data[i] >= 0.0);
            }
        }
    }

    TEST_CASE("resample is linear in the source") {
        Rng rng(12);
        const Field a = random_field(10, 14, rng), b = random_field(10, 14, rng);
        Field mix(10, 14);
        for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = 3.0 * a.data[i] - 2.0 * b.data[i];
        const DenseWarp d = off_lattice_warp(10, 14, rng, 0.0);
        const Field ra = resample_field(a, d), rb = resample_field(b, d), rm = resample_field(mix, d);
        for (std::size_t i = 0; i < rm.size(); ++i) CHECK(std::abs(rm.data[i] - (3 * ra.data[i] - 2 * rb.data[i])) < 1e-12);
    }

    TEST_CASE("nearest lookup copies values exactly") {
        Field labels(6, 6);
        for (std::size_t i = 0; i < labels.size(); ++i) labels.data[i] = static_cast<double>(i % 5);
        CHECK(resample_nearest(labels, identity_dense(6, 6)).data == labels.data);
    }
}

TEST_SUITE("resample gradients") {
    TEST_CASE("zero upstream gradient gives zero gradients") {
        Rng rng(3);
        const Field s = random_field(8, 8, rng);
        const auto g = resample_backward(s, off_lattice_warp(8, 8, rng, 0.05), Field(8, 8), true);
        for (double v : g.grad_warp.x.data) CHECK(v == 0.0);
        for (double v : g.grad_warp.y.data) CHECK(v == 0.0);
        for (double v : g.grad_source.data) CHECK(v == 0.0);
    }

    TEST_CASE("warp and source gradients match central differences") {
        Rng rng(21);
        for (int t = 0; t < 5; ++t) {
            const Field s = random_field(8, 8, rng);
            const DenseWarp d = off_lattice_warp(8, 8, rng, 0.05);
            const Field g = random_field(8, 8, rng, -1, 1);
            const auto back = resample_backward(s, d, g, true);
            auto loss = [&](const Field& src, const DenseWarp& w) { return dot(resample_field(src, w), g); };
            const double h = 1e-4;
            for (std::size_t i = 0; i < d.x.size(); ++i) {
                DenseWarp p = d, q = d;
                p.x.data[i] += h;
                q.x.data[i] -= h;
                CHECK(rel_err(back.grad_warp.x.data[i], (loss(s, p) - loss(s, q)) / (2 * h), 1e-6) < 1e-4);
                p = d;
                q = d;
                p.y.data[i] += h;
                q.y.data[i] -= h;
                CHECK(rel_err(back.grad_warp.y.data[i], (loss(s, p) - loss(s, q)) / (2 * h), 1e-6) < 1e-4);
            }
            for (std::size_t i = 0; i < s.size(); ++i) {
                Field p = s, q = s;
                p.data[i] += h;
                q.data[i] -= h;
                CHECK(rel_err(back.grad_source.data[i], (loss(p, d) - loss(q, d)) / (2 * h), 1e-6) < 1e-4);
            }
        }
    }

    TEST_CASE("constant source has no interior warp gradient") {
        Rng rng(22);
        const Field s(10, 10, 0.6);
        DenseWarp d(10, 10);
        std::uniform_real_distribution<double> u(-0.8, 0.8);
        for (double& v : d.x.data) v = u(rng);
        for (double& v : d.y.data) v = u(rng);
        const auto back = resample_backward(s, d, random_field(10, 10, rng, -1, 1));
        for (double v : back.grad_warp.x.data) CHECK(std::abs(v) < 1e-12);
        for (double v : back.grad_warp.y.data) CHECK(std::abs(v) < 1e-12);
    }
}

TEST_SUITE("rotation and composition") {
    TEST_CASE("zero rotation is the identity") {
        CHECK(max_abs_difference(rotation_warp(0.0, 30, 30), regular_dense(30, 30)) < 1e-15);
    }

    TEST_CASE("half-turn reflects through the origin") {
        const DenseWarp r = rotation_warp(std::numbers::pi, 21, 21);
        const DenseWarp id = regular_dense(21, 21);
        for (std::size_t i = 0; i < r.x.size(); ++i) {
            CHECK(std::abs(r.x.data[i] + id.x.data[i]) < 1e-12);
            CHECK(std::abs(r.y.data[i] + id.y.data[i]) < 1e-12);
        }
    }

    TEST_CASE("quarter turn moves an off-centre dot to the rotated place") {
        const double xs = 0.5, ys = -0.2, rad = 0.15, th = std::numbers::pi / 2;
        const Silhouette dot_img = render_ellipse(64, xs, ys, rad, rad, 0.0);
        const Silhouette out = resample(dot_img, rotation_warp(th, 64, 64));
        const double xe = std::cos(th) * xs - std::sin(th) * ys;
        const double ye = std::sin(th) * xs + std::cos(th) * ys;
        CHECK(iou(binarize(out), render_ellipse(64, xe, ye, rad, rad, 0.0)) >= 0.8);
    }

    TEST_CASE("compose has the identity on both sides") {
        Rng rng(40);
        DenseWarp x(24, 24);
        x.x = random_field(24, 24, rng, -0.9, 0.9);
        x.y = random_field(24, 24, rng, -0.9, 0.9);
        CHECK(max_abs_difference(compose(regular_dense(24, 24), x), x) < 1e-9);
        CHECK(max_abs_difference(compose(x, regular_dense(24, 24)), x) < 1e-9);
    }

    TEST_CASE("composed rotations add their angles in the central half") {
        const double a = 0.3, b = -0.7;
        const DenseWarp c = compose(rotation_warp(a, 64, 64), rotation_warp(b, 64, 64));
        const DenseWarp expect = rotation_warp(a + b, 64, 64);
        double worst = 0.0;
        for (std::size_t r = 16; r < 48; ++r) {
            for (std::size_t col = 16; col < 48; ++col) {
                worst = std::max({worst, std::abs(c.x(r, col) - expect.x(r, col)), std::abs(c.y(r, col) - expect.y(r, col))});
            }
        }
        CHECK(worst < 1e-3);
    }

    TEST_CASE("rotation gradient matches central differences") {
        Rng rng(41);
        DenseWarp g(16, 16);
        g.x = random_field(16, 16, rng, -1, 1);
        g.y = random_field(16, 16, rng, -1, 1);
        for (double th : {-0.6, 0.1, 1.2}) {
            const double h = 1e-6;
            const double num = (dense_dot(rotation_warp(th + h, 16, 16), g) - dense_dot(rotation_warp(th - h, 16, 16), g)) / (2 * h);
            CHECK(rel_err(rotation_warp_backward(th, g), num) < 1e-7);
        }
    }

    TEST_CASE("compose gradients match central differences") {
        Rng rng(42);
        const std::size_t h = 9, w = 9;
        DenseWarp outer(h, w), inner(h, w), g(h, w);
        // keep outer lookups inside and off the inner lattice
        const DenseWarp off = off_lattice_warp(h, w, rng, 0.1);
        for (std::size_t i = 0; i < off.x.size(); ++i) {
            outer.x.data[i] = std::clamp(off.x.data[i], -0.95, 0.95);
            outer.y.data[i] = std::clamp(off.y.data[i], -0.95, 0.95);
        }
        inner.x = random_field(h, w, rng, -1, 1);
        inner.y = random_field(h, w, rng, -1, 1);
        g.x = random_field(h, w, rng, -1, 1);
        g.y = random_field(h, w, rng, -1, 1);
        const ComposeGradients back = compose_backward(outer, inner, g);
        auto loss = [&](const DenseWarp& o, const DenseWarp& in) { return dense_dot(compose(o, in), g); };
        const double eps = 1e-6;
        for (std::size_t i = 0; i < outer.x.size(); ++i) {
            for (int axis = 0; axis < 2; ++axis) {
                DenseWarp p = outer, q = outer;
                (axis ? p.y : p.x).data[i] += eps;
                (axis ? q.y : q.x).data[i] -= eps;
                const double num = (loss(p, inner) - loss(q, inner)) / (2 * eps);
                CHECK(rel_err((axis ? back.grad_outer.y : back.grad_outer.x).data[i], num, 1e-6) < 1e-4);
                DenseWarp pi = inner, qi = inner;
                (axis ? pi.y : pi.x).data[i] += eps;
                (axis ? qi.y : qi.x).data[i] -= eps;
                const double num_i = (loss(outer, pi) - loss(outer, qi)) / (2 * eps);
                CHECK(rel_err((axis ? back.grad_inner.y : back.grad_inner.x).data[i], num_i, 1e-6) < 1e-4);
            }
        }
    }

    TEST_CASE("scale warp enlarges content for factors above one") {
        const Silhouette square = render_square(64, 64, 24, 24, 16);
        const Silhouette out = resample(square, scale_warp(2.0, 2.0, 64, 64));
        CHECK(iou(out, render_square(64, 64, 16, 16, 32)) >= 0.9);
        CHECK(max_abs_difference(scale_warp(1.0, 1.0, 20, 20), regular_dense(20, 20)) < 1e-15);
    }
}
