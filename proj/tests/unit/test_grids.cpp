#include <fstream>

#include "doctest.h"

#include "helpers.hpp"

#include "ffdalign/errors.hpp"
#include "ffdalign/image_io.hpp"
#include "ffdalign/synth.hpp"

using namespace ffdalign;
using namespace testutil;

namespace {

std::size_t count_ones(const Silhouette& s) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < s.height(); ++r) {
        for (std::size_t c = 0; c < s.width(); ++c) n += s(r, c) > 0.5 ? 1 : 0;
    }
    return n;
}

void write_gray(const std::filesystem::path& p, std::size_t h, std::size_t w, auto value) {
    Image8 img{h, w, 1, std::vector<std::uint8_t>(h * w)};
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) img.at(r, c, 0) = value(r, c);
    }
    write_png(p, img);
}

} // namespace

TEST_SUITE("silhouette io") {
    TEST_CASE("constant images load as constant silhouettes") {
        const auto dir = temp_dir("io_const");
        write_gray(dir / "black.png", 64, 64, [](auto, auto) { return 0; });
        write_gray(dir / "white.png", 64, 64, [](auto, auto) { return 255; });
        const Silhouette black = load_silhouette(dir / "black.png", 0.5);
        const Silhouette white = load_silhouette(dir / "white.png", 0.5);
        CHECK(black == Silhouette(64, 64, 0.0));
        CHECK(white == Silhouette(64, 64, 1.0));
    }

    TEST_CASE("checkerboard loads as alternating field with half foreground") {
        const auto dir = temp_dir("io_checker");
        write_gray(dir / "checker.png", 64, 64, [](std::size_t r, std::size_t c) { return (r + c) % 2 ? 255 : 0; });
        const Silhouette s = load_silhouette(dir / "checker.png", 0.5);
        for (std::size_t r = 0; r < 64; ++r) {
            for (std::size_t c = 0; c < 64; ++c) CHECK(s(r, c) == ((r + c) % 2 ? 1.0 : 0.0));
        }
        CHECK(count_ones(s) == 64 * 64 / 2);
        CHECK(foreground_count(s) == 64 * 64 / 2);
    }

    TEST_CASE("binary image round-trips bit-exactly") {
        const auto dir = temp_dir("io_roundtrip");
        const Silhouette a = render_ellipse(48, 0.1, -0.1, 0.5, 0.3, 0.2);
        save_silhouette(dir / "a.png", a);
        const Silhouette b = load_silhouette(dir / "a.png");
        save_silhouette(dir / "b.png", b);
        CHECK(load_silhouette(dir / "b.png") == a);
        CHECK(b == a);
    }

    TEST_CASE("missing and corrupt files are reported") {
        const auto dir = temp_dir("io_missing");
        CHECK_THROWS_AS(load_silhouette(dir / "nope.png"), IoError);
        std::ofstream(dir / "bad.png") << "not a png";
        CHECK_THROWS_AS(load_silhouette(dir / "bad.png"), Error);
    }

    TEST_CASE("silhouette invariants are validated") {
        CHECK_THROWS_AS(Silhouette(1, 5), ValidationError);
        Field f(3, 3, 0.5);
        f(1, 1) = 1.5;
        CHECK_THROWS_AS(Silhouette{f}, ValidationError);
    }
}

TEST_SUITE("masks") {
    TEST_CASE("mask covering the entire image clears it") {
        const Silhouette s(32, 32, 1.0);
        CHECK(apply_mask(s, RectMask{16, 16, 64, 64}) == Silhouette(32, 32, 0.0));
    }

    TEST_CASE("1x1 mask on background is a no-op") {
        const Silhouette s = render_square(32, 32, 8, 8, 10);
        CHECK(apply_mask(s, RectMask{0, 0, 1, 1}) == s);
    }

    TEST_CASE("16x16 centered mask removes 256 pixels from a full image") {
        const Silhouette s(64, 64, 1.0);
        const Silhouette out = apply_mask(s, RectMask{32, 32, 16, 16});
        CHECK(count_ones(out) == 4096 - 256);
        // the removed block is rows/cols [24, 40)
        CHECK(out(24, 24) == 0.0);
        CHECK(out(39, 39) == 0.0);
        CHECK(out(23, 30) == 1.0);
        CHECK(out(40, 30) == 1.0);
    }

    TEST_CASE("mask never increases values") {
        Rng rng(3);
        for (int t = 0; t < 50; ++t) {
            const Silhouette s = random_silhouette(20, 24, rng);
            std::uniform_int_distribution<std::size_t> r(0, 19), c(0, 23), sz(1, 30);
            const Silhouette out = apply_mask(s, RectMask{r(rng), c(rng), sz(rng), sz(rng)});
            for (std::size_t i = 0; i < s.size(); ++i) CHECK(out.values()[i] <= s.values()[i]);
            CHECK(foreground_count(out) <= foreground_count(s));
        }
    }

    TEST_CASE("mask centre outside the image is rejected") {
        CHECK_THROWS_AS(apply_mask(Silhouette(8, 8), RectMask{8, 0, 1, 1}), ValidationError);
        CHECK_THROWS_AS(apply_mask(Silhouette(8, 8), RectMask{0, 0, 0, 1}), ValidationError);
    }

    TEST_CASE("single foreground pixel fixes the mask centre") {
        Silhouette s(32, 32);
        s.set(10, 10, 1.0);
        Rng rng(11);
        for (int t = 0; t < 20; ++t) {
            const RectMask m = random_mask(s, Interval{0.2, 0.6}, rng);
            CHECK(m.center_row == 10);
            CHECK(m.center_col == 10);
        }
    }

    TEST_CASE("random_mask is deterministic for a seed") {
        const Silhouette s = render_ellipse(64, 0.0, 0.0, 0.6, 0.4, 0.0);
        Rng a(99), b(99);
        const RectMask ma = random_mask(s, Interval{0.2, 0.6}, a);
        const RectMask mb = random_mask(s, Interval{0.2, 0.6}, b);
        CHECK(ma.center_row == mb.center_row);
        CHECK(ma.center_col == mb.center_col);
        CHECK(ma.mask_height == mb.mask_height);
        CHECK(ma.mask_width == mb.mask_width);
    }

    TEST_CASE("mask side fraction follows the uniform size range") {
        // E[U(0.25, 0.5)] = 0.375
        const Silhouette s(64, 64, 1.0);
        Rng rng(2024);
        double sum = 0.0;
        const int draws = 10000;
        for (int t = 0; t < draws; ++t) {
            const RectMask m = random_mask(s, Interval{0.25, 0.5}, rng);
            CHECK(m.mask_height >= 16);
            CHECK(m.mask_height <= 32);
            sum += static_cast<double>(m.mask_height) / 64.0;
        }
        const double mean = sum / draws;
        CHECK(mean >= 0.36);
        CHECK(mean <= 0.39);
    }

    TEST_CASE("random_mask rejects bad inputs") {
        Rng rng(0);
        CHECK_THROWS_AS(random_mask(Silhouette(8, 8), Interval{0.2, 0.5}, rng), ValidationError);
        CHECK_THROWS_AS(random_mask(Silhouette(8, 8, 1.0), Interval{0.6, 0.5}, rng), ValidationError);
        CHECK_THROWS_AS(random_mask(Silhouette(8, 8, 1.0), Interval{0.0, 0.5}, rng), ValidationError);
    }
}

TEST_SUITE("iou") {
    TEST_CASE("iou of a shape with itself is 1") {
        const Silhouette s = render_ellipse(32, 0.0, 0.0, 0.5, 0.5, 0.0);
        CHECK(iou(s, s) == 1.0);
    }

    TEST_CASE("disjoint squares have iou 0") {
        CHECK(iou(render_square(32, 32, 0, 0, 4), render_square(32, 32, 10, 10, 4)) == 0.0);
    }

    TEST_CASE("overlapping strip gives 50/150") {
        // two 10x10 squares sharing a 5x10 strip: |A&B| = 50, |A|B| = 150
        const Silhouette a = render_square(32, 32, 5, 5, 10);
        const Silhouette b = render_square(32, 32, 10, 5, 10);
        std::size_t inter = 0, uni = 0;
        for (std::size_t r = 0; r < 32; ++r) {
            for (std::size_t c = 0; c < 32; ++c) {
                const bool x = a(r, c) > 0.5, y = b(r, c) > 0.5;
                inter += x && y;
                uni += x || y;
            }
        }
        REQUIRE(inter == 50);
        REQUIRE(uni == 150);
        CHECK(iou(a, b) == doctest::Approx(50.0 / 150.0).epsilon(1e-15));
    }

    TEST_CASE("iou is symmetric and 1 exactly for identical binarizations") {
        Rng rng(5);
        for (int t = 0; t < 100; ++t) {
            const Silhouette a = random_silhouette(12, 12, rng);
            const Silhouette b = random_silhouette(12, 12, rng);
            CHECK(iou(a, b) == iou(b, a));
            CHECK((iou(a, b) == 1.0) == (binarize(a) == binarize(b)));
            CHECK(iou(a, binarize(a)) == 1.0);
        }
    }

    TEST_CASE("dimension mismatch is rejected") {
        CHECK_THROWS_AS(iou(Silhouette(4, 4), Silhouette(4, 5)), ValidationError);
    }
}

TEST_SUITE("coordinates") {
    TEST_CASE("pixel and normalized coordinates are inverse") {
        CHECK(to_normalized(0.0, 64) == -1.0);
        CHECK(to_normalized(63.0, 64) == 1.0);
        for (double p : {0.0, 3.5, 17.25, 63.0}) CHECK(to_pixel(to_normalized(p, 64), 64) == doctest::Approx(p));
    }

    TEST_CASE("derived seeds differ per stream and are stable") {
        CHECK(derive_seed(1, 0) == derive_seed(1, 0));
        CHECK(derive_seed(1, 0) != derive_seed(1, 1));
        CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    }
}
