#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ffdalign/grids.hpp"

namespace ffdalign {

// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;

    std::uint8_t& at(std::size_t r, std::size_t c, std::size_t ch) { return pixels[(r * width + c) * channels + ch]; }
    std::uint8_t at(std::size_t r, std::size_t c, std::size_t ch) const {
        return pixels[(r * width + c) * channels + ch];
    }
};

// Decodes any PNG into gray (channels=1) or RGB (channels=3). Alpha is composited over black.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

// RGB is reduced to Rec.601 luma. threshold > 0 snaps values to {0,1} (v > threshold -> 1).
Silhouette load_silhouette(const std::filesystem::path& path, double threshold = 0.5);
void save_silhouette(const std::filesystem::path& path, const Silhouette& s);

Image8 to_image(const Silhouette& s);

} // namespace ffdalign
