#include "ffdalign/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>

#include "ffdalign/errors.hpp"

namespace ffdalign {

Image8 read_png(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
        throw IoError("cannot decode '" + path.string() + "': " + img.message);
    }
    const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
    const std::size_t src_channels = color ? 4 : 2;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("cannot decode '" + path.string() + "': " + img.message);
    }
    Image8 out;
    out.height = img.height;
    out.width = img.width;
    out.channels = color ? 3 : 1;
    if (out.height == 0 || out.width == 0) {
        throw ValidationError("zero-size image '" + path.string() + "'");
    }
    out.pixels.resize(out.height * out.width * out.channels);
    for (std::size_t p = 0; p < out.height * out.width; ++p) {
        const std::uint8_t* px = &buffer[p * src_channels];
        const unsigned alpha = px[src_channels - 1];
        for (std::size_t ch = 0; ch < out.channels; ++ch) {
            out.pixels[p * out.channels + ch] = static_cast<std::uint8_t>((px[ch] * alpha + 127) / 255);
        }
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw ValidationError("write_png: only gray and RGB images are supported");
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw IoError("cannot write '" + path.string() + "': " + img.message);
    }
}

Silhouette load_silhouette(const std::filesystem::path& path, double threshold) {
    if (!std::filesystem::exists(path)) {
        throw IoError("no such file '" + path.string() + "'");
    }
    const Image8 img = read_png(path);
    if (img.height < 2 || img.width < 2) {
        throw ValidationError("image '" + path.string() + "' is smaller than 2x2");
    }
    Field f(img.height, img.width);
    for (std::size_t p = 0; p < img.height * img.width; ++p) {
        double v;
        if (img.channels == 3) {
            const unsigned r = img.pixels[p * 3], g = img.pixels[p * 3 + 1], b = img.pixels[p * 3 + 2];
            v = static_cast<double>(299 * r + 587 * g + 114 * b) / (1000.0 * 255.0);
        } else {
            v = img.pixels[p] / 255.0;
        }
        if (threshold > 0.0) {
            v = v > threshold ? 1.0 : 0.0;
        }
        f.data[p] = v;
    }
    return Silhouette(std::move(f));
}

Image8 to_image(const Silhouette& s) {
    Image8 img;
    img.height = s.height();
    img.width = s.width();
    img.channels = 1;
    img.pixels.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(s.values()[i] * 255.0));
    }
    return img;
}

void save_silhouette(const std::filesystem::path& path, const Silhouette& s) {
    write_png(path, to_image(s));
}

} // namespace ffdalign
