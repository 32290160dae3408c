#include "sama/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "sama/kernels.hpp"

namespace sama {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
    std::size_t h, w, channels;
    std::vector<std::uint8_t> bytes;
};

Decoded decode(const std::filesystem::path& path, bool rgb) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw ImageIoError("cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw ImageIoError(path.string() + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ImageIoError("libpng initialisation failed");
    }
    Decoded out{};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("corrupt PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const auto colour = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (colour == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (colour == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (colour & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    const bool source_rgb = (colour & PNG_COLOR_MASK_COLOR) != 0;
    if (rgb && !source_rgb) png_set_gray_to_rgb(png);
    if (!rgb && source_rgb) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    out.h = png_get_image_height(png, info);
    out.w = png_get_image_width(png, info);
    out.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.bytes.resize(stride * out.h);
    std::vector<png_bytep> rows(out.h);
    for (std::size_t y = 0; y < out.h; ++y) rows[y] = out.bytes.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    if (out.channels != (rgb ? 3u : 1u)) throw ImageIoError("unsupported PNG layout in " + path.string());
    return out;
}

void encode(const std::filesystem::path& path, std::size_t h, std::size_t w, int colour,
            const std::vector<std::uint8_t>& bytes, std::size_t channels) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw ImageIoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ImageIoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, colour, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(bytes.data() + y * w * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage read_gray_png(const std::filesystem::path& path) {
    const auto d = decode(path, false);
    GrayImage img(d.h, d.w);
    for (std::size_t i = 0; i < img.size(); ++i) img.v[i] = d.bytes[i] / 255.0;
    return img;
}

RgbImage read_rgb_png(const std::filesystem::path& path) {
    const auto d = decode(path, true);
    RgbImage img(d.h, d.w);
    const std::size_t n = d.h * d.w;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) img.v[c * n + i] = d.bytes[i * 3 + c] / 255.0;
    return img;
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
    std::vector<std::uint8_t> bytes(img.size());
    std::transform(img.v.begin(), img.v.end(), bytes.begin(), to_byte);
    encode(path, img.h, img.w, PNG_COLOR_TYPE_GRAY, bytes, 1);
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
    const std::size_t n = img.h * img.w;
    std::vector<std::uint8_t> bytes(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) bytes[i * 3 + c] = to_byte(img.v[c * n + i]);
    encode(path, img.h, img.w, PNG_COLOR_TYPE_RGB, bytes, 3);
}

GrayImage resize_bilinear(const GrayImage& img, std::size_t h, std::size_t w) {
    if (img.h == h && img.w == w) return img;
    GrayImage out(h, w);
    kernels::serial::bilinear_forward({1, img.h, img.w}, h, w, img.v, out.v);
    return out;
}

Tensor to_tensor(const GrayImage& img) { return Tensor({1, img.h, img.w}, img.v); }
Tensor to_tensor(const RgbImage& img) { return Tensor({3, img.h, img.w}, img.v); }

GrayImage gray_from_tensor(const Tensor& t) {
    const std::size_t r = t.ndim();
    if (r < 2 || t.numel() != t.dim(r - 2) * t.dim(r - 1))
        throw ShapeError("expected a single-channel map, got " + shape_str(t.shape()));
    GrayImage img(t.dim(r - 2), t.dim(r - 1));
    std::copy(t.data().begin(), t.data().end(), img.v.begin());
    return img;
}

RgbImage rgb_from_tensor(const Tensor& t) {
    if (t.ndim() != 3 || t.dim(0) != 3) throw ShapeError("expected [3, H, W], got " + shape_str(t.shape()));
    RgbImage img(t.dim(1), t.dim(2));
    std::copy(t.data().begin(), t.data().end(), img.v.begin());
    return img;
}

}  // namespace sama
