#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "sama/tensor.hpp"

namespace sama {

/// Single-channel map with values nominally in [0, 1], row-major.
struct GrayImage {
    std::size_t h = 0, w = 0;
    std::vector<double> v;

    GrayImage() = default;
    GrayImage(std::size_t height, std::size_t width, double fill = 0.0) : h(height), w(width), v(height * width, fill) {}

    double& at(std::size_t y, std::size_t x) { return v[y * w + x]; }
    double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
    std::size_t size() const { return v.size(); }
};

/// Three planes (R, G, B) stored channel-major.
struct RgbImage {
    std::size_t h = 0, w = 0;
    std::vector<double> v;

    RgbImage() = default;
    RgbImage(std::size_t height, std::size_t width) : h(height), w(width), v(3 * height * width, 0.0) {}
};

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 8-bit PNG I/O. Stored value = round(255 * clamp(v, 0, 1)); loaded value = byte / 255.
// Reading converts any colour type (palette, alpha, 16 bit) to the requested layout.
GrayImage read_gray_png(const std::filesystem::path& path);
RgbImage read_rgb_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const RgbImage& img);

std::uint8_t to_byte(double v);

// Align-corners=false bilinear resampling.
GrayImage resize_bilinear(const GrayImage& img, std::size_t h, std::size_t w);

// Conversions to and from [C, H, W] tensors.
Tensor to_tensor(const GrayImage& img);
Tensor to_tensor(const RgbImage& img);
GrayImage gray_from_tensor(const Tensor& t);  // [1, H, W] or [H, W]
RgbImage rgb_from_tensor(const Tensor& t);    // [3, H, W]

}  // namespace sama
