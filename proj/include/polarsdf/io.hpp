#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace polarsdf {

/// Row-major float image, row 0 at the top.
struct FloatImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;

    FloatImage() = default;
    FloatImage(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0f) {}
    float& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

/// Portable float map, little-endian, 1 ("Pf") or 3 ("PF") channels.
void write_pfm(const std::filesystem::path& path, const FloatImage& img);
FloatImage read_pfm(const std::filesystem::path& path);

/// 8-bit PNG, 1 (gray) or 3 (RGB) channels, row-major from the top.
void write_png(const std::filesystem::path& path, int width, int height, int channels, std::span<const std::uint8_t> data);
std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& path, int& width, int& height);

} // namespace polarsdf
