#include "polarsdf/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <png.h>

#include "polarsdf/error.hpp"

namespace polarsdf {

namespace {

static_assert(std::endian::native == std::endian::little, "PFM and checkpoint writers assume a little-endian host");

std::string path_str(const std::filesystem::path& p) { return p.string(); }

} // namespace

void write_pfm(const std::filesystem::path& path, const FloatImage& img)
{
    if (img.channels != 1 && img.channels != 3) throw InvalidInput("PFM supports 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path_str(path));
    out << (img.channels == 3 ? "PF" : "Pf") << '\n' << img.width << ' ' << img.height << "\n-1.0\n";
    const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
    // PFM stores rows bottom to top.
    for (int y = img.height - 1; y >= 0; --y) {
        out.write(reinterpret_cast<const char*>(img.data.data() + y * row), static_cast<std::streamsize>(row * sizeof(float)));
    }
    if (!out) throw InvalidInput("failed writing " + path_str(path));
}

FloatImage read_pfm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path_str(path));
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    in.get();
    if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale == 0.0) throw InvalidInput("malformed PFM header in " + path_str(path));
    if (scale > 0.0) throw InvalidInput("big-endian PFM not supported: " + path_str(path));
    FloatImage img(w, h, magic == "PF" ? 3 : 1);
    const std::size_t row = static_cast<std::size_t>(w) * img.channels;
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(img.data.data() + y * row), static_cast<std::streamsize>(row * sizeof(float)));
    }
    if (!in) throw InvalidInput("truncated PFM " + path_str(path));
    return img;
}

void write_png(const std::filesystem::path& path, int width, int height, int channels, std::span<const std::uint8_t> data)
{
    if (channels != 1 && channels != 3) throw InvalidInput("PNG writer supports 1 or 3 channels");
    if (data.size() != static_cast<std::size_t>(width) * height * channels) throw InvalidInput("PNG buffer size mismatch");
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path_str(path).c_str(), "wb"), &std::fclose);
    if (!fp) throw InvalidInput("cannot write " + path_str(path));
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw InvalidInput("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InvalidInput("libpng failed writing " + path_str(path));
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * width * channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& path, int& width, int& height)
{
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path_str(path).c_str(), "rb"), &std::fclose);
    if (!fp) throw InvalidInput("cannot open " + path_str(path));
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InvalidInput("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InvalidInput("libpng failed reading " + path_str(path));
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) != 8 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InvalidInput("expected an 8-bit grayscale PNG: " + path_str(path));
    }
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) png_read_row(png, data.data() + static_cast<std::size_t>(y) * width, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return data;
}

} // namespace polarsdf
