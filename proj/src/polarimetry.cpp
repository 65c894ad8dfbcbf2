#include "polarsdf/polarimetry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace polarsdf {

double StokesVector::dolp() const
{
    if (s0 <= 0.0) return 0.0;
    return std::hypot(s1, s2) / s0;
}

bool StokesVector::physical(double eps) const
{
    return s3 == 0.0 && std::hypot(s1, s2) <= s0 + eps;
}

StokesVector stokes_from_intensities(double i0, double i45, double i90, double i135)
{
    for (double v : {i0, i45, i90, i135}) {
        if (!std::isfinite(v) || v < 0.0) {
            std::ostringstream msg;
            msg << "analyzer intensities must be finite and non-negative, got (" << i0 << ", " << i45
                << ", " << i90 << ", " << i135 << ")";
            throw InvalidInput(msg.str());
        }
    }
    return {0.5 * (i0 + i45 + i90 + i135), i0 - i90, i45 - i135, 0.0};
}

AnalyzerIntensities intensities_from_stokes(const StokesVector& s)
{
    // I_theta = (s0 + s1 cos 2theta + s2 sin 2theta) / 2 at 0, 45, 90, 135 degrees.
    return {0.5 * (s.s0 + s.s1), 0.5 * (s.s0 + s.s2), 0.5 * (s.s0 - s.s1), 0.5 * (s.s0 - s.s2)};
}

double analyzer_intensity(const StokesVector& s, double theta)
{
    return 0.5 * (s.s0 + s.s1 * std::cos(2.0 * theta) + s.s2 * std::sin(2.0 * theta));
}

double wrap_pi(double angle)
{
    constexpr double pi = std::numbers::pi;
    double a = std::fmod(angle, pi);
    if (a < 0.0) a += pi;
    // fmod can land exactly on pi after the shift for tiny negative inputs.
    if (a >= pi) a = 0.0;
    return a;
}

double aop(const StokesVector& s)
{
    if (s.s1 == 0.0 && s.s2 == 0.0) throw DegeneratePolarization();
    return wrap_pi(0.5 * std::atan2(s.s2, s.s1));
}

PolarizedImage::PolarizedImage(int w, int h, int c)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c),
      mask(static_cast<std::size_t>(w) * h, 0)
{
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) throw InvalidInput("polarized image needs positive size and 1 or 3 channels");
}

StokesVector PolarizedImage::luminance(int x, int y) const
{
    StokesVector sum;
    for (int c = 0; c < channels; ++c) sum = sum + at(x, y, c);
    return sum;
}

void PolarizedImage::validate() const
{
    if (mask.size() != static_cast<std::size_t>(width) * height) throw InvalidInput("mask size does not match image size");
    if (data.size() != static_cast<std::size_t>(width) * height * channels) throw InvalidInput("Stokes buffer size does not match image size");
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const auto& s = at(x, y, c);
                if (s.s3 != 0.0) throw InvalidInput("nonzero circular Stokes component s3");
                if (masked(x, y) && !(std::isfinite(s.s0) && std::isfinite(s.s1) && std::isfinite(s.s2))) {
                    throw InvalidInput("non-finite Stokes value inside the mask");
                }
            }
        }
    }
}

AoPMap aop_map(const PolarizedImage& img, double min_dolp)
{
    AoPMap out;
    out.width = img.width;
    out.height = img.height;
    out.angle.assign(static_cast<std::size_t>(img.width) * img.height, 0.0);
    out.valid.assign(out.angle.size(), 0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!img.masked(x, y)) continue;
            const StokesVector s = img.luminance(x, y);
            if (!(s.s0 > 0.0) || std::hypot(s.s1, s.s2) <= min_dolp * s.s0) continue;
            const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
            out.angle[i] = aop(s);
            out.valid[i] = 1;
        }
    }
    return out;
}

} // namespace polarsdf
