#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "polarsdf/error.hpp"

namespace polarsdf {

/// Linear Stokes vector. s3 (circular) is carried but always zero.
///
/// Angle convention: a polarizer at angle theta transmits
/// I(theta) = (s0 + s1 cos 2theta + s2 sin 2theta) / 2, where theta = 0 is the
/// camera's +y image axis and theta grows towards +x. With this reference the
/// angle of polarization of diffusely reflected light lies along the projected
/// surface normal in exactly the form the tangent constraints expect.
struct StokesVector {
    double s0 = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    double s3 = 0.0;

    StokesVector operator+(const StokesVector& o) const { return {s0 + o.s0, s1 + o.s1, s2 + o.s2, s3 + o.s3}; }
    StokesVector operator*(double k) const { return {s0 * k, s1 * k, s2 * k, s3 * k}; }

    /// Degree of linear polarization; 0 for s0 == 0.
    double dolp() const;
    /// True if s3 == 0 and the polarized part does not exceed s0 (+eps).
    bool physical(double eps = 1e-9) const;
};

struct AnalyzerIntensities {
    double i0 = 0.0;
    double i45 = 0.0;
    double i90 = 0.0;
    double i135 = 0.0;
};

class DegeneratePolarization : public InvalidInput {
public:
    DegeneratePolarization() : InvalidInput("angle of polarization undefined for s1 == s2 == 0") {}
};

StokesVector stokes_from_intensities(double i0, double i45, double i90, double i135);
inline StokesVector stokes_from_intensities(const AnalyzerIntensities& i)
{
    return stokes_from_intensities(i.i0, i.i45, i.i90, i.i135);
}

AnalyzerIntensities intensities_from_stokes(const StokesVector& s);

/// Analyzer transmission for a polarizer at angle theta (radians).
double analyzer_intensity(const StokesVector& s, double theta);

/// Angle of polarization in [0, pi). Throws DegeneratePolarization if s1 == s2 == 0.
double aop(const StokesVector& s);

/// Wraps any angle into [0, pi).
double wrap_pi(double angle);

/// Per-pixel, per-channel Stokes image with a silhouette mask.
/// Pixel (x, y) channel c lives at ((y * width) + x) * channels + c.
struct PolarizedImage {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<StokesVector> data;
    std::vector<std::uint8_t> mask;

    PolarizedImage() = default;
    PolarizedImage(int w, int h, int c);

    StokesVector& at(int x, int y, int c) { return data[index(x, y, c)]; }
    const StokesVector& at(int x, int y, int c) const { return data[index(x, y, c)]; }
    bool masked(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }

    /// Channel sum, used for AoP extraction on colour data.
    StokesVector luminance(int x, int y) const;

    /// Checks mask size and that every masked-in pixel is finite with s3 == 0.
    void validate() const;

private:
    std::size_t index(int x, int y, int c) const
    {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
};

/// AoP per pixel in [0, pi); pixels with valid == 0 carry no angle
/// (background or degenerate polarization).
struct AoPMap {
    int width = 0;
    int height = 0;
    std::vector<double> angle;
    std::vector<std::uint8_t> valid;

    double at(int x, int y) const { return angle[static_cast<std::size_t>(y) * width + x]; }
    bool ok(int x, int y) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
};

/// Relative polarization magnitude below which a pixel counts as degenerate.
inline constexpr double kDegenerateDolp = 1e-9;

/// Computes the AoP of the channel-summed Stokes vector of every masked pixel.
AoPMap aop_map(const PolarizedImage& img, double min_dolp = kDegenerateDolp);

} // namespace polarsdf
