#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "polarsdf/difftape.hpp"
#include "polarsdf/geometry.hpp"
#include "polarsdf/polarimetry.hpp"

namespace polarsdf {

// Polarimetric BRDF terms. Every formula is a template over the scalar type
// so the forward renderer (double) and the inverse renderer (ad::Var) share
// one implementation.

template <class S>
struct FresnelReflection {
    S plus;  // (R_s + R_p) / 2
    S minus; // (R_s - R_p) / 2
};

template <class S>
struct FresnelTransmission {
    S plus;  // (T_s + T_p) / 2
    S minus; // (T_s - T_p) / 2
};

template <class S>
struct StokesT {
    S s0, s1, s2;
};

struct Material {
    std::array<double, 3> albedo{0.5, 0.5, 0.5};
    double roughness = 0.2;
    double eta = 1.5;

    void validate() const;
};

class Backfacing : public InvalidInput {
public:
    Backfacing() : InvalidInput("surface faces away from the viewer (n . v <= 0)") {}
};

namespace detail {

using std::sqrt;
using ad::sqrt;

/// Intensity reflectances (R_s, R_p) for light entering a denser medium.
template <class S>
std::array<S, 2> fresnel_sp(const S& cos_i, double eta)
{
    const S sin2_t = (1.0 - cos_i * cos_i) / (eta * eta);
    const S cos_t = sqrt(1.0 - sin2_t);
    const S rs = (cos_i - eta * cos_t) / (cos_i + eta * cos_t);
    const S rp = (eta * cos_i - cos_t) / (eta * cos_i + cos_t);
    return {rs * rs, rp * rp};
}

} // namespace detail

template <class S>
FresnelReflection<S> fresnel_reflection(const S& cos_theta, double eta)
{
    if (!(eta > 1.0)) throw InvalidInput("refractive index must exceed 1");
    const double c = ad::value_of(cos_theta);
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidInput("Fresnel cosine outside [0, 1]");
    const auto [Rs, Rp] = detail::fresnel_sp(cos_theta, eta);
    return {0.5 * (Rs + Rp), 0.5 * (Rs - Rp)};
}

/// T = 1 - R per polarization component, so T_minus = -R_minus.
template <class S>
FresnelTransmission<S> fresnel_transmission(const S& cos_theta, double eta)
{
    const FresnelReflection<S> r = fresnel_reflection(cos_theta, eta);
    return {1.0 - r.plus, -r.minus};
}

/// GGX normal distribution with alpha = roughness^2.
template <class S>
S microfacet_d(const S& n_dot_h, const S& roughness)
{
    if (!(ad::value_of(roughness) > 0.0)) throw InvalidInput("microfacet roughness must be positive");
    const S a2 = roughness * roughness * roughness * roughness;
    const S denom = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    return a2 / (std::numbers::pi * denom * denom);
}

namespace detail {

template <class S>
S smith_lambda(const S& mu, const S& a2)
{
    using std::sqrt;
    using ad::sqrt;
    const S mu2 = mu * mu;
    return 0.5 * (sqrt(1.0 + a2 * (1.0 - mu2) / mu2) - 1.0);
}

} // namespace detail

/// Height-correlated Smith masking-shadowing G2.
template <class S>
S microfacet_g(const S& n_dot_w, const S& n_dot_v, const S& roughness)
{
    if (ad::value_of(n_dot_w) <= 0.0 || ad::value_of(n_dot_v) <= 0.0) return S(0.0);
    const S a2 = roughness * roughness * roughness * roughness;
    return 1.0 / (1.0 + detail::smith_lambda(n_dot_w, a2) + detail::smith_lambda(n_dot_v, a2));
}

/// L_d [T+, T- cos 2phi, -T- sin 2phi].
template <class S>
StokesT<S> diffuse_stokes_basis(const S& radiance, const S& cos2phi, const S& sin2phi, const FresnelTransmission<S>& t)
{
    return {radiance * t.plus, radiance * t.minus * cos2phi, -(radiance * t.minus * sin2phi)};
}

/// L_s [R+, R- cos 2phi, -R- sin 2phi].
template <class S>
StokesT<S> specular_stokes_basis(const S& radiance, const S& cos2phi, const S& sin2phi, const FresnelReflection<S>& r)
{
    return {radiance * r.plus, radiance * r.minus * cos2phi, -(radiance * r.minus * sin2phi)};
}

/// (cos 2phi, sin 2phi) of the azimuth phi = atan2(b, a) without evaluating
/// the angle. A normal exactly along the view axis has no azimuth; (1, 0) is
/// returned there, where both polarization amplitudes vanish anyway.
template <class S>
std::array<S, 2> double_angle(const S& a, const S& b)
{
    const S q = a * a + b * b;
    if (ad::value_of(q) < 1e-24) return {S(1.0), S(0.0)};
    return {(a * a - b * b) / q, 2.0 * a * b / q};
}

/// Output Stokes vector of one surface point for one colour channel set.
/// `cos_nv` is n . v, `cos2phi`/`sin2phi` describe the normal azimuth in the
/// camera frame. The half vector is collapsed onto the normal, so diffuse and
/// specular share the same azimuth and Fresnel angle.
template <class S>
std::array<StokesT<S>, 3> point_stokes_terms(const S& cos_nv, const S& cos2phi, const S& sin2phi,
                                             const std::array<S, 3>& diffuse, const std::array<S, 3>& specular,
                                             double eta)
{
    const FresnelTransmission<S> t = fresnel_transmission(cos_nv, eta);
    const FresnelReflection<S> r = fresnel_reflection(cos_nv, eta);
    std::array<StokesT<S>, 3> out;
    for (int c = 0; c < 3; ++c) {
        // Both lobes share the azimuth, so add the polarized amplitudes first.
        const S pol = diffuse[c] * t.minus + specular[c] * r.minus;
        out[c] = {diffuse[c] * t.plus + specular[c] * r.plus, pol * cos2phi, -(pol * sin2phi)};
    }
    return out;
}

/// Double-precision point Stokes in the frame of `cam`. `v` points from the
/// surface towards the camera. Throws Backfacing when n . v <= 0.
std::array<StokesVector, 3> point_stokes(const Vec3& n, const Vec3& v, const std::array<double, 3>& diffuse,
                                         const std::array<double, 3>& specular, const Material& material,
                                         const Camera& cam);

StokesVector to_stokes(const StokesT<double>& s);

} // namespace polarsdf
