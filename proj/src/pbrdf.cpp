#include "polarsdf/pbrdf.hpp"

namespace polarsdf {

void Material::validate() const
{
    for (double a : albedo) {
        if (!(a >= 0.0 && a <= 1.0)) throw InvalidInput("albedo must lie in [0, 1]");
    }
    if (!(roughness > 0.0 && roughness <= 1.0)) throw InvalidInput("roughness must lie in (0, 1]");
    if (!(eta > 1.0)) throw InvalidInput("refractive index must exceed 1");
}

StokesVector to_stokes(const StokesT<double>& s) { return {s.s0, s.s1, s.s2, 0.0}; }

std::array<StokesVector, 3> point_stokes(const Vec3& n, const Vec3& v, const std::array<double, 3>& diffuse,
                                         const std::array<double, 3>& specular, const Material& material,
                                         const Camera& cam)
{
    const double cos_nv = n.dot(v);
    if (!(cos_nv > 0.0)) throw Backfacing();
    for (int c = 0; c < 3; ++c) {
        if (diffuse[c] < 0.0 || specular[c] < 0.0) throw InvalidInput("radiance must be non-negative");
    }
    const auto [c2, s2] = double_angle(cam.r1().dot(n), cam.r2().dot(n));
    const auto terms = point_stokes_terms(std::min(cos_nv, 1.0), c2, s2, diffuse, specular, material.eta);
    return {to_stokes(terms[0]), to_stokes(terms[1]), to_stokes(terms[2])};
}

} // namespace polarsdf
