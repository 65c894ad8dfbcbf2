#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "polarsdf/difftape.hpp"
#include "polarsdf/fields.hpp"
#include "polarsdf/geometry.hpp"
#include "polarsdf/pbrdf.hpp"
#include "polarsdf/polarimetry.hpp"

namespace polarsdf {

// ---------------------------------------------------------------------------
// Analytic scenes (ground truth)

/// Lipschitz-1 signed distance primitives and their smooth union.
struct Shape {
    enum class Kind { sphere, torus, rounded_box, smooth_union };

    Kind kind = Kind::sphere;
    Vec3 center = Vec3::Zero();
    double radius = 0.5;           // sphere radius, torus tube radius, box corner radius
    double major = 0.0;            // torus ring radius (ring in the xy plane)
    Vec3 half_extent = Vec3::Zero(); // rounded box
    double blend = 0.0;            // smooth-union blend width k
    std::vector<Shape> children;

    static Shape sphere(const Vec3& c, double r);
    static Shape torus(const Vec3& c, double major, double minor);
    static Shape rounded_box(const Vec3& c, const Vec3& half, double r);
    static Shape smooth_union(std::vector<Shape> parts, double k);

    double eval(const Vec3& x) const;
    /// Value and analytic gradient.
    double eval(const Vec3& x, Vec3& grad) const;
};

/// Unpolarized distant illumination: SH radiance plus optional Gaussian lobes
/// a * exp(kappa (d . mu - 1)); negative totals clamp to zero.
struct Environment {
    std::array<std::array<double, 3>, kShCount> sh{};

    struct Lobe {
        Vec3 direction = Vec3::UnitZ();
        double sharpness = 10.0;
        std::array<double, 3> amplitude{1.0, 1.0, 1.0};
    };
    std::vector<Lobe> lobes;

    static Environment constant(double radiance);
    std::array<double, 3> radiance(const Vec3& d) const;
    Environment scaled(double k) const;
};

struct Scene {
    Shape shape;
    Material material;
    Environment environment;
    std::vector<Camera> cameras;
    /// Rotates the quadrature lattice; fixed per dataset.
    std::uint64_t quadrature_seed = 0;
    int quadrature_samples = 512;
    /// Set for scenes with nothing in them.
    bool empty = false;
};

struct Hit {
    double t;
    Vec3 x;
    Vec3 n;
};

/// First zero crossing inside the unit bounding sphere, |sdf(hit)| < 1e-6.
std::optional<Hit> sphere_trace(const Scene& scene, const Ray& ray);

struct ShadeResult {
    std::array<StokesVector, 3> stokes;
    std::array<double, 3> diffuse{};  // L_d
    std::array<double, 3> specular{}; // L_s
    Vec3 normal;
    Dominance dominance = Dominance::unknown;
    /// Channel-summed polarized amplitude L_d T- + L_s R- (sign picks the dominance).
    double polarized = 0.0;
};

/// Ground-truth Stokes at a hit seen from `cam`. Throws Backfacing for n . v <= 0.
ShadeResult shade_forward(const Scene& scene, const Hit& hit, const Camera& cam);

/// Diffuse and specular radiance integrals with an explicit quadrature size.
std::array<double, 3> diffuse_radiance(const Scene& scene, const Vec3& n, int samples);
std::array<double, 3> specular_radiance(const Scene& scene, const Vec3& n, const Vec3& v, int samples);

struct RenderedView {
    PolarizedImage image;
    AoPMap aop;
    /// World-space unit normals, zero outside the mask.
    std::vector<Vec3> normals;
    std::vector<Dominance> dominance;
    std::vector<double> depth;
};

RenderedView render_scene(const Scene& scene, const Camera& cam, int threads = 1);

struct OrbitOptions {
    int count = 6;
    double distance = 3.0;
    double focal = 90.0;
    int width = 64;
    int height = 64;
    /// Elevation range in radians.
    double min_elevation = -0.35;
    double max_elevation = 0.75;
    /// Stratified azimuths jitter by up to this fraction of a slot.
    double jitter = 0.35;
};

/// Cameras looking at the origin from seeded random positions on a sphere,
/// azimuths stratified so no side of the object is left unseen.
std::vector<Camera> orbit_cameras(const OrbitOptions& opt, std::uint64_t seed);

/// Environment used by the built-in scenes: soft ambient plus two broad lobes.
Environment studio_environment();

// ---------------------------------------------------------------------------
// Differentiable volume rendering of a FieldSet

/// Entry/exit distances of a ray through the unit bounding sphere.
std::optional<std::pair<double, double>> bounding_interval(const Ray& ray, double radius = 1.0);

struct SamplingOptions {
    int n_coarse = 64;
    int n_fine = 32;
};

/// Sample depths along a ray: stratified coarse samples (jittered when `rng`
/// is given, centred otherwise) plus one round of importance resampling from
/// the coarse NeuS weights. Empty if the ray misses the bounding sphere.
std::vector<double> plan_samples(const FieldSet& fs, const Ray& ray, const SamplingOptions& opt, std::mt19937_64* rng);

struct RaySampleSet {
    std::vector<double> t;
    std::vector<Vec3> x;
    std::vector<Stencil> stencil;
    std::vector<ad::Var> sdf;
    /// Per-interval opacity sigma_i, transmittance W_i and weight W_i sigma_i (size t.size() - 1).
    std::vector<ad::Var> sigma;
    std::vector<ad::Var> transmittance;
    std::vector<ad::Var> weight;
    ad::Var opacity;
};

/// NeuS opacities for fixed sample depths `t` (strictly increasing).
RaySampleSet neus_weights(ad::Tape& tape, const FieldSet& fs, const Ray& ray, std::span<const double> t);
/// Convenience: plans centred samples first.
RaySampleSet neus_weights(ad::Tape& tape, const FieldSet& fs, const Ray& ray, const SamplingOptions& opt = {});

struct VolumeOptions {
    double eta = 1.5;
    /// Samples whose weight is at or below this value are not shaded.
    double shade_min_weight = 0.0;
};

struct RenderedRay {
    std::array<StokesT<ad::Var>, 3> stokes;
    ad::Var opacity;
    RaySampleSet samples;
    int shaded = 0;
};

/// Stokes vector of one camera ray, Stokes frame of `cam`.
RenderedRay volume_render_stokes(ad::Tape& tape, const FieldSet& fs, const Ray& ray, std::span<const double> t,
                                 const Camera& cam, const VolumeOptions& opt = {});

/// Differentiable Stokes of one volume sample with normal n, viewed along `dir`.
std::array<StokesT<ad::Var>, 3> shade_sample(ad::Tape& tape, const FieldSet& fs, const Stencil& st, const VarVec3& n,
                                             const Vec3& dir, const Camera& cam, double eta);

/// Sphere tracing against the interpolated SDF plus one secant refinement.
/// Returns the ray parameter of the first crossing with |sdf| < 1e-4.
std::optional<double> ray_surface_intersection(const FieldSet& fs, const Ray& ray);

} // namespace polarsdf
