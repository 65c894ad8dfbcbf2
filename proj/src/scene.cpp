#include <algorithm>
#include <cmath>
#include <numbers>

#include "polarsdf/parallel.hpp"
#include "polarsdf/render.hpp"

namespace polarsdf {

namespace {

constexpr double kGolden = 0.6180339887498949;

double frac(double x) { return x - std::floor(x); }

double seed_offset(std::uint64_t seed)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
}

/// Orthonormal tangent frame around a unit vector (Duff et al.).
void frame(const Vec3& n, Vec3& t, Vec3& b)
{
    const double sign = std::copysign(1.0, n.z());
    const double a = -1.0 / (sign + n.z());
    const double c = n.x() * n.y() * a;
    t = Vec3(1.0 + sign * n.x() * n.x() * a, sign * c, -sign * n.x());
    b = Vec3(c, sign + n.y() * n.y() * a, -n.y());
}

double smooth_union(double a, double b, const Vec3& ga, const Vec3& gb, double k, Vec3& g)
{
    if (k <= 0.0) {
        g = a < b ? ga : gb;
        return std::min(a, b);
    }
    const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
    // d/dh of the blend vanishes identically, so the gradient is the plain mix.
    g = h * ga + (1.0 - h) * gb;
    return h * a + (1.0 - h) * b - k * h * (1.0 - h);
}

} // namespace

Shape Shape::sphere(const Vec3& c, double r)
{
    if (!(r > 0.0)) throw InvalidInput("sphere radius must be positive");
    Shape s;
    s.kind = Kind::sphere;
    s.center = c;
    s.radius = r;
    return s;
}

Shape Shape::torus(const Vec3& c, double major, double minor)
{
    if (!(minor > 0.0) || !(major > minor)) throw InvalidInput("torus needs major > minor > 0");
    Shape s;
    s.kind = Kind::torus;
    s.center = c;
    s.major = major;
    s.radius = minor;
    return s;
}

Shape Shape::rounded_box(const Vec3& c, const Vec3& half, double r)
{
    if (!(r >= 0.0) || !(half.minCoeff() > r)) throw InvalidInput("rounded box needs half extents > corner radius >= 0");
    Shape s;
    s.kind = Kind::rounded_box;
    s.center = c;
    s.half_extent = half;
    s.radius = r;
    return s;
}

Shape Shape::smooth_union(std::vector<Shape> parts, double k)
{
    if (parts.empty()) throw InvalidInput("smooth union needs at least one child");
    if (!(k >= 0.0)) throw InvalidInput("smooth union blend must be non-negative");
    Shape s;
    s.kind = Kind::smooth_union;
    s.blend = k;
    s.children = std::move(parts);
    return s;
}

double Shape::eval(const Vec3& x) const
{
    Vec3 g;
    return eval(x, g);
}

double Shape::eval(const Vec3& x, Vec3& grad) const
{
    const Vec3 p = x - center;
    switch (kind) {
    case Kind::sphere: {
        const double r = p.norm();
        grad = r > 0.0 ? Vec3(p / r) : Vec3::UnitZ();
        return r - radius;
    }
    case Kind::torus: {
        const double rho = std::hypot(p.x(), p.y());
        const double q0 = rho - major;
        const double qn = std::hypot(q0, p.z());
        if (qn == 0.0) {
            grad = Vec3::UnitZ();
        } else {
            const double cx = rho > 0.0 ? p.x() / rho : 1.0;
            const double cy = rho > 0.0 ? p.y() / rho : 0.0;
            grad = Vec3(q0 / qn * cx, q0 / qn * cy, p.z() / qn);
        }
        return qn - radius;
    }
    case Kind::rounded_box: {
        const Vec3 q = p.cwiseAbs() - (half_extent - Vec3::Constant(radius));
        const Vec3 outside = q.cwiseMax(0.0);
        const double on = outside.norm();
        Eigen::Index ax = 0;
        const double qmax = q.maxCoeff(&ax);
        if (on > 0.0) {
            grad = outside / on;
        } else {
            grad = Vec3::Zero();
            grad[ax] = 1.0;
        }
        for (int i = 0; i < 3; ++i) grad[i] *= p[i] < 0.0 ? -1.0 : 1.0;
        return on + std::min(qmax, 0.0) - radius;
    }
    case Kind::smooth_union: {
        double d = children[0].eval(x, grad);
        for (std::size_t i = 1; i < children.size(); ++i) {
            Vec3 gb;
            const double b = children[i].eval(x, gb);
            Vec3 g;
            d = polarsdf::smooth_union(d, b, grad, gb, blend, g);
            grad = g;
        }
        return d;
    }
    }
    return 0.0;
}

Environment Environment::constant(double radiance)
{
    Environment e;
    const double c00 = radiance * 2.0 * std::sqrt(std::numbers::pi);
    e.sh[0] = {c00, c00, c00};
    return e;
}

std::array<double, 3> Environment::radiance(const Vec3& d) const
{
    const auto y = sh_basis(d);
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (int k = 0; k < kShCount; ++k) {
        for (int c = 0; c < 3; ++c) out[c] += sh[k][c] * y[k];
    }
    for (const auto& lobe : lobes) {
        const double w = std::exp(lobe.sharpness * (d.dot(lobe.direction) - 1.0));
        for (int c = 0; c < 3; ++c) out[c] += lobe.amplitude[c] * w;
    }
    for (double& v : out) v = std::max(v, 0.0);
    return out;
}

Environment Environment::scaled(double k) const
{
    Environment e = *this;
    for (auto& row : e.sh)
        for (double& v : row) v *= k;
    for (auto& lobe : e.lobes)
        for (double& v : lobe.amplitude) v *= k;
    return e;
}

std::optional<std::pair<double, double>> bounding_interval(const Ray& ray, double radius)
{
    const double b = ray.origin.dot(ray.dir);
    const double c = ray.origin.squaredNorm() - radius * radius;
    const double disc = b * b - c;
    if (disc <= 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t0 = std::max(-b - s, 0.0);
    const double t1 = -b + s;
    if (t1 <= t0) return std::nullopt;
    return std::make_pair(t0, t1);
}

std::optional<Hit> sphere_trace(const Scene& scene, const Ray& ray)
{
    if (scene.empty) return std::nullopt;
    const auto range = bounding_interval(ray);
    if (!range) return std::nullopt;
    double t = range->first;
    for (int it = 0; it < 512 && t <= range->second; ++it) {
        Vec3 g;
        const Vec3 x = ray.at(t);
        const double d = scene.shape.eval(x, g);
        if (std::abs(d) < 1e-7) {
            const double gn = g.norm();
            if (gn == 0.0) return std::nullopt;
            return Hit{t, x, g / gn};
        }
        t += d;
    }
    return std::nullopt;
}

std::array<double, 3> diffuse_radiance(const Scene& scene, const Vec3& n, int samples)
{
    Vec3 tx, ty;
    frame(n, tx, ty);
    const double off = seed_offset(scene.quadrature_seed);
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    for (int i = 0; i < samples; ++i) {
        const double z = 1.0 - (i + 0.5) / samples;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = 2.0 * std::numbers::pi * frac(i * kGolden + off);
        const Vec3 w = r * std::cos(phi) * tx + r * std::sin(phi) * ty + z * n;
        const double t = fresnel_transmission(z, scene.material.eta).plus;
        const auto L = scene.environment.radiance(w);
        for (int c = 0; c < 3; ++c) sum[c] += L[c] * z * t;
    }
    // rho / pi * sum * (2 pi / N)
    std::array<double, 3> out;
    for (int c = 0; c < 3; ++c) out[c] = 2.0 * scene.material.albedo[c] * sum[c] / samples;
    return out;
}

std::array<double, 3> specular_radiance(const Scene& scene, const Vec3& n, const Vec3& v, int samples)
{
    Vec3 tx, ty;
    frame(n, tx, ty);
    const double rough = scene.material.roughness;
    const double a2 = std::pow(rough, 4);
    const double nv = n.dot(v);
    const double off = seed_offset(scene.quadrature_seed ^ 0x5bd1e995ull);
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    for (int i = 0; i < samples; ++i) {
        const double u = (i + 0.5) / samples;
        const double cos2 = (1.0 - u) / (1.0 + (a2 - 1.0) * u);
        const double ct = std::sqrt(cos2);
        const double st = std::sqrt(std::max(0.0, 1.0 - cos2));
        const double phi = 2.0 * std::numbers::pi * frac(i * kGolden + off);
        const Vec3 h = st * std::cos(phi) * tx + st * std::sin(phi) * ty + ct * n;
        const double vh = v.dot(h);
        if (vh <= 0.0) continue;
        const Vec3 w = 2.0 * vh * h - v;
        const double nw = n.dot(w);
        if (nw <= 0.0) continue;
        const double g = microfacet_g(nw, nv, rough);
        const auto L = scene.environment.radiance(w);
        const double k = g * vh / (nv * ct);
        for (int c = 0; c < 3; ++c) sum[c] += L[c] * k;
    }
    for (double& s : sum) s /= samples;
    return sum;
}

ShadeResult shade_forward(const Scene& scene, const Hit& hit, const Camera& cam)
{
    const Vec3 v = (cam.center() - hit.x).normalized();
    const double nv = hit.n.dot(v);
    if (!(nv > 0.0)) throw Backfacing();
    ShadeResult out;
    out.normal = hit.n;
    out.diffuse = diffuse_radiance(scene, hit.n, scene.quadrature_samples);
    out.specular = specular_radiance(scene, hit.n, v, scene.quadrature_samples);
    out.stokes = point_stokes(hit.n, v, out.diffuse, out.specular, scene.material, cam);

    const double c = std::min(nv, 1.0);
    const auto r = fresnel_reflection(c, scene.material.eta);
    const auto t = fresnel_transmission(c, scene.material.eta);
    double s0 = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        out.polarized += out.diffuse[ch] * t.minus + out.specular[ch] * r.minus;
        s0 += out.stokes[ch].s0;
    }
    if (std::abs(out.polarized) <= kDegenerateDolp * s0) out.dominance = Dominance::unknown;
    else out.dominance = out.polarized > 0.0 ? Dominance::specular : Dominance::diffuse;
    return out;
}

RenderedView render_scene(const Scene& scene, const Camera& cam, int threads)
{
    const int w = cam.width(), h = cam.height();
    RenderedView out;
    out.image = PolarizedImage(w, h, 3);
    const std::size_t np = static_cast<std::size_t>(w) * h;
    out.normals.assign(np, Vec3::Zero());
    out.dominance.assign(np, Dominance::unknown);
    out.depth.assign(np, 0.0);

    parallel_for(static_cast<std::size_t>(h), threads, [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            const auto hit = sphere_trace(scene, cam.pixel_ray(x, y));
            if (!hit) continue;
            ShadeResult s;
            try {
                s = shade_forward(scene, *hit, cam);
            } catch (const Backfacing&) {
                continue; // grazing silhouette sample
            }
            out.image.mask[p] = 1;
            for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = s.stokes[c];
            out.normals[p] = s.normal;
            out.dominance[p] = s.dominance;
            out.depth[p] = hit->t;
        }
    });
    out.aop = aop_map(out.image);
    return out;
}

} // namespace polarsdf

namespace polarsdf {

std::vector<Camera> orbit_cameras(const OrbitOptions& opt, std::uint64_t seed)
{
    if (opt.count < 1) throw InvalidInput("camera count must be positive");
    if (!(opt.distance > 1.0)) throw InvalidInput("cameras must sit outside the unit bounding sphere");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double slot = 2.0 * std::numbers::pi / opt.count;
    const double phase = slot * u(rng);
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(opt.count));
    for (int i = 0; i < opt.count; ++i) {
        const double az = phase + slot * (i + opt.jitter * (2.0 * u(rng) - 1.0));
        const double el = opt.min_elevation + (opt.max_elevation - opt.min_elevation) * u(rng);
        const Vec3 eye(opt.distance * std::cos(el) * std::cos(az), opt.distance * std::cos(el) * std::sin(az),
                       opt.distance * std::sin(el));
        cams.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), opt.focal, opt.width, opt.height));
    }
    return cams;
}

Environment studio_environment()
{
    Environment e = Environment::constant(0.35);
    e.lobes.push_back({Vec3(0.4, -0.3, 0.87).normalized(), 3.0, {1.1, 1.0, 0.9}});
    e.lobes.push_back({Vec3(-0.6, 0.5, 0.2).normalized(), 2.0, {0.4, 0.5, 0.7}});
    return e;
}

} // namespace polarsdf
