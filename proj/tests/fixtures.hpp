#pragma once

#include <random>

#include <Eigen/Dense>

#include "polarsdf/dataset.hpp"
#include "polarsdf/optim.hpp"
#include "polarsdf/render.hpp"

namespace fixtures {

using namespace polarsdf;

inline Scene sphere_scene(double radius = 0.5, double roughness = 0.2)
{
    Scene s;
    s.shape = Shape::sphere(Vec3::Zero(), radius);
    s.material.roughness = roughness;
    s.environment = studio_environment();
    s.cameras = orbit_cameras({}, 42);
    return s;
}

/// Torus with a small blended bump on its outer equator at azimuth 180
/// degrees, where only two of the six orbit cameras see its apex.
inline Scene bump_scene()
{
    Scene s = sphere_scene();
    const Vec3 dir(-1.0, 0.0, 0.0);
    s.shape = Shape::smooth_union({Shape::torus(Vec3::Zero(), 0.5, 0.2), Shape::sphere(0.7 * dir, 0.1)}, 0.04);
    return s;
}

/// Two views, 2x2 pixels, a 4^3 grid with every parameter class perturbed.
struct Micro {
    Dataset data;
    FieldSet fields{4};
    TrainConfig cfg;
    LossWeights weights;
    LossPlan plan;
};

inline Micro micro_fixture(std::uint64_t seed = 7)
{
    Micro m;
    Scene scene = sphere_scene(0.5, 0.3);
    scene.quadrature_samples = 64;
    scene.cameras = {Camera::look_at(Vec3(3.0, 0.0, 0.6), Vec3(0.0, 0.12, 0.1), Vec3(0, 0, 1), 30.0, 2, 2),
                     Camera::look_at(Vec3(0.4, 3.0, -0.4), Vec3(0.2, 0.0, 0.15), Vec3(0, 0, 1), 30.0, 2, 2)};
    m.data = render_dataset(scene);
    // One background pixel so the mask loss sees both labels.
    m.data.views[1].image.mask[3] = 0;
    m.data.views[1].aop = aop_map(m.data.views[1].image);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FieldSet& fs = m.fields;
    fs.init_sphere(0.55, 0.3, 0.3, 1.0, 6.0);
    auto& p = fs.params();
    for (std::int32_t i = fs.sdf_offset(); i < fs.diffuse_offset(); ++i) p[i] += 0.05 * u(rng);
    for (std::int32_t i = fs.diffuse_offset(); i < fs.rough_offset(); ++i) p[i] += 0.1 * u(rng);
    for (std::int32_t i = fs.rough_offset(); i < fs.env_offset(); ++i) p[i] += 0.3 * u(rng);
    for (std::int32_t i = fs.env_offset(); i < fs.log_s_offset(); ++i) p[i] += 0.05 * u(rng);

    m.cfg.rays_per_batch = 4;
    m.cfg.background_fraction = 0.25;
    m.cfg.geometric_points = 6;
    m.cfg.eikonal_points = 8;
    m.cfg.n_coarse = 16;
    m.cfg.n_fine = 8;
    m.cfg.shade_min_weight = 0.0;
    m.cfg.threads = 1;
    m.plan = sample_plan(fs, m.data, m.cfg, rng);
    return m;
}

/// Least-squares SH coefficients so that the field's environment lookup
/// reproduces the forward renderer's specular radiance seen by the cameras.
inline void fit_environment(const Scene& scene, FieldSet& fs, int samples = 256)
{
    std::vector<std::array<double, kShCount>> rows;
    std::vector<std::array<double, 3>> targets;
    const double r = scene.material.roughness;
    for (const auto& cam : scene.cameras) {
        for (int y = 0; y < cam.height(); y += 2)
            for (int x = 0; x < cam.width(); x += 2) {
                const Ray ray = cam.pixel_ray(x, y);
                const auto hit = sphere_trace(scene, ray);
                if (!hit) continue;
                const Vec3 v = -ray.dir;
                if (hit->n.dot(v) <= 0.05) continue;
                const Vec3 refl = ray.dir - 2.0 * hit->n.dot(ray.dir) * hit->n;
                const auto y_k = sh_basis(refl);
                std::array<double, kShCount> row{};
                for (int k = 0; k < kShCount; ++k) {
                    const int l = sh_band(k);
                    row[k] = y_k[k] * std::exp(-l * (l + 1) * r * r);
                }
                rows.push_back(row);
                targets.push_back(specular_radiance(scene, hit->n, v, samples));
            }
    }
    Eigen::MatrixXd A(rows.size(), kShCount);
    Eigen::MatrixXd b(rows.size(), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int k = 0; k < kShCount; ++k) A(i, k) = rows[i][k];
        for (int c = 0; c < 3; ++c) b(i, c) = targets[i][c];
    }
    const Eigen::MatrixXd coef = A.colPivHouseholderQr().solve(b);
    for (int k = 0; k < kShCount; ++k)
        for (int c = 0; c < 3; ++c) fs.env(k, c) = coef(k, c);
}

/// Fields matching a scene: exact SDF, pre-integrated diffuse radiance, the
/// material roughness and a fitted environment.
inline FieldSet ground_truth_fields(const Scene& scene, int resolution, double s_sharp)
{
    FieldSet fs(resolution);
    fs.init_sphere(0.5, 0.3, scene.material.roughness, 1.0, s_sharp);
    fs.fill_sdf([&](const Vec3& p) { return scene.shape.eval(p); });
    auto& p = fs.params();
    for (int k = 0; k < resolution; ++k)
        for (int j = 0; j < resolution; ++j)
            for (int i = 0; i < resolution; ++i) {
                Vec3 g;
                const Vec3 x = fs.node_position(i, j, k);
                if (std::abs(scene.shape.eval(x, g)) > 4.0 * fs.spacing()) continue;
                const Vec3 n = g.norm() > 0 ? Vec3(g.normalized()) : Vec3(0, 0, 1);
                const auto ld = diffuse_radiance(scene, n, 128);
                const std::size_t node = static_cast<std::size_t>(fs.node_index(i, j, k));
                for (int c = 0; c < 3; ++c) p[fs.diffuse_offset() + 3 * node + c] = ld[c];
            }
    fit_environment(scene, fs);
    return fs;
}

} // namespace fixtures
