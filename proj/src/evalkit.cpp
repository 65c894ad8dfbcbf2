#include "polarsdf/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

#include "polarsdf/parallel.hpp"
#include "polarsdf/render.hpp"

namespace polarsdf {

std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed)
{
    if (mesh.empty()) throw InvalidInput("cannot sample an empty mesh");
    mesh.validate();
    std::vector<double> cdf(mesh.triangles.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        const auto& v = mesh.vertices;
        acc += 0.5 * (v[t[1]] - v[t[0]]).cross(v[t[2]] - v[t[0]]).norm();
        cdf[i] = acc;
    }
    if (!(acc > 0.0)) throw InvalidInput("mesh has zero area");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = u(rng) * acc;
        const std::size_t i = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), x) - cdf.begin(), cdf.size() - 1);
        const auto& t = mesh.triangles[i];
        const double r1 = std::sqrt(u(rng)), r2 = u(rng);
        out.push_back((1.0 - r1) * mesh.vertices[t[0]] + r1 * (1.0 - r2) * mesh.vertices[t[1]] + r1 * r2 * mesh.vertices[t[2]]);
    }
    return out;
}

namespace {

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double l2 = ab.squaredNorm();
    const double t = l2 > 0.0 ? std::clamp((p - a).dot(ab) / l2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

} // namespace

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    // Closest point by Voronoi region of the triangle.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return ap.norm();
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return bp.norm();
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return point_segment_distance(p, a, b);
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return cp.norm();
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return point_segment_distance(p, a, c);
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0) return point_segment_distance(p, b, c);
    const double sum = va + vb + vc;
    if (!(sum > 0.0)) {
        return std::min({point_segment_distance(p, a, b), point_segment_distance(p, a, c), point_segment_distance(p, b, c)});
    }
    const double v = vb / sum, w = vc / sum;
    return (p - (a + v * ab + w * ac)).norm();
}

TriangleGrid::TriangleGrid(const Mesh& mesh) : mesh_(&mesh)
{
    if (mesh.empty()) throw InvalidInput("cannot index an empty mesh");
    mesh.validate();
    Vec3 lo = mesh.vertices[mesh.triangles[0][0]], hi = lo;
    for (const auto& t : mesh.triangles)
        for (auto i : t) {
            lo = lo.cwiseMin(mesh.vertices[i]);
            hi = hi.cwiseMax(mesh.vertices[i]);
        }
    const Vec3 extent = hi - lo;
    const double ntri = static_cast<double>(mesh.triangles.size());
    cell_ = std::max({2.0 * std::sqrt(mesh.area() / ntri), extent.maxCoeff() / 256.0, 1e-9});
    lo_ = lo;
    for (int a = 0; a < 3; ++a) dims_[a] = std::max(1, static_cast<int>(std::floor(extent[a] / cell_)) + 1);

    const std::size_t ncell = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    auto range = [&](const std::array<std::int32_t, 3>& t, std::array<int, 3>& c0, std::array<int, 3>& c1) {
        for (int a = 0; a < 3; ++a) {
            const double mn = std::min({mesh.vertices[t[0]][a], mesh.vertices[t[1]][a], mesh.vertices[t[2]][a]});
            const double mx = std::max({mesh.vertices[t[0]][a], mesh.vertices[t[1]][a], mesh.vertices[t[2]][a]});
            c0[a] = std::clamp(static_cast<int>(std::floor((mn - lo_[a]) / cell_)), 0, dims_[a] - 1);
            c1[a] = std::clamp(static_cast<int>(std::floor((mx - lo_[a]) / cell_)), 0, dims_[a] - 1);
        }
    };
    std::vector<std::uint32_t> count(ncell + 1, 0);
    std::array<int, 3> c0{}, c1{};
    for (const auto& t : mesh.triangles) {
        range(t, c0, c1);
        for (int z = c0[2]; z <= c1[2]; ++z)
            for (int y = c0[1]; y <= c1[1]; ++y)
                for (int x = c0[0]; x <= c1[0]; ++x) ++count[(static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x + 1];
    }
    for (std::size_t i = 1; i <= ncell; ++i) count[i] += count[i - 1];
    start_ = count;
    items_.resize(count[ncell]);
    for (std::size_t ti = 0; ti < mesh.triangles.size(); ++ti) {
        range(mesh.triangles[ti], c0, c1);
        for (int z = c0[2]; z <= c1[2]; ++z)
            for (int y = c0[1]; y <= c1[1]; ++y)
                for (int x = c0[0]; x <= c1[0]; ++x) {
                    items_[count[(static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x]++] = static_cast<std::uint32_t>(ti);
                }
    }
}

double TriangleGrid::triangle_distance(std::size_t t, const Vec3& p) const
{
    const auto& tri = mesh_->triangles[t];
    const auto& v = mesh_->vertices;
    return point_triangle_distance(p, v[tri[0]], v[tri[1]], v[tri[2]]);
}

double TriangleGrid::distance_brute_force(const Vec3& p) const
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < mesh_->triangles.size(); ++t) best = std::min(best, triangle_distance(t, p));
    return best;
}

double TriangleGrid::distance(const Vec3& p) const
{
    std::array<int, 3> c{};
    int kmax = 0;
    for (int a = 0; a < 3; ++a) {
        c[a] = static_cast<int>(std::floor((p[a] - lo_[a]) / cell_));
        kmax = std::max({kmax, c[a], dims_[a] - 1 - c[a]});
    }
    double best = std::numeric_limits<double>::infinity();
    auto visit = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x >= dims_[0] || y >= dims_[1] || z >= dims_[2]) return;
        const std::size_t cell = (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
        for (std::uint32_t i = start_[cell]; i < start_[cell + 1]; ++i) best = std::min(best, triangle_distance(items_[i], p));
    };
    for (int k = 0; k <= kmax; ++k) {
        for (int dz = -k; dz <= k; ++dz)
            for (int dy = -k; dy <= k; ++dy) {
                if (std::abs(dz) == k || std::abs(dy) == k) {
                    for (int dx = -k; dx <= k; ++dx) visit(c[0] + dx, c[1] + dy, c[2] + dz);
                } else {
                    visit(c[0] - k, c[1] + dy, c[2] + dz);
                    if (k > 0) visit(c[0] + k, c[1] + dy, c[2] + dz);
                }
            }
        // Cells beyond ring k are at least k cells away from p.
        if (best <= k * cell_) break;
    }
    return best;
}

namespace {

double mean_distance(const std::vector<Vec3>& pts, const TriangleGrid& grid, int threads)
{
    std::vector<double> d(pts.size());
    parallel_for(pts.size(), thread_count(threads), [&](std::size_t i) { d[i] = grid.distance(pts[i]); });
    double sum = 0.0;
    for (double v : d) sum += v;
    return sum / static_cast<double>(d.size());
}

} // namespace

ChamferResult chamfer(const Mesh& a, const Mesh& b, std::size_t n_samples, std::uint64_t seed, int threads)
{
    if (a.empty() || b.empty()) throw InvalidInput("chamfer needs two non-empty meshes");
    if (n_samples == 0) throw InvalidInput("chamfer needs at least one sample");
    const TriangleGrid ga(a), gb(b);
    ChamferResult r;
    r.a_to_b = mean_distance(sample_surface(a, n_samples, seed), gb, threads);
    r.b_to_a = mean_distance(sample_surface(b, n_samples, seed ^ 0x9e3779b97f4a7c15ULL), ga, threads);
    r.symmetric = 0.5 * (r.a_to_b + r.b_to_a);
    return r;
}

NormalError normal_mae(const FieldSet& fs, const View& view, int view_index, int threads)
{
    const int w = view.image.width, h = view.image.height;
    if (view.normals.size() != static_cast<std::size_t>(w) * h) throw InvalidInput("view has no ground-truth normal map");
    struct Row {
        double sum = 0.0;
        int masked = 0, used = 0;
    };
    std::vector<Row> rows(static_cast<std::size_t>(h));
    parallel_for(rows.size(), thread_count(threads), [&](std::size_t yi) {
        const int y = static_cast<int>(yi);
        Row& r = rows[yi];
        for (int x = 0; x < w; ++x) {
            const Vec3& gt = view.normals[static_cast<std::size_t>(y) * w + x];
            if (!view.image.masked(x, y) || gt.norm() < 0.5) continue;
            ++r.masked;
            const Ray ray = view.camera.pixel_ray(x, y);
            const auto t = ray_surface_intersection(fs, ray);
            if (!t) continue;
            const Vec3 g = fs.sdf_gradient(ray.at(*t));
            if (!(g.norm() > 1e-8)) continue;
            r.sum += std::acos(std::clamp(g.normalized().dot(gt.normalized()), -1.0, 1.0));
            ++r.used;
        }
    });
    NormalError e;
    e.view = view_index;
    double sum = 0.0;
    for (const auto& r : rows) {
        sum += r.sum;
        e.masked += r.masked;
        e.used += r.used;
    }
    e.mae_deg = e.used ? sum / e.used * 180.0 / std::numbers::pi : 0.0;
    return e;
}

double EvalReport::mean_normal_mae() const
{
    double sum = 0.0;
    int n = 0;
    for (const auto& e : normals) {
        sum += e.mae_deg * e.used;
        n += e.used;
    }
    return n ? sum / n : 0.0;
}

std::string EvalReport::json() const
{
    nlohmann::json views = nlohmann::json::array();
    for (const auto& e : normals) {
        views.push_back({{"view", e.view}, {"mae_deg", e.mae_deg}, {"masked_pixels", e.masked}, {"hit_pixels", e.used}});
    }
    nlohmann::json j = {{"chamfer_x1e3",
                         {{"a_to_b", chamfer.a_to_b * 1e3},
                          {"b_to_a", chamfer.b_to_a * 1e3},
                          {"symmetric", chamfer.symmetric * 1e3},
                          {"samples_per_mesh", samples}}},
                        {"normal_mae_deg", {{"mean", mean_normal_mae()}, {"views", views}}},
                        {"notices", notices}};
    return j.dump(2);
}

std::string EvalReport::table() const
{
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "Chamfer (scene units x 1e3)\n  est->gt %10.4f\n  gt->est %10.4f\n  mean    %10.4f\n",
                  chamfer.a_to_b * 1e3, chamfer.b_to_a * 1e3, chamfer.symmetric * 1e3);
    out << line;
    if (!normals.empty()) {
        out << "Normal MAE (degrees)\n  view      MAE   masked      hit\n";
        for (const auto& e : normals) {
            std::snprintf(line, sizeof line, "  %4d %8.3f %8d %8d\n", e.view, e.mae_deg, e.masked, e.used);
            out << line;
        }
        std::snprintf(line, sizeof line, "  mean %8.3f\n", mean_normal_mae());
        out << line;
    }
    for (const auto& n : notices) out << "note: " << n << '\n';
    return out.str();
}

EvalReport evaluate(const Mesh& estimate, const Mesh& ground_truth, const FieldSet* fs, const Dataset* data,
                    std::size_t n_samples, std::uint64_t seed, int threads)
{
    EvalReport r;
    r.samples = n_samples;
    r.chamfer = chamfer(estimate, ground_truth, n_samples, seed, threads);
    if (fs && data) {
        for (std::size_t i = 0; i < data->views.size(); ++i) {
            if (data->views[i].normals.empty()) {
                r.notices.push_back("view " + std::to_string(i) + " has no ground-truth normals; MAE skipped");
                continue;
            }
            r.normals.push_back(normal_mae(*fs, data->views[i], static_cast<int>(i), threads));
        }
    } else if (data && !fs) {
        r.notices.push_back("no field checkpoint given; normal MAE skipped");
    }
    return r;
}

} // namespace polarsdf
