#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polarsdf/dataset.hpp"
#include "polarsdf/fields.hpp"

namespace polarsdf {

/// Area-weighted uniform samples on the surface of a mesh.
std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Uniform grid over triangle bounding boxes for nearest-surface queries.
class TriangleGrid {
public:
    explicit TriangleGrid(const Mesh& mesh);
    /// Distance from p to the closest point on the mesh surface.
    double distance(const Vec3& p) const;
    /// Exhaustive scan over every triangle; reference for `distance`.
    double distance_brute_force(const Vec3& p) const;

private:
    double triangle_distance(std::size_t t, const Vec3& p) const;

    const Mesh* mesh_;
    Vec3 lo_;
    double cell_ = 1.0;
    std::array<int, 3> dims_{};
    std::vector<std::uint32_t> start_;
    std::vector<std::uint32_t> items_;
};

struct ChamferResult {
    double a_to_b = 0.0;
    double b_to_a = 0.0;
    /// Mean of the two directions.
    double symmetric = 0.0;
};

/// Mean distance from `n_samples` area-weighted samples of each mesh to the
/// other surface, both directions. Deterministic per seed for any thread count.
ChamferResult chamfer(const Mesh& a, const Mesh& b, std::size_t n_samples = 100000, std::uint64_t seed = 0,
                      int threads = 1);

struct NormalError {
    int view = 0;
    double mae_deg = 0.0;
    /// Masked pixels with a ground-truth normal, and those where the estimate was hit.
    int masked = 0;
    int used = 0;
};

/// Mean angle between the estimated SDF normal at the first ray hit and the
/// ground-truth normal map, over masked pixels the estimate also hits.
NormalError normal_mae(const FieldSet& fs, const View& view, int view_index = 0, int threads = 1);

struct EvalReport {
    ChamferResult chamfer;
    std::size_t samples = 0;
    std::vector<NormalError> normals;
    /// Notes such as views skipped for lack of ground-truth normals.
    std::vector<std::string> notices;

    double mean_normal_mae() const;
    /// Distances are reported in scene units x 1e3, angles in degrees.
    std::string json() const;
    std::string table() const;
};

/// GT mesh Chamfer plus, when `fs` and `data` are given, per-view normal MAE.
EvalReport evaluate(const Mesh& estimate, const Mesh& ground_truth, const FieldSet* fs, const Dataset* data,
                    std::size_t n_samples = 100000, std::uint64_t seed = 0, int threads = 1);

} // namespace polarsdf
