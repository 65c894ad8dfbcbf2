#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "polarsdf/difftape.hpp"
#include "polarsdf/geometry.hpp"

namespace polarsdf {

using VarVec3 = std::array<ad::Var, 3>;

inline constexpr int kShDegree = 4;
inline constexpr int kShCount = (kShDegree + 1) * (kShDegree + 1);

/// Real orthonormal spherical harmonics up to degree 4 evaluated on a unit
/// direction, index l*l + l + m.
std::array<double, kShCount> sh_basis(const Vec3& d);
/// Basis values plus their derivatives with respect to the direction components.
void sh_basis_grad(const Vec3& d, std::array<double, kShCount>& y, std::array<Vec3, kShCount>& dy);
inline constexpr int sh_band(int k)
{
    int l = 0;
    while ((l + 1) * (l + 1) <= k) ++l;
    return l;
}

/// Trilinear stencil of one query point in an N^3 node grid over [-1, 1]^3.
struct Stencil {
    std::array<std::int32_t, 8> node;
    std::array<double, 8> w;
    /// d w / d x, d w / d y, d w / d z for each corner.
    std::array<std::array<double, 8>, 3> dw;
};

class EmptySurface : public InvalidInput {
public:
    EmptySurface() : InvalidInput("SDF grid has a single sign; no surface to extract") {}
};

class DegenerateNormal : public NumericalFailure {
public:
    DegenerateNormal() : NumericalFailure("SDF gradient vanishes; normal undefined") {}
};

/// Differentiable scene representation: dense SDF, diffuse radiance and
/// roughness grids, a degree-4 SH environment and the NeuS sharpness.
///
/// All parameters live in one flat vector so optimizer state and gradients
/// are plain arrays. Layout (N = resolution, V = N^3):
///   [0, V)            SDF values at grid nodes
///   [V, 4V)           diffuse radiance, node-major, RGB interleaved
///   [4V, 5V)          raw roughness (sigmoid-mapped)
///   [5V, 5V + 75)     environment SH, coefficient-major, RGB interleaved
///   5V + 75           log of the NeuS sharpness s
class FieldSet {
public:
    static constexpr double kRoughEps = 1e-3;

    FieldSet() : FieldSet(64) {}
    explicit FieldSet(int resolution);

    int resolution() const { return n_; }
    /// Distance between neighbouring grid nodes.
    double spacing() const { return h_; }
    std::size_t node_count() const { return static_cast<std::size_t>(n_) * n_ * n_; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    std::int32_t sdf_offset() const { return 0; }
    std::int32_t diffuse_offset() const { return static_cast<std::int32_t>(node_count()); }
    std::int32_t rough_offset() const { return static_cast<std::int32_t>(4 * node_count()); }
    std::int32_t env_offset() const { return static_cast<std::int32_t>(5 * node_count()); }
    std::int32_t log_s_offset() const { return env_offset() + 3 * kShCount; }

    enum class Block { sdf, diffuse, rough, env, sharpness };
    static const char* block_name(Block b);
    Block block_of(std::size_t param) const;
    std::pair<std::size_t, std::size_t> block_range(Block b) const;

    std::int32_t node_index(int i, int j, int k) const { return (k * n_ + j) * n_ + i; }
    Vec3 node_position(int i, int j, int k) const { return Vec3(-1.0 + i * h_, -1.0 + j * h_, -1.0 + k * h_); }

    double s_sharp() const;
    void set_s_sharp(double s);
    double& env(int k, int c) { return params_[env_offset() + 3 * k + c]; }
    double env(int k, int c) const { return params_[env_offset() + 3 * k + c]; }

    /// Sets the SDF to |x| - radius, diffuse and roughness to constants and
    /// the environment to a constant radiance.
    void init_sphere(double radius = 0.5, double diffuse = 0.3, double roughness = 0.3, double env_radiance = 1.0,
                     double s_sharp = 16.0);
    /// Fills the SDF grid from any callable point -> distance.
    template <class F>
    void fill_sdf(F&& f)
    {
        for (int k = 0; k < n_; ++k)
            for (int j = 0; j < n_; ++j)
                for (int i = 0; i < n_; ++i) params_[node_index(i, j, k)] = f(node_position(i, j, k));
    }
    void fill_diffuse(const std::array<double, 3>& rgb);
    /// Trilinear resampling of every grid onto a new resolution; environment
    /// and sharpness are copied.
    FieldSet resampled(int resolution) const;
    void fill_rough(double roughness);
    static double rough_to_raw(double roughness);
    static double raw_to_rough(double raw);

    // Coordinates outside [-1, 1]^3 are clamped onto the boundary (constant
    // value extension); gradients keep the boundary cell's slope.
    Stencil stencil(const Vec3& x) const;

    double sdf(const Vec3& x) const;
    Vec3 sdf_gradient(const Vec3& x) const;
    std::array<double, 3> diffuse(const Vec3& x) const;
    double rough(const Vec3& x) const;
    std::array<double, 3> env_radiance(const Vec3& d, double roughness) const;

    // Differentiable samples recorded on `tape`.
    ad::Var sample_sdf(ad::Tape& tape, const Stencil& st) const;
    VarVec3 sdf_gradient(ad::Tape& tape, const Stencil& st) const;
    /// Throws DegenerateNormal when the gradient norm is below 1e-8.
    VarVec3 sdf_normal(ad::Tape& tape, const Stencil& st) const;
    std::array<ad::Var, 3> sample_diffuse(ad::Tape& tape, const Stencil& st) const;
    ad::Var sample_rough(ad::Tape& tape, const Stencil& st) const;
    ad::Var log_s(ad::Tape& tape) const;
    /// sum_lm c_lm Y_lm(d) exp(-l(l+1) r^2) per channel, unclamped.
    std::array<ad::Var, 3> eval_env(ad::Tape& tape, const VarVec3& d, const ad::Var& roughness) const;

    ad::Var sample_sdf(ad::Tape& tape, const Vec3& x) const { return sample_sdf(tape, stencil(x)); }
    VarVec3 sdf_normal(ad::Tape& tape, const Vec3& x) const { return sdf_normal(tape, stencil(x)); }

private:
    int n_;
    double h_;
    std::vector<double> params_;
};

/// Triangle mesh in world units.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::int32_t, 3>> triangles;
    std::vector<Vec3> normals;

    bool empty() const { return triangles.empty(); }
    /// Throws InvalidInput on out-of-range indices or non-finite vertices.
    void validate() const;
    double area() const;
};

/// Iso-surface of the SDF grid (vertices interpolated linearly along edges,
/// shared across cells, normals from the SDF gradient, outward winding).
Mesh marching_cubes(const FieldSet& fs, double iso = 0.0);

void write_obj(const Mesh& mesh, const std::filesystem::path& path);
Mesh read_obj(const std::filesystem::path& path);

/// Checkpoint: 8-byte little-endian header length, JSON header, raw f64 data.
void save_checkpoint(const FieldSet& fs, const std::filesystem::path& path);
FieldSet load_checkpoint(const std::filesystem::path& path);

// Small Var vector helpers used by the renderers and losses.
ad::Var dot(const VarVec3& a, const VarVec3& b);
ad::Var dot(const VarVec3& a, const Vec3& b);
VarVec3 normalize(const VarVec3& a);
VarVec3 constant(const Vec3& v);

} // namespace polarsdf
