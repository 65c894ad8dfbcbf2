#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "polarsdf/error.hpp"

namespace polarsdf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Ray {
    Vec3 origin;
    Vec3 dir; // unit
    Vec3 at(double t) const { return origin + t * dir; }
};

class BehindCamera : public InvalidInput {
public:
    BehindCamera() : InvalidInput("point projects behind the camera") {}
};

/// Pinhole camera, world -> camera is x_c = R x + t. Rows of R are the camera
/// axes r1 (image +x), r2 (image +y, pointing down), r3 (viewing direction).
/// Pixel (i, j) covers [i, i+1) x [j, j+1); its centre is (i + 0.5, j + 0.5).
class Camera {
public:
    Camera() = default;
    Camera(const Mat3& K, const Mat3& R, const Vec3& t, int width, int height);

    /// Camera at `eye` looking at `target`, with `up` defining the image -y direction.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height);

    const Mat3& K() const { return K_; }
    const Mat3& R() const { return R_; }
    const Vec3& t() const { return t_; }
    int width() const { return width_; }
    int height() const { return height_; }

    Vec3 r1() const { return R_.row(0).transpose(); }
    Vec3 r2() const { return R_.row(1).transpose(); }
    Vec3 r3() const { return R_.row(2).transpose(); }
    Vec3 center() const { return -R_.transpose() * t_; }

    struct Projection {
        Vec2 pixel;
        double depth;
    };

    /// Throws BehindCamera if the camera-frame depth is not positive.
    Projection project(const Vec3& x) const;
    /// World point at continuous pixel coordinate `pixel` and camera depth `depth`.
    Vec3 backproject(const Vec2& pixel, double depth) const;
    /// Unit world-space ray through a continuous pixel coordinate.
    Ray ray(const Vec2& pixel) const;
    Ray pixel_ray(int i, int j) const { return ray(Vec2(i + 0.5, j + 0.5)); }

    bool inside(const Vec2& pixel) const
    {
        return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width_ && pixel.y() < height_;
    }

private:
    Mat3 K_ = Mat3::Identity();
    Mat3 R_ = Mat3::Identity();
    Vec3 t_ = Vec3::Zero();
    Mat3 Kinv_ = Mat3::Identity();
    int width_ = 1;
    int height_ = 1;
};

/// Azimuth of the projected normal in the camera image plane, measured from +x towards +y.
double normal_azimuth(const Camera& cam, const Vec3& n);

/// t_vec = cos(phi) r1 - sin(phi) r2 is orthogonal to n when phi is a diffuse
/// AoP; t_hat = sin(phi) r1 + cos(phi) r2 is the specular (pi/2-shifted) variant.
struct TangentPair {
    Vec3 t_vec;
    Vec3 t_hat;
};

TangentPair tangent_pair(const Camera& cam, double phi);

enum class Dominance { diffuse, specular, unknown };

struct TangentRow {
    Vec3 t_vec;
    /// Set only for unknown dominance: the loss takes min over both rows.
    std::optional<Vec3> t_alt;
    int view = -1;
};

struct TangentSystem {
    Vec3 point = Vec3::Zero();
    std::vector<TangentRow> rows;

    /// Rows flattened for linear algebra; unknown-dominance observations contribute both rows.
    Eigen::MatrixX3d matrix() const;
    /// Sum over rows of squared residuals, min-selecting the two branches of unknown rows.
    double residual_sq(const Vec3& n) const;
};

struct Observation {
    const Camera* camera = nullptr;
    double aop = 0.0;
    Dominance dominance = Dominance::unknown;
    int view = -1;
};

TangentSystem build_tangent_system(const Vec3& x, const std::vector<Observation>& observations);

class AmbiguousNormal : public InvalidInput {
public:
    AmbiguousNormal(Vec3 a, Vec3 b)
        : InvalidInput("tangent system has fewer than two independent rows"), basis{std::move(a), std::move(b)}
    {
    }
    /// Orthonormal basis of the 2D null space.
    std::array<Vec3, 2> basis;
};

struct NormalEstimate {
    Vec3 normal;
    double residual; // smallest singular value
};

/// Null-space direction of the stacked tangent rows, oriented towards `viewer`
/// (usually the first observing camera centre).
NormalEstimate nullspace_normal(const TangentSystem& sys, const Vec3& viewer, double rank_tol = 1e-9);

} // namespace polarsdf
