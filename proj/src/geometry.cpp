#include "polarsdf/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace polarsdf {

Camera::Camera(const Mat3& K, const Mat3& R, const Vec3& t, int width, int height)
    : K_(K), R_(R), t_(t), width_(width), height_(height)
{
    if (width <= 0 || height <= 0) throw InvalidInput("camera image size must be positive");
    if (!R.allFinite() || !K.allFinite() || !t.allFinite()) throw InvalidInput("camera parameters must be finite");
    if ((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-8 || std::abs(R.determinant() - 1.0) > 1e-8) {
        throw InvalidInput("camera rotation must be orthonormal with determinant +1");
    }
    if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0 || K(0, 0) <= 0.0 || K(1, 1) <= 0.0) {
        throw InvalidInput("camera intrinsics must be upper triangular with positive focal lengths");
    }
    Kinv_ = K.inverse();
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height)
{
    const Vec3 z = (target - eye).normalized();
    Vec3 x = (-up).cross(z);
    if (x.norm() < 1e-12) throw InvalidInput("look_at: up vector parallel to viewing direction");
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 R;
    R.row(0) = x.transpose();
    R.row(1) = y.transpose();
    R.row(2) = z.transpose();
    Mat3 K = Mat3::Identity();
    K(0, 0) = focal;
    K(1, 1) = focal;
    K(0, 2) = 0.5 * width;
    K(1, 2) = 0.5 * height;
    return Camera(K, R, -R * eye, width, height);
}

Camera::Projection Camera::project(const Vec3& x) const
{
    const Vec3 xc = R_ * x + t_;
    if (!(xc.z() > 0.0)) throw BehindCamera();
    const Vec3 p = K_ * (xc / xc.z());
    return {p.head<2>(), xc.z()};
}

Vec3 Camera::backproject(const Vec2& pixel, double depth) const
{
    const Vec3 xc = depth * (Kinv_ * Vec3(pixel.x(), pixel.y(), 1.0));
    return R_.transpose() * (xc - t_);
}

Ray Camera::ray(const Vec2& pixel) const
{
    const Vec3 dc = Kinv_ * Vec3(pixel.x(), pixel.y(), 1.0);
    return {center(), (R_.transpose() * dc).normalized()};
}

double normal_azimuth(const Camera& cam, const Vec3& n)
{
    return std::atan2(cam.r2().dot(n), cam.r1().dot(n));
}

TangentPair tangent_pair(const Camera& cam, double phi)
{
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    return {c * cam.r1() - s * cam.r2(), s * cam.r1() + c * cam.r2()};
}

Eigen::MatrixX3d TangentSystem::matrix() const
{
    std::size_t n = 0;
    for (const auto& r : rows) n += r.t_alt ? 2 : 1;
    Eigen::MatrixX3d m(static_cast<Eigen::Index>(n), 3);
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        m.row(i++) = r.t_vec.transpose();
        if (r.t_alt) m.row(i++) = r.t_alt->transpose();
    }
    return m;
}

double TangentSystem::residual_sq(const Vec3& n) const
{
    double sum = 0.0;
    for (const auto& r : rows) {
        const double a = n.dot(r.t_vec);
        double e = a * a;
        if (r.t_alt) {
            const double b = n.dot(*r.t_alt);
            e = std::min(e, b * b);
        }
        sum += e;
    }
    return sum;
}

TangentSystem build_tangent_system(const Vec3& x, const std::vector<Observation>& observations)
{
    if (observations.empty()) throw InvalidInput("tangent system needs at least one observation");
    TangentSystem sys;
    sys.point = x;
    sys.rows.reserve(observations.size());
    for (const auto& ob : observations) {
        if (ob.camera == nullptr) throw InvalidInput("observation without camera");
        const TangentPair tp = tangent_pair(*ob.camera, ob.aop);
        TangentRow row;
        row.view = ob.view;
        switch (ob.dominance) {
        case Dominance::diffuse: row.t_vec = tp.t_vec; break;
        case Dominance::specular: row.t_vec = tp.t_hat; break;
        case Dominance::unknown:
            row.t_vec = tp.t_vec;
            row.t_alt = tp.t_hat;
            break;
        }
        sys.rows.push_back(std::move(row));
    }
    return sys;
}

namespace {

// Deterministic sign: positive first nonzero component.
Vec3 canonical_sign(Vec3 v)
{
    for (int i = 0; i < 3; ++i) {
        if (v[i] != 0.0) return v[i] < 0.0 ? Vec3(-v) : v;
    }
    return v;
}

bool lex_less(const Vec3& a, const Vec3& b)
{
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
}

} // namespace

NormalEstimate nullspace_normal(const TangentSystem& sys, const Vec3& viewer, double rank_tol)
{
    Eigen::MatrixX3d m = sys.matrix();
    if (m.rows() < 3) {
        Eigen::MatrixX3d padded = Eigen::MatrixX3d::Zero(3, 3);
        padded.topRows(m.rows()) = m;
        m = padded;
    }
    const Eigen::JacobiSVD<Eigen::MatrixX3d> svd(m, Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    const Mat3 V = svd.matrixV();
    const double scale = std::max(sv[0], 1e-300);
    if (sv[1] <= rank_tol * scale) {
        throw AmbiguousNormal(V.col(1).normalized(), V.col(2).normalized());
    }
    Vec3 n = V.col(2).normalized();
    // Equal smallest singular values: take the lexicographically smallest candidate.
    if (std::abs(sv[1] - sv[2]) <= 1e-15 * scale) {
        const Vec3 a = canonical_sign(V.col(1).normalized());
        const Vec3 b = canonical_sign(V.col(2).normalized());
        n = lex_less(a, b) ? a : b;
    }
    const double facing = n.dot(viewer - sys.point);
    if (facing < 0.0) n = -n;
    else if (facing == 0.0) n = canonical_sign(n);
    return {n, sv[2]};
}

} // namespace polarsdf
