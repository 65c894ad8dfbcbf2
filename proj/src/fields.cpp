#include "polarsdf/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace polarsdf {

namespace {

// Forward-mode value + gradient over (x, y, z); enough algebra for the SH
// polynomials.
struct Dual3 {
    double v = 0.0;
    Vec3 d = Vec3::Zero();
};

Dual3 operator-(const Dual3& a, const Dual3& b) { return {a.v - b.v, a.d - b.d}; }
Dual3 operator*(const Dual3& a, const Dual3& b) { return {a.v * b.v, a.v * b.d + b.v * a.d}; }
Dual3 operator*(double k, const Dual3& a) { return {k * a.v, k * a.d}; }
Dual3 operator-(const Dual3& a, double k) { return {a.v - k, a.d}; }
Dual3 operator+(const Dual3& a, double k) { return {a.v + k, a.d}; }

template <class T>
void sh_eval(const T& x, const T& y, const T& z, std::array<T, kShCount>& out)
{
    constexpr double pi = std::numbers::pi;
    const T xx = x * x, yy = y * y, zz = z * z;
    const T xy = x * y, yz = y * z, xz = x * z;

    out[0] = 0.0 * x + 0.5 * std::sqrt(1.0 / pi);

    const double c1 = std::sqrt(3.0 / (4.0 * pi));
    out[1] = c1 * y;
    out[2] = c1 * z;
    out[3] = c1 * x;

    const double c2a = 0.5 * std::sqrt(15.0 / pi);
    const double c2b = 0.25 * std::sqrt(5.0 / pi);
    const double c2c = 0.25 * std::sqrt(15.0 / pi);
    out[4] = c2a * xy;
    out[5] = c2a * yz;
    out[6] = c2b * (3.0 * zz - 1.0);
    out[7] = c2a * xz;
    out[8] = c2c * (xx - yy);

    const double c3a = 0.25 * std::sqrt(35.0 / (2.0 * pi));
    const double c3b = 0.5 * std::sqrt(105.0 / pi);
    const double c3c = 0.25 * std::sqrt(21.0 / (2.0 * pi));
    const double c3d = 0.25 * std::sqrt(7.0 / pi);
    const double c3e = 0.25 * std::sqrt(105.0 / pi);
    out[9] = c3a * (y * (3.0 * xx - yy));
    out[10] = c3b * (xy * z);
    out[11] = c3c * (y * (5.0 * zz - 1.0));
    out[12] = c3d * (z * (5.0 * zz - 3.0));
    out[13] = c3c * (x * (5.0 * zz - 1.0));
    out[14] = c3e * (z * (xx - yy));
    out[15] = c3a * (x * (xx - 3.0 * yy));

    const double c4a = 0.75 * std::sqrt(35.0 / pi);
    const double c4b = 0.75 * std::sqrt(35.0 / (2.0 * pi));
    const double c4c = 0.75 * std::sqrt(5.0 / pi);
    const double c4d = 0.75 * std::sqrt(5.0 / (2.0 * pi));
    const double c4e = (3.0 / 16.0) * std::sqrt(1.0 / pi);
    const double c4f = (3.0 / 8.0) * std::sqrt(5.0 / pi);
    const double c4g = (3.0 / 16.0) * std::sqrt(35.0 / pi);
    out[16] = c4a * (xy * (xx - yy));
    out[17] = c4b * (yz * (3.0 * xx - yy));
    out[18] = c4c * (xy * (7.0 * zz - 1.0));
    out[19] = c4d * (yz * (7.0 * zz - 3.0));
    out[20] = c4e * ((35.0 * (zz * zz)) - 30.0 * zz + 3.0);
    out[21] = c4d * (xz * (7.0 * zz - 3.0));
    out[22] = c4f * ((xx - yy) * (7.0 * zz - 1.0));
    out[23] = c4b * (xz * (xx - 3.0 * yy));
    out[24] = c4g * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

} // namespace

std::array<double, kShCount> sh_basis(const Vec3& d)
{
    std::array<double, kShCount> out{};
    sh_eval(d.x(), d.y(), d.z(), out);
    return out;
}

void sh_basis_grad(const Vec3& d, std::array<double, kShCount>& y, std::array<Vec3, kShCount>& dy)
{
    const Dual3 x{d.x(), Vec3::UnitX()};
    const Dual3 yv{d.y(), Vec3::UnitY()};
    const Dual3 z{d.z(), Vec3::UnitZ()};
    std::array<Dual3, kShCount> out;
    sh_eval(x, yv, z, out);
    for (int k = 0; k < kShCount; ++k) {
        y[k] = out[k].v;
        dy[k] = out[k].d;
    }
}

FieldSet::FieldSet(int resolution) : n_(resolution), h_(0.0)
{
    if (resolution < 2) throw InvalidInput("field grid resolution must be at least 2");
    h_ = 2.0 / (resolution - 1);
    params_.assign(5 * node_count() + 3 * kShCount + 1, 0.0);
    init_sphere();
}

const char* FieldSet::block_name(Block b)
{
    switch (b) {
    case Block::sdf: return "sdf";
    case Block::diffuse: return "diffuse";
    case Block::rough: return "rough";
    case Block::env: return "env_sh";
    case Block::sharpness: return "log_s";
    }
    return "?";
}

FieldSet::Block FieldSet::block_of(std::size_t p) const
{
    if (p < static_cast<std::size_t>(diffuse_offset())) return Block::sdf;
    if (p < static_cast<std::size_t>(rough_offset())) return Block::diffuse;
    if (p < static_cast<std::size_t>(env_offset())) return Block::rough;
    if (p < static_cast<std::size_t>(log_s_offset())) return Block::env;
    return Block::sharpness;
}

std::pair<std::size_t, std::size_t> FieldSet::block_range(Block b) const
{
    switch (b) {
    case Block::sdf: return {0, diffuse_offset()};
    case Block::diffuse: return {diffuse_offset(), rough_offset()};
    case Block::rough: return {rough_offset(), env_offset()};
    case Block::env: return {env_offset(), log_s_offset()};
    case Block::sharpness: return {log_s_offset(), log_s_offset() + 1};
    }
    return {0, 0};
}

double FieldSet::s_sharp() const { return std::exp(params_[log_s_offset()]); }

void FieldSet::set_s_sharp(double s)
{
    if (!(s > 0.0)) throw InvalidInput("NeuS sharpness must be positive");
    params_[log_s_offset()] = std::log(s);
}

double FieldSet::rough_to_raw(double roughness)
{
    const double p = (roughness - kRoughEps) / (1.0 - kRoughEps);
    if (!(p > 0.0 && p < 1.0)) throw InvalidInput("roughness must lie in (1e-3, 1)");
    return std::log(p / (1.0 - p));
}

double FieldSet::raw_to_rough(double raw) { return kRoughEps + (1.0 - kRoughEps) / (1.0 + std::exp(-raw)); }

void FieldSet::fill_diffuse(const std::array<double, 3>& rgb)
{
    for (std::size_t i = 0; i < node_count(); ++i)
        for (int c = 0; c < 3; ++c) params_[diffuse_offset() + 3 * i + c] = rgb[c];
}

void FieldSet::fill_rough(double roughness)
{
    const double raw = rough_to_raw(roughness);
    std::fill(params_.begin() + rough_offset(), params_.begin() + env_offset(), raw);
}

void FieldSet::init_sphere(double radius, double diffuse, double roughness, double env_radiance, double s_sharp)
{
    fill_sdf([radius](const Vec3& p) { return p.norm() - radius; });
    fill_diffuse({diffuse, diffuse, diffuse});
    fill_rough(roughness);
    std::fill(params_.begin() + env_offset(), params_.begin() + log_s_offset(), 0.0);
    // Y_00 = 1 / (2 sqrt(pi)).
    for (int c = 0; c < 3; ++c) env(0, c) = env_radiance * 2.0 * std::sqrt(std::numbers::pi);
    set_s_sharp(s_sharp);
}

FieldSet FieldSet::resampled(int resolution) const
{
    FieldSet out(resolution);
    const std::size_t v_in = node_count(), v_out = out.node_count();
    auto& q = out.params_;
    for (int k = 0; k < resolution; ++k)
        for (int j = 0; j < resolution; ++j)
            for (int i = 0; i < resolution; ++i) {
                const std::size_t o = static_cast<std::size_t>(out.node_index(i, j, k));
                const Stencil st = stencil(out.node_position(i, j, k));
                double sdf = 0.0, rough = 0.0;
                std::array<double, 3> rgb{};
                for (int c = 0; c < 8; ++c) {
                    const std::size_t n = static_cast<std::size_t>(st.node[c]);
                    sdf += st.w[c] * params_[n];
                    for (int ch = 0; ch < 3; ++ch) rgb[ch] += st.w[c] * params_[v_in + 3 * n + ch];
                    rough += st.w[c] * params_[4 * v_in + n];
                }
                q[o] = sdf;
                for (int ch = 0; ch < 3; ++ch) q[v_out + 3 * o + ch] = rgb[ch];
                q[4 * v_out + o] = rough;
            }
    std::copy(params_.begin() + env_offset(), params_.end(), q.begin() + out.env_offset());
    return out;
}

Stencil FieldSet::stencil(const Vec3& x) const
{
    std::array<int, 3> i0{};
    std::array<double, 3> f{};
    for (int a = 0; a < 3; ++a) {
        const double u = (std::clamp(x[a], -1.0, 1.0) + 1.0) / h_;
        int i = static_cast<int>(std::floor(u));
        i = std::clamp(i, 0, n_ - 2);
        i0[a] = i;
        f[a] = u - i;
    }
    Stencil st{};
    const double inv_h = 1.0 / h_;
    for (int c = 0; c < 8; ++c) {
        const int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
        const double wx = bx ? f[0] : 1.0 - f[0];
        const double wy = by ? f[1] : 1.0 - f[1];
        const double wz = bz ? f[2] : 1.0 - f[2];
        const double sx = (bx ? 1.0 : -1.0) * inv_h;
        const double sy = (by ? 1.0 : -1.0) * inv_h;
        const double sz = (bz ? 1.0 : -1.0) * inv_h;
        st.node[c] = node_index(i0[0] + bx, i0[1] + by, i0[2] + bz);
        st.w[c] = wx * wy * wz;
        st.dw[0][c] = sx * wy * wz;
        st.dw[1][c] = wx * sy * wz;
        st.dw[2][c] = wx * wy * sz;
    }
    return st;
}

double FieldSet::sdf(const Vec3& x) const
{
    const Stencil st = stencil(x);
    double v = 0.0;
    for (int c = 0; c < 8; ++c) v += st.w[c] * params_[st.node[c]];
    return v;
}

Vec3 FieldSet::sdf_gradient(const Vec3& x) const
{
    const Stencil st = stencil(x);
    Vec3 g = Vec3::Zero();
    for (int c = 0; c < 8; ++c)
        for (int a = 0; a < 3; ++a) g[a] += st.dw[a][c] * params_[st.node[c]];
    return g;
}

std::array<double, 3> FieldSet::diffuse(const Vec3& x) const
{
    const Stencil st = stencil(x);
    std::array<double, 3> out{};
    for (int c = 0; c < 8; ++c)
        for (int ch = 0; ch < 3; ++ch) out[ch] += st.w[c] * params_[diffuse_offset() + 3 * st.node[c] + ch];
    return out;
}

double FieldSet::rough(const Vec3& x) const
{
    const Stencil st = stencil(x);
    double raw = 0.0;
    for (int c = 0; c < 8; ++c) raw += st.w[c] * params_[rough_offset() + st.node[c]];
    return raw_to_rough(raw);
}

std::array<double, 3> FieldSet::env_radiance(const Vec3& d, double roughness) const
{
    const auto y = sh_basis(d);
    std::array<double, 3> out{};
    for (int k = 0; k < kShCount; ++k) {
        const int l = sh_band(k);
        const double att = std::exp(-l * (l + 1) * roughness * roughness);
        for (int c = 0; c < 3; ++c) out[c] += env(k, c) * y[k] * att;
    }
    return out;
}

ad::Var FieldSet::sample_sdf(ad::Tape& tape, const Stencil& st) const
{
    double v = 0.0;
    for (int c = 0; c < 8; ++c) v += st.w[c] * params_[st.node[c]];
    return tape.linear(st.node, st.w, v);
}

VarVec3 FieldSet::sdf_gradient(ad::Tape& tape, const Stencil& st) const
{
    VarVec3 g;
    for (int a = 0; a < 3; ++a) {
        double v = 0.0;
        for (int c = 0; c < 8; ++c) v += st.dw[a][c] * params_[st.node[c]];
        g[a] = tape.linear(st.node, st.dw[a], v);
    }
    return g;
}

VarVec3 FieldSet::sdf_normal(ad::Tape& tape, const Stencil& st) const
{
    const VarVec3 g = sdf_gradient(tape, st);
    const double n2 = g[0].value() * g[0].value() + g[1].value() * g[1].value() + g[2].value() * g[2].value();
    if (!(std::sqrt(n2) > 1e-8)) throw DegenerateNormal();
    return normalize(g);
}

std::array<ad::Var, 3> FieldSet::sample_diffuse(ad::Tape& tape, const Stencil& st) const
{
    std::array<ad::Var, 3> out;
    std::array<std::int32_t, 8> ids{};
    for (int ch = 0; ch < 3; ++ch) {
        double v = 0.0;
        for (int c = 0; c < 8; ++c) {
            ids[c] = diffuse_offset() + 3 * st.node[c] + ch;
            v += st.w[c] * params_[ids[c]];
        }
        out[ch] = tape.linear(ids, st.w, v);
    }
    return out;
}

ad::Var FieldSet::sample_rough(ad::Tape& tape, const Stencil& st) const
{
    std::array<std::int32_t, 8> ids{};
    double v = 0.0;
    for (int c = 0; c < 8; ++c) {
        ids[c] = rough_offset() + st.node[c];
        v += st.w[c] * params_[ids[c]];
    }
    const ad::Var raw = tape.linear(ids, st.w, v);
    return kRoughEps + (1.0 - kRoughEps) * ad::sigmoid(raw);
}

ad::Var FieldSet::log_s(ad::Tape& tape) const { return tape.param(log_s_offset(), params_[log_s_offset()]); }

std::array<ad::Var, 3> FieldSet::eval_env(ad::Tape& tape, const VarVec3& d, const ad::Var& roughness) const
{
    const Vec3 dv(d[0].value(), d[1].value(), d[2].value());
    std::array<double, kShCount> y{};
    std::array<Vec3, kShCount> dy{};
    sh_basis_grad(dv, y, dy);
    const double r = roughness.value();
    std::array<double, kShCount> att{};
    std::array<double, kShCount> datt{};
    for (int k = 0; k < kShCount; ++k) {
        const int l = sh_band(k);
        att[k] = std::exp(-l * (l + 1) * r * r);
        datt[k] = -2.0 * l * (l + 1) * r * att[k];
    }

    std::array<ad::Var, 3> out;
    std::vector<ad::Ref> parents;
    std::vector<double> partials;
    parents.reserve(kShCount + 4);
    partials.reserve(kShCount + 4);
    for (int ch = 0; ch < 3; ++ch) {
        parents.clear();
        partials.clear();
        double v = 0.0;
        Vec3 dv_dd = Vec3::Zero();
        double dv_dr = 0.0;
        for (int k = 0; k < kShCount; ++k) {
            const double c = env(k, ch);
            v += c * y[k] * att[k];
            dv_dd += c * att[k] * dy[k];
            dv_dr += c * y[k] * datt[k];
            parents.push_back(ad::Ref::param(env_offset() + 3 * k + ch));
            partials.push_back(y[k] * att[k]);
        }
        for (int a = 0; a < 3; ++a) {
            if (d[a].is_constant()) continue;
            parents.push_back(d[a].ref());
            partials.push_back(dv_dd[a]);
        }
        if (!roughness.is_constant()) {
            parents.push_back(roughness.ref());
            partials.push_back(dv_dr);
        }
        out[ch] = tape.node(v, parents, partials);
    }
    return out;
}

ad::Var dot(const VarVec3& a, const VarVec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
ad::Var dot(const VarVec3& a, const Vec3& b) { return a[0] * b.x() + a[1] * b.y() + a[2] * b.z(); }

VarVec3 normalize(const VarVec3& a)
{
    const ad::Var len = ad::sqrt(dot(a, a));
    return {a[0] / len, a[1] / len, a[2] / len};
}

VarVec3 constant(const Vec3& v) { return {ad::Var(v.x()), ad::Var(v.y()), ad::Var(v.z())}; }

} // namespace polarsdf
