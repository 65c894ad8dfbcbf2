#include <algorithm>
#include <cmath>

#include "polarsdf/render.hpp"

namespace polarsdf {

namespace {

double sigmoid(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log sigmoid(x) = -softplus(-x)
double log_sigmoid(double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); }

ad::Var log_sigmoid(ad::Tape& tape, const ad::Var& x)
{
    const double v = log_sigmoid(x.value());
    if (x.is_constant()) return ad::Var(v);
    return tape.node(v, {x.ref()}, {sigmoid(-x.value())});
}

// -expm1(x) = 1 - exp(x) without cancellation for small x.
ad::Var one_minus_exp(ad::Tape& tape, const ad::Var& x)
{
    const double v = -std::expm1(x.value());
    if (x.is_constant()) return ad::Var(v);
    return tape.node(v, {x.ref()}, {-std::exp(x.value())});
}

// 1 - Phi(b) / Phi(a) from log-sigmoids; stable when both are tiny.
double opacity(double log_phi_a, double log_phi_b) { return std::clamp(-std::expm1(log_phi_b - log_phi_a), 0.0, 1.0); }

} // namespace

std::vector<double> plan_samples(const FieldSet& fs, const Ray& ray, const SamplingOptions& opt, std::mt19937_64* rng)
{
    if (opt.n_coarse < 2 || opt.n_fine < 0) throw InvalidInput("need at least two coarse samples");
    const auto range = bounding_interval(ray);
    if (!range) return {};
    const auto [t0, t1] = *range;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int nc = opt.n_coarse;
    const double dt = (t1 - t0) / nc;

    std::vector<double> t(static_cast<std::size_t>(nc));
    for (int k = 0; k < nc; ++k) t[k] = t0 + (k + (rng ? uni(*rng) : 0.5)) * dt;
    if (opt.n_fine == 0) return t;

    const double s = fs.s_sharp();
    std::vector<double> lphi(static_cast<std::size_t>(nc));
    for (int k = 0; k < nc; ++k) lphi[k] = log_sigmoid(s * fs.sdf(ray.at(t[k])));
    std::vector<double> cdf(static_cast<std::size_t>(nc), 0.0);
    double trans = 1.0;
    for (int k = 0; k + 1 < nc; ++k) {
        const double sigma = opacity(lphi[k], lphi[k + 1]);
        // A small floor keeps the distribution defined on empty rays.
        cdf[k + 1] = cdf[k] + trans * sigma + 1e-5;
        trans *= 1.0 - sigma;
    }
    const double total = cdf.back();

    const double xi = rng ? uni(*rng) : 0.5;
    std::vector<double> fine;
    fine.reserve(static_cast<std::size_t>(opt.n_fine));
    std::size_t k = 0;
    for (int j = 0; j < opt.n_fine; ++j) {
        const double u = (j + xi) / opt.n_fine * total;
        while (k + 2 < cdf.size() && cdf[k + 1] < u) ++k;
        const double span = cdf[k + 1] - cdf[k];
        const double f = span > 0.0 ? std::clamp((u - cdf[k]) / span, 0.0, 1.0) : 0.5;
        fine.push_back(t[k] + f * (t[k + 1] - t[k]));
    }
    t.insert(t.end(), fine.begin(), fine.end());
    std::sort(t.begin(), t.end());
    std::vector<double> out;
    out.reserve(t.size());
    for (double v : t) {
        if (out.empty() || v > out.back() + 1e-12) out.push_back(v);
    }
    return out;
}

RaySampleSet neus_weights(ad::Tape& tape, const FieldSet& fs, const Ray& ray, std::span<const double> t)
{
    RaySampleSet out;
    out.t.assign(t.begin(), t.end());
    out.opacity = ad::Var(0.0);
    const std::size_t n = t.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (!(t[i] > t[i - 1])) throw InvalidInput("sample depths must be strictly increasing");
    }
    if (n < 2) return out;

    out.x.reserve(n);
    out.stencil.reserve(n);
    out.sdf.reserve(n);
    for (double ti : t) {
        out.x.push_back(ray.at(ti));
        out.stencil.push_back(fs.stencil(out.x.back()));
        out.sdf.push_back(fs.sample_sdf(tape, out.stencil.back()));
    }
    const ad::Var s = ad::exp(fs.log_s(tape));
    std::vector<ad::Var> lphi;
    lphi.reserve(n);
    for (const auto& f : out.sdf) lphi.push_back(log_sigmoid(tape, s * f));

    ad::Var trans(1.0);
    ad::Var acc(0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        // sigma = max((Phi_i - Phi_i+1) / Phi_i, 0) evaluated as 1 - exp(log Phi_i+1 - log Phi_i).
        const ad::Var sigma = ad::clamp(one_minus_exp(tape, lphi[i + 1] - lphi[i]), 0.0, 1.0);
        const ad::Var w = trans * sigma;
        out.sigma.push_back(sigma);
        out.transmittance.push_back(trans);
        out.weight.push_back(w);
        acc += w;
        trans = trans * (1.0 - sigma);
    }
    out.opacity = acc;
    return out;
}

RaySampleSet neus_weights(ad::Tape& tape, const FieldSet& fs, const Ray& ray, const SamplingOptions& opt)
{
    const auto t = plan_samples(fs, ray, opt, nullptr);
    return neus_weights(tape, fs, ray, t);
}

std::array<StokesT<ad::Var>, 3> shade_sample(ad::Tape& tape, const FieldSet& fs, const Stencil& st, const VarVec3& n,
                                             const Vec3& dir, const Camera& cam, double eta)
{
    const ad::Var cos_nv = ad::clamp(-dot(n, dir), 1e-6, 1.0);
    const auto [c2, s2] = double_angle(dot(n, cam.r1()), dot(n, cam.r2()));

    std::array<ad::Var, 3> ld = fs.sample_diffuse(tape, st);
    for (auto& v : ld) v = ad::max(v, 0.0);

    const ad::Var rough = fs.sample_rough(tape, st);
    const ad::Var dn = dot(n, dir);
    VarVec3 refl;
    for (int a = 0; a < 3; ++a) refl[a] = dir[a] - 2.0 * dn * n[a];
    std::array<ad::Var, 3> ls = fs.eval_env(tape, refl, rough);
    for (auto& v : ls) v = ad::max(v, 0.0);

    return point_stokes_terms(cos_nv, c2, s2, ld, ls, eta);
}

RenderedRay volume_render_stokes(ad::Tape& tape, const FieldSet& fs, const Ray& ray, std::span<const double> t,
                                 const Camera& cam, const VolumeOptions& opt)
{
    RenderedRay out;
    out.samples = neus_weights(tape, fs, ray, t);
    out.opacity = out.samples.opacity;
    for (auto& s : out.stokes) s = {ad::Var(0.0), ad::Var(0.0), ad::Var(0.0)};

    const auto& ss = out.samples;
    for (std::size_t i = 0; i < ss.weight.size(); ++i) {
        const ad::Var& w = ss.weight[i];
        if (w.value() <= opt.shade_min_weight) continue;
        VarVec3 n;
        try {
            n = fs.sdf_normal(tape, ss.stencil[i]);
        } catch (const DegenerateNormal&) {
            continue;
        }
        const auto s = shade_sample(tape, fs, ss.stencil[i], n, ray.dir, cam, opt.eta);
        for (int c = 0; c < 3; ++c) {
            out.stokes[c].s0 += w * s[c].s0;
            out.stokes[c].s1 += w * s[c].s1;
            out.stokes[c].s2 += w * s[c].s2;
        }
        ++out.shaded;
    }
    return out;
}

std::optional<double> ray_surface_intersection(const FieldSet& fs, const Ray& ray)
{
    const auto range = bounding_interval(ray);
    if (!range) return std::nullopt;
    const auto [t0, t1] = *range;
    const double min_step = 0.2 * fs.spacing();

    double tp = t0;
    double dp = fs.sdf(ray.at(t0));
    if (dp <= 0.0) return t0;
    double t = t0;
    while (t < t1) {
        t = std::min(t + std::max(0.9 * dp, min_step), t1);
        const double d = fs.sdf(ray.at(t));
        if (d <= 0.0) {
            // Bracketed crossing in [tp, t]: bisect, then one secant step.
            double a = tp, fa = dp, b = t, fb = d;
            for (int it = 0; it < 60 && b - a > 1e-9; ++it) {
                const double m = 0.5 * (a + b);
                const double fm = fs.sdf(ray.at(m));
                if (fm > 0.0) { a = m; fa = fm; }
                else { b = m; fb = fm; }
            }
            double ts = fa - fb != 0.0 ? a + fa * (b - a) / (fa - fb) : 0.5 * (a + b);
            ts = std::clamp(ts, a, b);
            if (std::abs(fs.sdf(ray.at(ts))) < 1e-4) return ts;
            return std::nullopt;
        }
        tp = t;
        dp = d;
        if (t >= t1) break;
    }
    return std::nullopt;
}

} // namespace polarsdf
