#include "polarsdf/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "polarsdf/parallel.hpp"

namespace polarsdf {

void LossWeights::validate() const
{
    for (double l : {lambda_g, lambda_m, lambda_e}) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidInput("loss weights must be finite and non-negative");
    }
}

void TrainConfig::validate() const
{
    if (iterations < 0) throw InvalidInput("iterations must be non-negative");
    if (rays_per_batch < 1 || geometric_points < 0 || eikonal_points < 0) throw InvalidInput("batch sizes must be positive");
    if (!(background_fraction >= 0.0 && background_fraction < 1.0)) throw InvalidInput("background_fraction must lie in [0, 1)");
    if (!(band_fraction >= 0.0 && band_fraction <= 1.0) || silhouette_band < 0) throw InvalidInput("invalid silhouette band");
    if (!(learning_rate > 0.0) || !(final_lr_ratio >= 0.0 && final_lr_ratio <= 1.0)) throw InvalidInput("invalid learning rate schedule");
    if (!(sdf_lr_scale > 0.0)) throw InvalidInput("sdf_lr_scale must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) throw InvalidInput("invalid Adam parameters");
    if (resolution < 4) throw InvalidInput("grid resolution must be at least 4");
    if (coarse_levels < 0 || !(coarse_fraction >= 0.0 && coarse_fraction < 1.0)) throw InvalidInput("invalid coarse-to-fine schedule");
    if (!(init_radius > 0.0 && init_radius < 1.0)) throw InvalidInput("init_radius must lie in (0, 1)");
    if (!(s_init > 0.0)) throw InvalidInput("s_init must be positive");
    if (n_coarse < 2 || n_fine < 0) throw InvalidInput("invalid sample counts");
    if (!(shade_min_weight >= 0.0)) throw InvalidInput("shade_min_weight must be non-negative");
    if (checkpoint_every < 0 || threads < 0) throw InvalidInput("checkpoint_every and threads must be non-negative");
}

// ---------------------------------------------------------------------------

ad::Var loss_photometric(std::span<const std::array<StokesT<ad::Var>, 3>> predicted,
                         std::span<const std::array<StokesVector, 3>> observed)
{
    if (predicted.empty()) throw InvalidInput("photometric loss needs at least one ray");
    if (predicted.size() != observed.size()) throw InvalidInput("photometric loss: batch size mismatch");
    ad::Var sum(0.0);
    for (std::size_t r = 0; r < predicted.size(); ++r) {
        for (int c = 0; c < 3; ++c) {
            sum += ad::abs(predicted[r][c].s0 - observed[r][c].s0);
            sum += ad::abs(predicted[r][c].s1 - observed[r][c].s1);
            sum += ad::abs(predicted[r][c].s2 - observed[r][c].s2);
        }
    }
    return sum / static_cast<double>(predicted.size());
}

namespace {

ad::Var point_residual(ad::Tape& tape, const FieldSet& fs, const TangentSystem& sys, bool stack_both)
{
    const VarVec3 n = fs.sdf_normal(tape, sys.point);
    ad::Var sum(0.0);
    for (const auto& row : sys.rows) {
        const ad::Var a = ad::square(dot(n, row.t_vec));
        if (!row.t_alt) {
            sum += a;
            continue;
        }
        const ad::Var b = ad::square(dot(n, *row.t_alt));
        sum += stack_both ? a + b : ad::min(a, b);
    }
    return sum;
}

ad::Var eikonal_term(ad::Tape& tape, const FieldSet& fs, const Vec3& p)
{
    const VarVec3 g = fs.sdf_gradient(tape, fs.stencil(p));
    const ad::Var norm = ad::sqrt(dot(g, g) + 1e-12);
    return ad::square(norm - 1.0);
}

ad::Var bce(double m, const ad::Var& opacity)
{
    const ad::Var o = ad::clamp(opacity, 1e-6, 1.0 - 1e-6);
    return -(m * ad::log(o) + (1.0 - m) * ad::log(1.0 - o));
}

} // namespace

ad::Var loss_geometric(ad::Tape& tape, const FieldSet& fs, std::span<const TangentSystem> systems, bool stack_both,
                       int* skipped)
{
    ad::Var sum(0.0);
    int used = 0, dropped = 0;
    for (const auto& sys : systems) {
        if (sys.rows.empty()) {
            ++dropped;
            continue;
        }
        try {
            sum += point_residual(tape, fs, sys, stack_both);
            ++used;
        } catch (const DegenerateNormal&) {
            ++dropped;
        }
    }
    if (skipped) *skipped = dropped;
    if (used == 0) return ad::Var(0.0);
    return sum / static_cast<double>(used);
}

ad::Var loss_mask(std::span<const ad::Var> opacity, std::span<const double> mask)
{
    if (opacity.size() != mask.size()) throw InvalidInput("mask loss: batch size mismatch");
    if (opacity.empty()) return ad::Var(0.0);
    ad::Var sum(0.0);
    for (std::size_t i = 0; i < opacity.size(); ++i) sum += bce(mask[i], opacity[i]);
    return sum / static_cast<double>(opacity.size());
}

ad::Var loss_eikonal(ad::Tape& tape, const FieldSet& fs, std::span<const Vec3> points)
{
    if (points.empty()) return ad::Var(0.0);
    ad::Var sum(0.0);
    for (const auto& p : points) sum += eikonal_term(tape, fs, p);
    return sum / static_cast<double>(points.size());
}

ad::Var total_loss(const LossTerms& t, const LossWeights& w, bool disable_Lp, bool disable_Lg)
{
    ad::Var total = w.lambda_m * t.Lm + w.lambda_e * t.Le;
    if (!disable_Lp) total = t.Lp + total;
    if (!disable_Lg) total = total + w.lambda_g * t.Lg;
    return total;
}

// ---------------------------------------------------------------------------

namespace {

// Bilinear in the double-angle domain between pixel centres. Empty when a
// neighbour is undefined or the neighbours disagree (silhouettes, branch seams).
std::optional<double> sample_aop(const View& v, const Vec2& pixel)
{
    const double u = pixel.x() - 0.5, w = pixel.y() - 0.5;
    const int i0 = static_cast<int>(std::floor(u)), j0 = static_cast<int>(std::floor(w));
    const double fx = u - i0, fy = w - j0;
    double c = 0.0, s = 0.0;
    bool complete = true;
    for (int dj = 0; dj < 2 && complete; ++dj)
        for (int di = 0; di < 2; ++di) {
            const int x = i0 + di, y = j0 + dj;
            const double wt = (di ? fx : 1.0 - fx) * (dj ? fy : 1.0 - fy);
            if (wt < 1e-9) continue;
            if (x < 0 || y < 0 || x >= v.image.width || y >= v.image.height || !v.aop.ok(x, y)) {
                complete = false;
                break;
            }
            const double a = 2.0 * v.aop.at(x, y);
            c += wt * std::cos(a);
            s += wt * std::sin(a);
        }
    if (!complete || std::hypot(c, s) < 0.9) return std::nullopt;
    return wrap_pi(0.5 * std::atan2(s, c));
}

} // namespace

TangentSystem visible_tangent_system(const FieldSet& fs, const Dataset& data, const Vec3& x)
{
    std::vector<Observation> obs;
    for (std::size_t j = 0; j < data.views.size(); ++j) {
        const View& v = data.views[j];
        const Camera& cam = v.camera;
        Camera::Projection pr;
        try {
            pr = cam.project(x);
        } catch (const BehindCamera&) {
            continue;
        }
        if (!cam.inside(pr.pixel)) continue;
        const int px = static_cast<int>(std::floor(pr.pixel.x()));
        const int py = static_cast<int>(std::floor(pr.pixel.y()));
        if (!v.image.masked(px, py) || !v.aop.ok(px, py)) continue;
        const auto aop = sample_aop(v, pr.pixel);
        if (!aop) continue;

        const Vec3 c = cam.center();
        const double dist = (x - c).norm();
        const auto t = ray_surface_intersection(fs, {c, (x - c) / dist});
        if (!t || std::abs(*t - dist) > 0.01 * dist) continue;
        obs.push_back({&cam, *aop, Dominance::unknown, static_cast<int>(j)});
    }
    TangentSystem sys;
    sys.point = x;
    if (!obs.empty()) sys = build_tangent_system(x, obs);
    return sys;
}

LossPlan sample_plan(const FieldSet& fs, const Dataset& data, const TrainConfig& cfg, std::mt19937_64& rng)
{
    struct Pixel {
        int view, x, y;
    };
    std::vector<Pixel> inside, outside, band;
    const int b = cfg.silhouette_band;
    for (std::size_t j = 0; j < data.views.size(); ++j) {
        const PolarizedImage& im = data.views[j].image;
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x) {
                const Pixel p{static_cast<int>(j), x, y};
                if (im.masked(x, y)) {
                    inside.push_back(p);
                    continue;
                }
                outside.push_back(p);
                bool near = false;
                for (int yy = std::max(0, y - b); yy <= std::min(im.height - 1, y + b) && !near; ++yy)
                    for (int xx = std::max(0, x - b); xx <= std::min(im.width - 1, x + b) && !near; ++xx)
                        near = im.masked(xx, yy);
                if (near) band.push_back(p);
            }
    }
    if (inside.empty()) throw InvalidInput("dataset masks are empty");

    LossPlan plan;
    const int n_bg = outside.empty() ? 0 : static_cast<int>(std::lround(cfg.rays_per_batch * cfg.background_fraction));
    const int n_fg = cfg.rays_per_batch - n_bg;
    const SamplingOptions so{cfg.n_coarse, cfg.n_fine};
    auto add_ray = [&](const Pixel& p, bool in) {
        const View& v = data.views[p.view];
        PlannedRay r;
        r.view = p.view;
        r.px = p.x;
        r.py = p.y;
        r.ray = v.camera.pixel_ray(p.x, p.y);
        r.inside = in;
        for (int c = 0; c < 3; ++c) r.observed[c] = v.image.at(p.x, p.y, c);
        r.t = plan_samples(fs, r.ray, so, &rng);
        if (!r.t.empty()) plan.rays.push_back(std::move(r));
    };
    std::uniform_int_distribution<std::size_t> pick_in(0, inside.size() - 1);
    for (int i = 0; i < n_fg; ++i) add_ray(inside[pick_in(rng)], true);
    if (n_bg > 0) {
        const int n_band = band.empty() ? 0 : static_cast<int>(std::lround(n_bg * cfg.band_fraction));
        std::uniform_int_distribution<std::size_t> pick_out(0, outside.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_band(0, band.empty() ? 0 : band.size() - 1);
        for (int i = 0; i < n_band; ++i) add_ray(band[pick_band(rng)], false);
        for (int i = n_band; i < n_bg; ++i) add_ray(outside[pick_out(rng)], false);
    }

    for (int i = 0; i < cfg.geometric_points; ++i) {
        const Pixel p = inside[pick_in(rng)];
        const Ray ray = data.views[p.view].camera.pixel_ray(p.x, p.y);
        const auto t = ray_surface_intersection(fs, ray);
        if (!t) {
            ++plan.skipped_points;
            continue;
        }
        TangentSystem sys = visible_tangent_system(fs, data, ray.at(*t));
        if (sys.rows.empty()) {
            ++plan.skipped_points;
            continue;
        }
        plan.surface.push_back(std::move(sys));
    }

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < cfg.eikonal_points; ++i) {
        Vec3 p;
        do p = Vec3(u(rng), u(rng), u(rng));
        while (p.squaredNorm() > 1.0);
        plan.eikonal.push_back(p);
    }
    for (const auto& r : plan.rays) {
        if (!r.inside) continue;
        std::uniform_int_distribution<std::size_t> pick(0, r.t.size() - 1);
        plan.eikonal.push_back(r.ray.at(r.t[pick(rng)]));
    }
    return plan;
}

namespace {

struct TaskResult {
    double lp = 0.0, lg = 0.0, lm = 0.0, le = 0.0;
    std::vector<ad::ParamGrad> grads;
};

ad::Tape& worker_tape()
{
    thread_local ad::Tape tape;
    tape.clear();
    return tape;
}

void run_backward(ad::Tape& tape, const ad::Var& out, TaskResult& r, bool want_grad)
{
    if (!want_grad || out.is_constant()) return;
    tape.backward(out, 1.0, r.grads);
}

} // namespace

LossBreakdown evaluate_loss(const FieldSet& fs, const Dataset& data, const LossPlan& plan, const LossWeights& w,
                            const TrainConfig& cfg, std::vector<double>* grad)
{
    const bool want = grad != nullptr;
    if (want && grad->size() != fs.params().size()) throw InvalidInput("gradient buffer has the wrong size");

    std::size_t n_photo = 0;
    for (const auto& r : plan.rays) n_photo += r.inside || cfg.photometric_background ? 1 : 0;
    const double n_rays = static_cast<double>(plan.rays.size());
    const double n_surface = static_cast<double>(plan.surface.size());
    const double n_eik = static_cast<double>(plan.eikonal.size());

    const double wp = cfg.disable_Lp || n_photo == 0 ? 0.0 : 1.0 / static_cast<double>(n_photo);
    const double wg = cfg.disable_Lg || plan.surface.empty() ? 0.0 : w.lambda_g / n_surface;
    const double wm = plan.rays.empty() ? 0.0 : w.lambda_m / n_rays;
    const double we = plan.eikonal.empty() ? 0.0 : w.lambda_e / n_eik;

    constexpr std::size_t kChunk = 32;
    const std::size_t n_ray_tasks = plan.rays.size();
    const std::size_t n_geo_tasks = (plan.surface.size() + kChunk - 1) / kChunk;
    const std::size_t n_eik_tasks = (plan.eikonal.size() + kChunk - 1) / kChunk;
    std::vector<TaskResult> results(n_ray_tasks + n_geo_tasks + n_eik_tasks);
    const VolumeOptions vo{data.eta, cfg.shade_min_weight};

    parallel_for(results.size(), thread_count(cfg.threads), [&](std::size_t task) {
        TaskResult& res = results[task];
        ad::Tape& tape = worker_tape();
        if (task < n_ray_tasks) {
            const PlannedRay& r = plan.rays[task];
            const RenderedRay rr = volume_render_stokes(tape, fs, r.ray, r.t, data.views[r.view].camera, vo);
            const ad::Var lm = bce(r.inside ? 1.0 : 0.0, rr.opacity);
            ad::Var out = wm * lm;
            res.lm = lm.value();
            if (r.inside || cfg.photometric_background) {
                ad::Var lp(0.0);
                for (int c = 0; c < 3; ++c) {
                    lp += ad::abs(rr.stokes[c].s0 - r.observed[c].s0);
                    lp += ad::abs(rr.stokes[c].s1 - r.observed[c].s1);
                    lp += ad::abs(rr.stokes[c].s2 - r.observed[c].s2);
                }
                res.lp = lp.value();
                out = out + wp * lp;
            }
            run_backward(tape, out, res, want);
            return;
        }
        task -= n_ray_tasks;
        if (task < n_geo_tasks) {
            const std::size_t lo = task * kChunk, hi = std::min(lo + kChunk, plan.surface.size());
            ad::Var sum(0.0);
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    sum += point_residual(tape, fs, plan.surface[i], cfg.stack_both);
                } catch (const DegenerateNormal&) {
                    // Contributes nothing; the point keeps its share of the mean.
                }
            }
            res.lg = sum.value();
            run_backward(tape, wg * sum, res, want);
            return;
        }
        task -= n_geo_tasks;
        const std::size_t lo = task * kChunk, hi = std::min(lo + kChunk, plan.eikonal.size());
        ad::Var sum(0.0);
        for (std::size_t i = lo; i < hi; ++i) sum += eikonal_term(tape, fs, plan.eikonal[i]);
        res.le = sum.value();
        run_backward(tape, we * sum, res, want);
    });

    LossBreakdown lb;
    for (const auto& r : results) {
        lb.Lp += r.lp;
        lb.Lg += r.lg;
        lb.Lm += r.lm;
        lb.Le += r.le;
        if (want) {
            for (const auto& g : r.grads) (*grad)[static_cast<std::size_t>(g.param)] += g.grad;
        }
    }
    lb.Lp = n_photo ? lb.Lp / static_cast<double>(n_photo) : 0.0;
    lb.Lg = plan.surface.empty() ? 0.0 : lb.Lg / n_surface;
    lb.Lm = plan.rays.empty() ? 0.0 : lb.Lm / n_rays;
    lb.Le = plan.eikonal.empty() ? 0.0 : lb.Le / n_eik;
    lb.total = w.lambda_m * lb.Lm + w.lambda_e * lb.Le;
    if (!cfg.disable_Lp) lb.total += lb.Lp;
    if (!cfg.disable_Lg) lb.total += w.lambda_g * lb.Lg;
    return lb;
}

// ---------------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state, double lr,
               const AdamOptions& opt, const std::function<std::string(std::size_t)>& describe)
{
    if (params.size() != grad.size()) throw InvalidInput("adam_step: gradient size differs from parameter size");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            std::string where = describe ? describe(i) : "index " + std::to_string(i);
            throw NumericalFailure("non-finite gradient in parameter block " + where);
        }
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double b1 = opt.beta1, b2 = opt.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double step = lr / c1;
    const double inv_sqrt_c2 = 1.0 / std::sqrt(c2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        double& m = state.m[i];
        double& v = state.v[i];
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        if (m == 0.0) continue;
        params[i] -= step * m / (std::sqrt(v) * inv_sqrt_c2 + opt.epsilon);
    }
}

double cosine_lr(const TrainConfig& cfg, int iter)
{
    if (cfg.iterations <= 1) return cfg.learning_rate;
    const double p = std::clamp(static_cast<double>(iter) / (cfg.iterations - 1), 0.0, 1.0);
    const double r = cfg.final_lr_ratio + (1.0 - cfg.final_lr_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
    return cfg.learning_rate * r;
}

int stage_resolution(const TrainConfig& cfg, int iter)
{
    const double span = cfg.coarse_fraction * cfg.iterations / std::max(cfg.coarse_levels, 1);
    if (cfg.coarse_levels == 0 || !(span >= 1.0)) return cfg.resolution;
    const int level = cfg.coarse_levels - static_cast<int>(std::floor(iter / span));
    if (level <= 0) return cfg.resolution;
    return std::max(4, cfg.resolution >> level);
}

FieldSet initial_fields(const TrainConfig& cfg)
{
    FieldSet fs(stage_resolution(cfg, 0));
    fs.init_sphere(cfg.init_radius, 0.3, 0.3, 1.0, cfg.s_init);
    return fs;
}

TrainResult reconstruct(const Dataset& data, const TrainConfig& cfg, const LossWeights& w, const CheckpointFn& on_checkpoint,
                        const ProgressFn& on_progress)
{
    cfg.validate();
    w.validate();
    data.validate();
    if (data.views.size() < 2) throw InvalidInput("reconstruction needs at least two views");

    TrainResult out{initial_fields(cfg), {}, false, {}};
    FieldSet& fs = out.fields;
    AdamState adam_sdf, adam_rest;
    const AdamOptions ao{cfg.beta1, cfg.beta2, cfg.epsilon};
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> grad(fs.params().size());
    const auto start = std::chrono::steady_clock::now();
    auto describe = [&fs](std::size_t i) {
        return std::string(FieldSet::block_name(fs.block_of(i))) + " (index " + std::to_string(i) + ")";
    };

    for (int it = 0; it < cfg.iterations; ++it) {
        if (const int res = stage_resolution(cfg, it); res != fs.resolution()) {
            fs = fs.resampled(res);
            grad.assign(fs.params().size(), 0.0);
            adam_sdf = {};
            adam_rest = {};
        }
        const LossPlan plan = sample_plan(fs, data, cfg, rng);
        std::fill(grad.begin(), grad.end(), 0.0);
        TrainLogRow row;
        row.iter = it;
        row.s_sharp = fs.s_sharp();
        try {
            row.loss = evaluate_loss(fs, data, plan, w, cfg, &grad);
            if (!std::isfinite(row.loss.total)) throw NumericalFailure("loss became non-finite");
            if (!cfg.learn_s) grad[static_cast<std::size_t>(fs.log_s_offset())] = 0.0;
            for (std::size_t i = 0; i < grad.size(); ++i) {
                if (!std::isfinite(grad[i])) throw NumericalFailure("non-finite gradient in parameter block " + describe(i));
            }
            const std::size_t nsdf = static_cast<std::size_t>(fs.diffuse_offset());
            const double lr = cosine_lr(cfg, it);
            const double sdf_lr = lr * cfg.sdf_lr_scale * fs.spacing() * (cfg.resolution - 1) / 2.0;
            std::span<double> p(fs.params());
            std::span<const double> g(grad);
            adam_step(p.first(nsdf), g.first(nsdf), adam_sdf, sdf_lr, ao, describe);
            adam_step(p.subspan(nsdf), g.subspan(nsdf), adam_rest, lr, ao, [&](std::size_t i) { return describe(i + nsdf); });
        } catch (const NumericalFailure& e) {
            out.diverged = true;
            out.message = "iteration " + std::to_string(it) + ": " + e.what();
            return out;
        }
        if (cfg.record_wall_time) {
            row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
        out.log.push_back(row);
        if (on_progress) on_progress(row);
        if (on_checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) on_checkpoint(it + 1, fs);
    }
    return out;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << "iter,L_p,L_g,L_m,L_e,total,s_sharp,wall_ms\n";
    char line[256];
    for (const auto& r : log) {
        std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", r.iter, r.loss.Lp, r.loss.Lg, r.loss.Lm,
                      r.loss.Le, r.loss.total, r.s_sharp, r.wall_ms);
        out << line;
    }
}

} // namespace polarsdf
