// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,4,7] [--threads N] [--work DIR]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fixtures.hpp"
#include "polarsdf/cli.hpp"
#include "polarsdf/evalkit.hpp"
#include "polarsdf/pbrdf.hpp"

using namespace polarsdf;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double angle_diff(double a, double b)
{
    const double d = std::fmod(std::abs(a - b), pi);
    return std::min(d, pi - d);
}

// 1 ---------------------------------------------------------------------------

Outcome polarimetric_algebra()
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double round_trip = 0.0, scale = 0.0, period = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double s0 = 0.01 + 10.0 * u(rng);
        const double dolp = u(rng);
        const double psi = pi * (2.0 * u(rng) - 1.0) * 3.0;
        const StokesVector s{s0, s0 * dolp * std::cos(2 * psi), s0 * dolp * std::sin(2 * psi), 0.0};
        const auto back = stokes_from_intensities(intensities_from_stokes(s));
        round_trip = std::max({round_trip, std::abs(back.s0 - s.s0), std::abs(back.s1 - s.s1), std::abs(back.s2 - s.s2)});
        // Consistent analyzer readings satisfy i0 + i90 = i45 + i135.
        AnalyzerIntensities full{u(rng), 0.0, u(rng), 0.0};
        full.i45 = (full.i0 + full.i90) * u(rng);
        full.i135 = full.i0 + full.i90 - full.i45;
        const auto again = intensities_from_stokes(stokes_from_intensities(full));
        round_trip = std::max({round_trip, std::abs(again.i0 - full.i0), std::abs(again.i45 - full.i45),
                               std::abs(again.i90 - full.i90), std::abs(again.i135 - full.i135)});

        if (dolp < 1e-6) continue;
        const double k = std::exp(8.0 * (u(rng) - 0.5));
        const StokesVector ks{k * s.s0, k * s.s1, k * s.s2, 0.0};
        scale = std::max(scale, angle_diff(aop(ks), aop(s)));
        const double shifted = psi + pi;
        const StokesVector ps{s0, s0 * dolp * std::cos(2 * shifted), s0 * dolp * std::sin(2 * shifted), 0.0};
        period = std::max({period, angle_diff(aop(ps), aop(s)), angle_diff(aop(s), wrap_pi(psi))});
        period = std::max(period, std::abs(analyzer_intensity(s, psi + pi) - analyzer_intensity(s, psi)));
    }
    return {round_trip <= 1e-12 && scale <= 1e-12 && period <= 1e-12,
            fmt("round trip %.2e, scale invariance %.2e, period %.2e (limit 1e-12, 1e4 samples)", round_trip, scale,
                period)};
}

// 2 ---------------------------------------------------------------------------

double worst_cue_residual(const Scene& scene, int& pixels, int threads)
{
    double worst = 0.0;
    pixels = 0;
    for (const auto& cam : scene.cameras) {
        const auto view = render_scene(scene, cam, threads);
        for (int y = 0; y < cam.height(); ++y)
            for (int x = 0; x < cam.width(); ++x) {
                if (!view.aop.ok(x, y)) continue;
                const std::size_t p = static_cast<std::size_t>(y) * cam.width() + x;
                const auto tp = tangent_pair(cam, view.aop.at(x, y));
                const Vec3 row = view.dominance[p] == Dominance::specular ? tp.t_hat : tp.t_vec;
                worst = std::max(worst, std::abs(row.dot(view.normals[p])));
                ++pixels;
            }
    }
    return worst;
}

Outcome cue_consistency(int threads)
{
    Scene sphere = fixtures::sphere_scene();
    Scene torus = sphere;
    torus.shape = Shape::torus(Vec3::Zero(), 0.5, 0.2);
    int ps = 0, pt = 0;
    const double rs = worst_cue_residual(sphere, ps, threads);
    const double rt = worst_cue_residual(torus, pt, threads);
    return {rs < 1e-6 && rt < 1e-6 && ps > 0 && pt > 0,
            fmt("max |t.n| sphere %.2e over %d px, torus %.2e over %d px (limit 1e-6)", rs, ps, rt, pt)};
}

// 3 ---------------------------------------------------------------------------

Outcome fresnel_microfacet()
{
    const double r0 = fresnel_reflection(1.0, 1.5).plus;
    const auto sp = detail::fresnel_sp(std::cos(std::atan(1.5)), 1.5);
    double worst_norm = 0.0;
    for (double r : {0.1, 0.2, 0.3, 0.5, 0.8, 1.0}) {
        const int n = 200000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double z = 1.0 - (i + 0.5) / n;
            sum += microfacet_d(z, r) * z;
        }
        worst_norm = std::max(worst_norm, std::abs(sum * 2 * pi / n - 1.0));
    }
    return {std::abs(r0 - 0.04) <= 1e-6 && sp[1] < 1e-9 && worst_norm <= 0.01,
            fmt("R+(0) = %.9f, Brewster R_p = %.2e, worst |int D cos - 1| = %.2e", r0, sp[1], worst_norm)};
}

// 4 ---------------------------------------------------------------------------

Outcome gradient_gate()
{
    auto m = fixtures::micro_fixture();
    ad::GradientCheckOptions opt;
    opt.h = 1e-5;
    opt.tol = 1e-4;
    opt.floor = 1e-6;
    opt.fourth_order = true;
    auto f = [&](std::span<const double> th, std::vector<double>* g) {
        std::copy(th.begin(), th.end(), m.fields.params().begin());
        if (g) std::fill(g->begin(), g->end(), 0.0);
        return evaluate_loss(m.fields, m.data, m.plan, m.weights, m.cfg, g).total;
    };
    const std::vector<double> theta = m.fields.params();
    bool pass = true;
    std::string detail;
    for (auto b : {FieldSet::Block::sdf, FieldSet::Block::diffuse, FieldSet::Block::rough, FieldSet::Block::env,
                   FieldSet::Block::sharpness}) {
        const auto [lo, hi] = m.fields.block_range(b);
        std::vector<std::size_t> idx;
        for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
        const auto rep = ad::gradient_check(f, theta, opt, idx);
        pass = pass && rep.max_rel_error < 1e-4;
        detail += fmt("%s %.1e  ", FieldSet::block_name(b), rep.max_rel_error);
    }
    return {pass, detail + "(max rel. error, limit 1e-4)"};
}

// 5, 6 ------------------------------------------------------------------------

struct RunResult {
    double chamfer = 0.0;
    double mae = 0.0;
    double init_chamfer = 0.0;
    double seconds = 0.0;
    bool diverged = false;
};

RunResult train_and_score(const Scene& scene, const Dataset& data, const Mesh& gt, const TrainConfig& cfg,
                          const char* label, int threads)
{
    std::cerr << "  training " << label << " (" << cfg.iterations << " iterations)\n";
    const auto t0 = std::chrono::steady_clock::now();
    const int every = std::max(1, cfg.iterations / 10);
    const TrainResult r = reconstruct(data, cfg, LossWeights{}, {}, [&](const TrainLogRow& row) {
        if (row.iter % every == 0)
            std::cerr << fmt("    iter %5d  Lp %.4f  Lg %.2e  Lm %.4f  Le %.4f  s %.1f\n", row.iter, row.loss.Lp,
                             row.loss.Lg, row.loss.Lm, row.loss.Le, row.s_sharp);
    });
    RunResult out;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.diverged = r.diverged;
    if (r.diverged) {
        std::cerr << "    diverged: " << r.message << '\n';
        out.chamfer = out.mae = std::numeric_limits<double>::infinity();
        return out;
    }
    out.chamfer = chamfer(marching_cubes(r.fields), gt, 100000, 0, threads).symmetric;
    double mae = 0.0;
    for (std::size_t v = 0; v < data.views.size(); ++v) mae += normal_mae(r.fields, data.views[v], static_cast<int>(v), threads).mae_deg;
    out.mae = mae / data.views.size();
    out.init_chamfer = chamfer(marching_cubes(initial_fields(cfg)), gt, 100000, 0, threads).symmetric;
    std::cerr << fmt("    %s: Chamfer %.5f, normal MAE %.2f deg, %.0f s\n", label, out.chamfer, out.mae, out.seconds);
    (void)scene;
    return out;
}

Mesh gt_mesh(const Scene& scene)
{
    FieldSet gt(128);
    gt.fill_sdf([&](const Vec3& p) { return scene.shape.eval(p); });
    return marching_cubes(gt);
}

// Views whose first hit through the bump apex's pixel lands on the bump.
int views_seeing_bump(const Scene& scene)
{
    const Vec3 apex(-0.8, 0.0, 0.0);
    int n = 0;
    for (const auto& cam : scene.cameras) {
        const Vec2 px = cam.project(apex).pixel;
        if (!cam.inside(px)) continue;
        const auto hit = sphere_trace(scene, cam.ray(px));
        if (hit && (hit->x - apex).norm() < 0.03) ++n;
    }
    return n;
}

struct EndToEnd {
    RunResult sphere, bump_full, bump_no_lp, bump_no_lg;
    int bump_views = 0;
};

// 7 ---------------------------------------------------------------------------

Mesh icosphere(double radius, int levels)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : m.vertices) v.normalize();
    m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (int l = 0; l < levels; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            if (auto it = mid.find(key); it != mid.end()) return it->second;
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            return mid[key] = static_cast<int>(m.vertices.size()) - 1;
        };
        std::vector<std::array<std::int32_t, 3>> next;
        for (const auto& tri : m.triangles) {
            const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        m.triangles = std::move(next);
    }
    for (auto& v : m.vertices) v *= radius;
    return m;
}

Outcome evaluation_kit(int threads)
{
    const auto c = chamfer(icosphere(1.0, 5), icosphere(1.01, 5), 100000, 1, threads);
    const double rel = std::abs(c.symmetric - 0.01) / 0.01;

    Scene s;
    s.shape = Shape::torus(Vec3(0.1, 0.0, 0.0), 0.5, 0.2);
    FieldSet grid(24);
    grid.fill_sdf([&](const Vec3& p) { return s.shape.eval(p); });
    const Mesh m = marching_cubes(grid);
    const TriangleGrid tg(m);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::vector<Vec3> q = sample_surface(m, 250, 8);
    for (int i = 0; i < 250; ++i) q.emplace_back(u(rng), u(rng), u(rng));
    double worst = 0.0;
    for (const auto& p : q) worst = std::max(worst, std::abs(tg.distance(p) - tg.distance_brute_force(p)));
    return {rel <= 0.1 && worst <= 1e-12,
            fmt("concentric Chamfer %.6f (%.1f%% from 0.01), grid vs brute force on %zu points %.1e", c.symmetric,
                100 * rel, q.size(), worst)};
}

// 8 ---------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return files;
}

Outcome determinism(const fs::path& work, int threads)
{
    const fs::path dir = work / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    nlohmann::json doc = {{"scene",
                           {{"shape", {{"type", "sphere"}, {"radius", 0.5}}},
                            {"material", {{"roughness", 0.2}}},
                            {"cameras", {{"count", 6}, {"width", 32}, {"height", 32}, {"focal", 45}}}}},
                          {"dataset", (dir / "data").string()},
                          {"output", (dir / "run").string()},
                          {"threads", threads},
                          {"train",
                           {{"iterations", 40},
                            {"rays_per_batch", 128},
                            {"geometric_points", 64},
                            {"eikonal_points", 64},
                            {"resolution", 32},
                            {"checkpoint_every", 20},
                            {"record_wall_time", false}}}};
    const Manifest m = parse_manifest(doc);
    std::ostringstream log;
    std::array<std::map<std::string, std::string>, 2> data, run;
    for (int k = 0; k < 2; ++k) {
        fs::remove_all(dir / "data");
        fs::remove_all(dir / "run");
        cmd_render(m, log);
        cmd_reconstruct(m, log);
        data[k] = snapshot(dir / "data");
        run[k] = snapshot(dir / "run");
    }
    const bool same = data[0] == data[1] && run[0] == run[1];
    return {same && !data[0].empty() && run[0].count("train_log.csv") == 1,
            fmt("%zu dataset files and %zu run files (train log included) %s across two runs", data[0].size(),
                run[0].size(), same ? "byte-identical" : "DIFFER")};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    int threads = 1;
    std::string work = (fs::temp_directory_path() / "polarsdf_acceptance").string();
    app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--work", work, "scratch directory");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);
    auto selected = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

    int failures = 0;
    auto report = [&](int k, const char* name, double secs, double budget, const Outcome& o) {
        const bool pass = o.pass && secs < budget;
        failures += pass ? 0 : 1;
        std::printf("[%s] %d %s: %s; %.1f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", k, name, o.detail.c_str(), secs,
                    budget);
        std::fflush(stdout);
    };
    auto timed = [](auto&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o = f();
        return std::pair{o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    };

    if (selected(1)) {
        auto [o, s] = timed(polarimetric_algebra);
        report(1, "polarimetric algebra", s, 1.0, o);
    }
    if (selected(2)) {
        auto [o, s] = timed([&] { return cue_consistency(threads); });
        report(2, "cue consistency", s, 30.0, o);
    }
    if (selected(3)) {
        auto [o, s] = timed(fresnel_microfacet);
        report(3, "Fresnel and microfacet", s, 10.0, o);
    }
    if (selected(4)) {
        auto [o, s] = timed(gradient_gate);
        report(4, "gradient gate", s, 60.0, o);
    }
    if (selected(5) || selected(6)) {
        TrainConfig cfg;
        cfg.threads = threads;
        const double sphere_budget = threads == 1 ? 1800.0 : 600.0;

        const Scene bump = fixtures::bump_scene();
        const Dataset bump_data = render_dataset(bump, threads);
        const Mesh bump_gt = gt_mesh(bump);
        const RunResult full = train_and_score(bump, bump_data, bump_gt, cfg, "bump, full loss", threads);

        if (selected(5)) {
            const Scene sphere = fixtures::sphere_scene();
            const auto t0 = std::chrono::steady_clock::now();
            const Dataset data = render_dataset(sphere, threads);
            const RunResult r = train_and_score(sphere, data, gt_mesh(sphere), cfg, "sphere", threads);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            Outcome o;
            o.pass = r.chamfer < 0.02 && r.mae < 8.0 && full.chamfer < 0.05 && full.seconds < sphere_budget;
            o.detail = fmt("sphere Chamfer %.5f (< 0.02, initial sphere %.5f), MAE %.2f deg (< 8); bump Chamfer %.5f "
                           "(< 0.05, initial %.5f) in %.0f s",
                           r.chamfer, r.init_chamfer, r.mae, full.chamfer, full.init_chamfer, full.seconds);
            report(5, "end-to-end reconstruction", secs, sphere_budget, o);
        }
        if (selected(6)) {
            TrainConfig no_lp = cfg, no_lg = cfg;
            no_lp.disable_Lp = true;
            no_lg.disable_Lg = true;
            const RunResult a = train_and_score(bump, bump_data, bump_gt, no_lp, "bump, no L_p", threads);
            const RunResult b = train_and_score(bump, bump_data, bump_gt, no_lg, "bump, no L_g", threads);
            const double secs = full.seconds + a.seconds + b.seconds;
            const int views = views_seeing_bump(bump);
            Outcome o;
            o.pass = full.chamfer <= 0.8 * a.chamfer && full.chamfer <= 0.8 * b.chamfer && views == 2;
            o.detail = fmt("Chamfer full %.5f, no-Lp %.5f (%+.0f%%), no-Lg %.5f (%+.0f%%); bump apex seen by %d views",
                           full.chamfer, a.chamfer, 100 * (a.chamfer - full.chamfer) / a.chamfer, b.chamfer,
                           100 * (b.chamfer - full.chamfer) / b.chamfer, views);
            report(6, "ablation", secs, 5400.0, o);
        }
    }
    if (selected(7)) {
        auto [o, s] = timed([&] { return evaluation_kit(threads); });
        report(7, "evaluation kit", s, 60.0, o);
    }
    if (selected(8)) {
        auto [o, s] = timed([&] { return determinism(work, threads); });
        report(8, "determinism", s, 600.0, o);
    }
    return failures == 0 ? 0 : 1;
}
