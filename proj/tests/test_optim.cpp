#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fixtures.hpp"

using namespace polarsdf;

namespace {

double diffuse_aop(const Camera& cam, const Vec3& n)
{
    return wrap_pi(std::numbers::pi / 2 - std::atan2(cam.r2().dot(n), cam.r1().dot(n)));
}

double eval_micro(fixtures::Micro& m, std::span<const double> theta, std::vector<double>* grad)
{
    std::copy(theta.begin(), theta.end(), m.fields.params().begin());
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    return evaluate_loss(m.fields, m.data, m.plan, m.weights, m.cfg, grad).total;
}

} // namespace

TEST_CASE("photometric loss")
{
    std::vector<std::array<StokesT<ad::Var>, 3>> pred(2);
    std::vector<std::array<StokesVector, 3>> obs(2);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) {
            pred[r][c] = {ad::Var(0.5), ad::Var(0.1), ad::Var(-0.1)};
            obs[r][c] = {0.5, 0.1, -0.1, 0.0};
        }
    CHECK(loss_photometric(pred, obs).value() == 0.0);
    obs[0][1].s0 = 0.8;
    obs[1][2].s2 = 0.1;
    CHECK(loss_photometric(pred, obs).value() == doctest::Approx((0.3 + 0.2) / 2).epsilon(1e-12));
    CHECK_THROWS_AS(loss_photometric({}, {}), InvalidInput);
}

TEST_CASE("mask loss")
{
    const std::vector<ad::Var> o = {ad::Var(1.0), ad::Var(0.0)};
    const std::vector<double> m = {1.0, 0.0};
    CHECK(loss_mask(o, m).value() < 1e-5);
    const std::vector<ad::Var> half = {ad::Var(0.5)};
    const std::vector<double> one = {1.0};
    CHECK(loss_mask(half, one).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // Clamped at 1e-6: a confident wrong answer stays finite.
    const std::vector<ad::Var> zero = {ad::Var(0.0)};
    CHECK(loss_mask(zero, one).value() == doctest::Approx(-std::log(1e-6)).epsilon(1e-9));
}

TEST_CASE("eikonal loss")
{
    ad::Tape tape;
    FieldSet fs(16);
    const std::vector<Vec3> pts = {Vec3(0.1, 0.2, 0.05), Vec3(-0.3, 0.1, 0.4), Vec3(0.5, -0.5, -0.2)};
    fs.fill_sdf([](const Vec3& p) { return p.x() * 0.6 + p.y() * 0.8; });
    CHECK(loss_eikonal(tape, fs, pts).value() == doctest::Approx(0.0).epsilon(1e-10));
    fs.fill_sdf([](const Vec3& p) { return 2.0 * p.z(); });
    CHECK(loss_eikonal(tape, fs, pts).value() == doctest::Approx(1.0).epsilon(1e-10));

    FieldSet sphere(64);
    sphere.init_sphere(0.5);
    std::vector<Vec3> away;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    while (away.size() < 200) {
        const Vec3 p(u(rng), u(rng), u(rng));
        if (p.norm() > 0.2 && p.norm() < 0.9) away.push_back(p);
    }
    CHECK(loss_eikonal(tape, sphere, away).value() < 0.01);
}

TEST_CASE("geometric loss is zero for the true normal and positive otherwise")
{
    ad::Tape tape;
    FieldSet fs(16);
    const Scene scene = fixtures::sphere_scene();
    const Vec3 x = Vec3(0.3, -0.2, 0.25).normalized() * 0.5;
    const Vec3 n = x.normalized();
    std::vector<Observation> obs;
    for (std::size_t j = 0; j < scene.cameras.size(); ++j) {
        const Camera& cam = scene.cameras[j];
        if (n.dot(cam.center() - x) <= 0.0) continue;
        obs.push_back({&cam, diffuse_aop(cam, n), Dominance::unknown, static_cast<int>(j)});
    }
    REQUIRE(obs.size() >= 2);
    const std::vector<TangentSystem> sys = {build_tangent_system(x, obs)};

    // A plane has an exact trilinear gradient.
    fs.fill_sdf([&](const Vec3& p) { return n.dot(p - x); });
    const double at_truth = loss_geometric(tape, fs, sys, false).value();
    CHECK(at_truth < 1e-20);
    CHECK(loss_geometric(tape, fs, sys, true).value() > 1e-3);

    const Vec3 tilted = (n + Vec3(0.2, 0.1, -0.1)).normalized();
    fs.fill_sdf([&](const Vec3& p) { return tilted.dot(p - x); });
    CHECK(loss_geometric(tape, fs, sys, false).value() > 1e-3);

    int skipped = -1;
    const std::vector<TangentSystem> none(1);
    CHECK(loss_geometric(tape, fs, none, false, &skipped).value() == 0.0);
    CHECK(skipped == 1);
}

TEST_CASE("total loss honours weights and ablation switches")
{
    const LossTerms t{ad::Var(1.0), ad::Var(2.0), ad::Var(3.0), ad::Var(4.0)};
    LossWeights w;
    CHECK(total_loss(t, w).value() == doctest::Approx(1.0 + 0.1 * (2 + 3 + 4)));
    CHECK(total_loss(t, w, true).value() == doctest::Approx(0.1 * (2 + 3 + 4)));
    CHECK(total_loss(t, w, false, true).value() == doctest::Approx(1.0 + 0.1 * (3 + 4)));
    LossWeights bigger = w;
    bigger.lambda_g = 0.5;
    CHECK(total_loss(t, bigger).value() > total_loss(t, w).value());
    w.lambda_e = -1.0;
    CHECK_THROWS_AS(w.validate(), InvalidInput);
}

TEST_CASE("adam")
{
    AdamOptions opt;
    SUBCASE("zero gradient leaves parameters unchanged")
    {
        std::vector<double> p = {1.0, -2.0};
        const std::vector<double> g = {0.0, 0.0};
        AdamState st;
        adam_step(p, g, st, 0.1, opt);
        CHECK(p[0] == 1.0);
        CHECK(p[1] == -2.0);
    }
    SUBCASE("first step moves by lr against the gradient sign")
    {
        std::vector<double> p = {1.0, 1.0};
        const std::vector<double> g = {3.0, -0.02};
        AdamState st;
        adam_step(p, g, st, 0.01, opt);
        // m_hat = g, v_hat = g^2: delta = -lr * g / (|g| + eps).
        CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
        CHECK(p[1] == doctest::Approx(1.0 + 0.01 * 0.02 / (0.02 + 1e-8)).epsilon(1e-12));
    }
    SUBCASE("quadratic bowl")
    {
        const std::vector<double> target = {0.7, -1.3, 2.0};
        const std::vector<double> scale = {1.0, 10.0, 0.1};
        std::vector<double> p(3, 0.0), g(3);
        AdamState st;
        for (int it = 0; it < 500; ++it) {
            for (int i = 0; i < 3; ++i) g[i] = 2.0 * scale[i] * (p[i] - target[i]);
            adam_step(p, g, st, 0.05 * (1.0 - it / 600.0), opt);
        }
        for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(target[i]).epsilon(1e-2));
    }
    SUBCASE("non-finite gradients name the block and leave params alone")
    {
        FieldSet fs(4);
        std::vector<double> g(fs.params().size(), 0.0);
        g[static_cast<std::size_t>(fs.rough_offset()) + 2] = std::nan("");
        const auto before = fs.params();
        AdamState st;
        try {
            adam_step(fs.params(), g, st, 0.1, opt,
                      [&](std::size_t i) { return std::string(FieldSet::block_name(fs.block_of(i))); });
            FAIL("expected NumericalFailure");
        } catch (const NumericalFailure& e) {
            CHECK(std::string(e.what()).find("rough") != std::string::npos);
        }
        CHECK(fs.params() == before);
    }
}

TEST_CASE("cosine schedule")
{
    TrainConfig cfg;
    CHECK(cosine_lr(cfg, 0) == doctest::Approx(cfg.learning_rate));
    CHECK(cosine_lr(cfg, cfg.iterations - 1) == doctest::Approx(cfg.learning_rate * cfg.final_lr_ratio));
    double prev = cosine_lr(cfg, 0);
    for (int i = 1; i < cfg.iterations; i += 97) {
        const double lr = cosine_lr(cfg, i);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("micro fixture plan covers every loss term")
{
    auto m = fixtures::micro_fixture();
    CHECK(m.plan.rays.size() == 4);
    CHECK(m.plan.surface.size() >= 1);
    int bg = 0;
    for (const auto& r : m.plan.rays) bg += r.inside ? 0 : 1;
    CHECK(bg == 1);
    const auto lb = evaluate_loss(m.fields, m.data, m.plan, m.weights, m.cfg, nullptr);
    CHECK(lb.Lp > 0.0);
    CHECK(lb.Lg > 0.0);
    CHECK(lb.Lm > 0.0);
    CHECK(lb.Le > 0.0);
    CHECK(lb.total == doctest::Approx(lb.Lp + 0.1 * (lb.Lg + lb.Lm + lb.Le)).epsilon(1e-12));
}

TEST_CASE("loss gradient matches finite differences for every parameter class")
{
    auto m = fixtures::micro_fixture();
    const FieldSet& fs = m.fields;
    ad::GradientCheckOptions opt;
    opt.h = 1e-5;
    opt.tol = 1e-4;
    opt.floor = 1e-6;
    opt.fourth_order = true;
    auto f = [&](std::span<const double> th, std::vector<double>* g) { return eval_micro(m, th, g); };
    const std::vector<double> theta = fs.params();
    for (auto b : {FieldSet::Block::sdf, FieldSet::Block::diffuse, FieldSet::Block::rough, FieldSet::Block::env,
                   FieldSet::Block::sharpness}) {
        const auto [lo, hi] = fs.block_range(b);
        std::vector<std::size_t> idx;
        for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
        const auto rep = ad::gradient_check(f, theta, opt, idx);
        INFO(FieldSet::block_name(b), " worst ", rep.worst_index, " analytic ", rep.worst_analytic, " numeric ",
             rep.worst_numeric);
        CHECK(rep.max_rel_error < 1e-4);
    }
}

TEST_CASE("loss evaluation is identical across thread counts")
{
    auto m = fixtures::micro_fixture();
    std::vector<double> g1(m.fields.params().size()), g4(g1.size());
    const auto a = evaluate_loss(m.fields, m.data, m.plan, m.weights, m.cfg, &g1);
    m.cfg.threads = 4;
    const auto b = evaluate_loss(m.fields, m.data, m.plan, m.weights, m.cfg, &g4);
    CHECK(a.total == b.total);
    CHECK(g1 == g4);
}

namespace {

// Geometric residual with the analytic sphere normal in place of the grid normal.
double analytic_geometric(const LossPlan& plan)
{
    double sum = 0.0;
    for (const auto& sys : plan.surface) {
        const Vec3 n = sys.point.normalized();
        for (const auto& row : sys.rows) {
            const double a = std::pow(row.t_vec.dot(n), 2);
            sum += row.t_alt ? std::min(a, std::pow(row.t_alt->dot(n), 2)) : a;
        }
    }
    return sum / static_cast<double>(plan.surface.size());
}

} // namespace

TEST_CASE("ground truth is a near fixed point of the objective")
{
    Scene scene = fixtures::sphere_scene();
    scene.quadrature_samples = 256;
    const Dataset data = render_dataset(scene, 4);
    TrainConfig cfg;
    cfg.threads = 4;

    std::array<double, 2> lg{};
    for (int level = 0; level < 2; ++level) {
        const int res = level == 0 ? 32 : 64;
        const FieldSet fs = fixtures::ground_truth_fields(scene, res, 3000.0);
        std::mt19937_64 rng(11);
        const LossPlan plan = sample_plan(fs, data, cfg, rng);
        REQUIRE(plan.surface.size() > 200);
        const auto lb = evaluate_loss(fs, data, plan, {}, cfg, nullptr);
        lg[level] = lb.Lg;
        if (res != 64) continue;

        // L_p sums channels per ray, so compare against the per-ray channel sum of s0.
        double s0 = 0.0;
        int n = 0;
        for (const auto& r : plan.rays) {
            if (!r.inside) continue;
            for (int c = 0; c < 3; ++c) s0 += r.observed[c].s0;
            ++n;
        }
        s0 /= n;
        INFO("Lp ", lb.Lp, " mean s0 ", s0, " Lg ", lb.Lg, " Lm ", lb.Lm, " Le ", lb.Le);
        CHECK(lb.Lp < 1e-2 * s0);
        CHECK(lb.Lm < 1e-2);
        CHECK(lb.Le < 1e-2);
        CHECK(analytic_geometric(plan) < 1e-6);
    }
    // With trilinear normals L_g is a discretization floor that shrinks with the grid.
    INFO("Lg 32: ", lg[0], " Lg 64: ", lg[1]);
    CHECK(lg[1] < 0.5 * lg[0]);
}

TEST_CASE("training log")
{
    std::vector<TrainLogRow> log(2);
    log[1].iter = 1;
    log[1].loss.total = 0.25;
    const auto path = std::filesystem::temp_directory_path() / "polarsdf_train_log.csv";
    write_train_log(log, path);
    std::ifstream in(path);
    std::string header, row0, row1;
    std::getline(in, header);
    std::getline(in, row0);
    std::getline(in, row1);
    CHECK(header == "iter,L_p,L_g,L_m,L_e,total,s_sharp,wall_ms");
    CHECK(row1.rfind("1,0,0,0,0,0.25,", 0) == 0);
    std::filesystem::remove(path);
}

TEST_CASE("reconstruct rejects bad input and is deterministic")
{
    auto m = fixtures::micro_fixture();
    TrainConfig cfg = m.cfg;
    cfg.resolution = 8;
    cfg.iterations = 3;
    cfg.record_wall_time = false;
    Dataset one = m.data;
    one.views.resize(1);
    CHECK_THROWS_AS(reconstruct(one, cfg, {}), InvalidInput);

    const auto a = reconstruct(m.data, cfg, {});
    const auto b = reconstruct(m.data, cfg, {});
    REQUIRE_FALSE(a.diverged);
    REQUIRE(a.log.size() == 3);
    CHECK(a.fields.params() == b.fields.params());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss.total == b.log[i].loss.total);

    int checkpoints = 0;
    cfg.checkpoint_every = 2;
    reconstruct(m.data, cfg, {}, [&](int, const FieldSet&) { ++checkpoints; });
    CHECK(checkpoints == 1);
}

TEST_CASE("training lowers the loss on a small problem")
{
    Scene scene = fixtures::sphere_scene(0.4, 0.3);
    OrbitOptions oo;
    oo.width = oo.height = 24;
    oo.focal = 34;
    scene.cameras = orbit_cameras(oo, 5);
    scene.quadrature_samples = 128;
    const Dataset data = render_dataset(scene, 4);
    TrainConfig cfg;
    cfg.resolution = 16;
    cfg.iterations = 60;
    cfg.rays_per_batch = 128;
    cfg.geometric_points = 32;
    cfg.eikonal_points = 64;
    cfg.learning_rate = 2e-2;
    cfg.threads = 4;
    const auto r = reconstruct(data, cfg, {});
    REQUIRE_FALSE(r.diverged);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
        first += r.log[i].loss.total;
        last += r.log[r.log.size() - 1 - i].loss.total;
    }
    CHECK(last < 0.8 * first);
}
