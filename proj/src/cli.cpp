#include "polarsdf/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>

#include "CLI11.hpp"

#include "polarsdf/dataset.hpp"
#include "polarsdf/io.hpp"
#include "polarsdf/parallel.hpp"

namespace polarsdf {

using nlohmann::json;

namespace {

const std::vector<std::string> kTopKeys = {"scene", "dataset", "output", "train", "weights", "ablation", "threads", "eval", "aop"};
const std::vector<std::string> kTrainKeys = {
    "iterations",   "rays_per_batch", "geometric_points", "eikonal_points", "background_fraction", "band_fraction", "silhouette_band", "photometric_background", "learning_rate",
    "final_lr_ratio", "beta1",        "beta2",            "epsilon",        "sdf_lr_scale",        "seed",
    "resolution",   "coarse_levels", "coarse_fraction", "init_radius",    "s_init",           "learn_s",        "n_coarse",            "n_fine",
    "shade_min_weight", "stack_both", "disable_Lp",       "disable_Lg",     "checkpoint_every",    "record_wall_time"};
const std::vector<std::string> kWeightKeys = {"lambda_g", "lambda_m", "lambda_e"};

bool contains(const std::vector<std::string>& keys, const std::string& k)
{
    return std::find(keys.begin(), keys.end(), k) != keys.end();
}

void require_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw InvalidInput(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!contains(allowed, it.key())) throw InvalidInput("unknown key '" + where + "." + it.key() + "'");
    }
}

template <class T>
T read(const json& j, const std::string& key, T fallback, const std::string& where)
{
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidInput("'" + where + "." + key + "' has the wrong type");
    }
}

Vec3 read_vec3(const json& j, const std::string& key, const Vec3& fallback, const std::string& where)
{
    if (!j.contains(key)) return fallback;
    const auto a = read<std::vector<double>>(j, key, {}, where);
    if (a.size() != 3) throw InvalidInput("'" + where + "." + key + "' must have 3 entries");
    return Vec3(a[0], a[1], a[2]);
}

std::array<double, 3> read_rgb(const json& j, const std::string& key, const std::array<double, 3>& fallback, const std::string& where)
{
    if (!j.contains(key)) return fallback;
    if (j.at(key).is_number()) {
        const double v = j.at(key).get<double>();
        return {v, v, v};
    }
    const auto a = read<std::vector<double>>(j, key, {}, where);
    if (a.size() != 3) throw InvalidInput("'" + where + "." + key + "' must be a number or 3 entries");
    return {a[0], a[1], a[2]};
}

Material parse_material(const json& j)
{
    const std::string w = "scene.material";
    require_keys(j, {"albedo", "roughness", "eta"}, w);
    Material m;
    m.albedo = read_rgb(j, "albedo", m.albedo, w);
    m.roughness = read(j, "roughness", m.roughness, w);
    m.eta = read(j, "eta", m.eta, w);
    m.validate();
    return m;
}

Environment parse_environment(const json& j)
{
    const std::string w = "scene.environment";
    require_keys(j, {"type", "radiance", "scale", "sh", "lobes"}, w);
    const auto type = read<std::string>(j, "type", "studio", w);
    Environment env;
    if (type == "studio") {
        env = studio_environment();
    } else if (type == "constant") {
        env = Environment::constant(read(j, "radiance", 1.0, w));
    } else if (type != "custom") {
        throw InvalidInput("scene.environment.type must be studio, constant or custom");
    }
    if (j.contains("sh")) {
        const auto sh = read<std::vector<std::vector<double>>>(j, "sh", {}, w);
        if (sh.size() > static_cast<std::size_t>(kShCount)) throw InvalidInput("too many SH coefficients in scene.environment.sh");
        for (std::size_t k = 0; k < sh.size(); ++k) {
            if (sh[k].size() != 3) throw InvalidInput("scene.environment.sh entries must be RGB triples");
            for (int c = 0; c < 3; ++c) env.sh[k][c] += sh[k][c];
        }
    }
    if (j.contains("lobes")) {
        if (!j.at("lobes").is_array()) throw InvalidInput("scene.environment.lobes must be an array");
        for (const auto& l : j.at("lobes")) {
            const std::string lw = w + ".lobes[]";
            require_keys(l, {"direction", "sharpness", "amplitude"}, lw);
            Environment::Lobe lobe;
            lobe.direction = read_vec3(l, "direction", lobe.direction, lw);
            if (!(lobe.direction.norm() > 0.0)) throw InvalidInput("lobe direction must be non-zero");
            lobe.direction.normalize();
            lobe.sharpness = read(l, "sharpness", lobe.sharpness, lw);
            lobe.amplitude = read_rgb(l, "amplitude", lobe.amplitude, lw);
            env.lobes.push_back(lobe);
        }
    }
    const double scale = read(j, "scale", 1.0, w);
    if (!(scale >= 0.0)) throw InvalidInput("scene.environment.scale must be non-negative");
    return scale == 1.0 ? env : env.scaled(scale);
}

std::vector<Camera> parse_cameras(const json& j)
{
    const std::string w = "scene.cameras";
    if (j.is_array()) {
        std::vector<Camera> cams;
        for (const auto& c : j) {
            const std::string cw = w + "[]";
            require_keys(c, {"eye", "target", "up", "focal", "width", "height"}, cw);
            cams.push_back(Camera::look_at(read_vec3(c, "eye", Vec3(0, 0, 3), cw), read_vec3(c, "target", Vec3::Zero(), cw),
                                           read_vec3(c, "up", Vec3(0, 0, 1), cw), read(c, "focal", 90.0, cw),
                                           read(c, "width", 64, cw), read(c, "height", 64, cw)));
        }
        if (cams.empty()) throw InvalidInput("scene.cameras is empty");
        return cams;
    }
    require_keys(j, {"count", "distance", "focal", "width", "height", "min_elevation", "max_elevation", "jitter", "seed"}, w);
    OrbitOptions o;
    o.count = read(j, "count", o.count, w);
    o.distance = read(j, "distance", o.distance, w);
    o.focal = read(j, "focal", o.focal, w);
    o.width = read(j, "width", o.width, w);
    o.height = read(j, "height", o.height, w);
    o.min_elevation = read(j, "min_elevation", o.min_elevation, w);
    o.max_elevation = read(j, "max_elevation", o.max_elevation, w);
    o.jitter = read(j, "jitter", o.jitter, w);
    if (o.count < 1) throw InvalidInput("scene.cameras.count must be at least 1");
    return orbit_cameras(o, read<std::uint64_t>(j, "seed", 42, w));
}

Scene parse_scene(const json& j)
{
    require_keys(j, {"shape", "material", "environment", "cameras", "quadrature_samples", "quadrature_seed"}, "scene");
    if (!j.contains("shape")) throw InvalidInput("scene.shape is required");
    Scene s;
    s.shape = parse_shape(j.at("shape"));
    s.material = parse_material(j.value("material", json::object()));
    s.environment = parse_environment(j.value("environment", json::object()));
    s.cameras = parse_cameras(j.value("cameras", json::object()));
    s.quadrature_samples = read(j, "quadrature_samples", s.quadrature_samples, "scene");
    s.quadrature_seed = read<std::uint64_t>(j, "quadrature_seed", s.quadrature_seed, "scene");
    if (s.quadrature_samples < 1) throw InvalidInput("scene.quadrature_samples must be positive");
    return s;
}

TrainConfig parse_train(const json& j)
{
    const std::string w = "train";
    require_keys(j, kTrainKeys, w);
    TrainConfig c;
    c.iterations = read(j, "iterations", c.iterations, w);
    c.rays_per_batch = read(j, "rays_per_batch", c.rays_per_batch, w);
    c.geometric_points = read(j, "geometric_points", c.geometric_points, w);
    c.eikonal_points = read(j, "eikonal_points", c.eikonal_points, w);
    c.background_fraction = read(j, "background_fraction", c.background_fraction, w);
    c.band_fraction = read(j, "band_fraction", c.band_fraction, w);
    c.silhouette_band = read(j, "silhouette_band", c.silhouette_band, w);
    c.photometric_background = read(j, "photometric_background", c.photometric_background, w);
    c.learning_rate = read(j, "learning_rate", c.learning_rate, w);
    c.final_lr_ratio = read(j, "final_lr_ratio", c.final_lr_ratio, w);
    c.beta1 = read(j, "beta1", c.beta1, w);
    c.beta2 = read(j, "beta2", c.beta2, w);
    c.epsilon = read(j, "epsilon", c.epsilon, w);
    c.sdf_lr_scale = read(j, "sdf_lr_scale", c.sdf_lr_scale, w);
    c.seed = read<std::uint64_t>(j, "seed", c.seed, w);
    c.resolution = read(j, "resolution", c.resolution, w);
    c.coarse_levels = read(j, "coarse_levels", c.coarse_levels, w);
    c.coarse_fraction = read(j, "coarse_fraction", c.coarse_fraction, w);
    c.init_radius = read(j, "init_radius", c.init_radius, w);
    c.s_init = read(j, "s_init", c.s_init, w);
    c.learn_s = read(j, "learn_s", c.learn_s, w);
    c.n_coarse = read(j, "n_coarse", c.n_coarse, w);
    c.n_fine = read(j, "n_fine", c.n_fine, w);
    c.shade_min_weight = read(j, "shade_min_weight", c.shade_min_weight, w);
    c.stack_both = read(j, "stack_both", c.stack_both, w);
    c.disable_Lp = read(j, "disable_Lp", c.disable_Lp, w);
    c.disable_Lg = read(j, "disable_Lg", c.disable_Lg, w);
    c.checkpoint_every = read(j, "checkpoint_every", c.checkpoint_every, w);
    c.record_wall_time = read(j, "record_wall_time", c.record_wall_time, w);
    c.validate();
    return c;
}

json train_json(const TrainConfig& c)
{
    return {{"iterations", c.iterations},
            {"rays_per_batch", c.rays_per_batch},
            {"geometric_points", c.geometric_points},
            {"eikonal_points", c.eikonal_points},
            {"background_fraction", c.background_fraction},
            {"band_fraction", c.band_fraction},
            {"silhouette_band", c.silhouette_band},
            {"photometric_background", c.photometric_background},
            {"learning_rate", c.learning_rate},
            {"final_lr_ratio", c.final_lr_ratio},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"sdf_lr_scale", c.sdf_lr_scale},
            {"seed", c.seed},
            {"resolution", c.resolution},
            {"coarse_levels", c.coarse_levels},
            {"coarse_fraction", c.coarse_fraction},
            {"init_radius", c.init_radius},
            {"s_init", c.s_init},
            {"learn_s", c.learn_s},
            {"n_coarse", c.n_coarse},
            {"n_fine", c.n_fine},
            {"shade_min_weight", c.shade_min_weight},
            {"stack_both", c.stack_both},
            {"disable_Lp", c.disable_Lp},
            {"disable_Lg", c.disable_Lg},
            {"checkpoint_every", c.checkpoint_every},
            {"record_wall_time", c.record_wall_time}};
}

Ablation parse_ablation(const std::string& s)
{
    if (s == "none" || s.empty()) return Ablation::none;
    if (s == "no-Lp") return Ablation::no_Lp;
    if (s == "no-Lg") return Ablation::no_Lg;
    if (s == "stack-both") return Ablation::stack_both;
    throw InvalidInput("ablation must be none, no-Lp, no-Lg or stack-both");
}

void write_manifest(const Manifest& m, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << m.json.dump(2) << '\n';
}

void ensure_dir(const std::filesystem::path& dir)
{
    if (dir.empty()) throw InvalidInput("output directory is not set");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InvalidInput("cannot create " + dir.string() + ": " + ec.message());
}

std::filesystem::path require_dataset(const Manifest& m)
{
    if (m.dataset.empty()) throw InvalidInput("manifest has no dataset path");
    return m.dataset;
}

void hsv_to_rgb(double h, std::uint8_t* rgb)
{
    // Full saturation and value.
    const double hp = h / (std::numbers::pi / 3.0);
    const double x = 1.0 - std::abs(std::fmod(hp, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp) % 6) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
    }
    rgb[0] = static_cast<std::uint8_t>(std::lround(255.0 * r));
    rgb[1] = static_cast<std::uint8_t>(std::lround(255.0 * g));
    rgb[2] = static_cast<std::uint8_t>(std::lround(255.0 * b));
}

} // namespace

Shape parse_shape(const json& j)
{
    const std::string w = "scene.shape";
    if (!j.is_object()) throw InvalidInput(w + " must be an object");
    const auto type = read<std::string>(j, "type", "", w);
    if (type == "sphere") {
        require_keys(j, {"type", "center", "radius"}, w);
        const double r = read(j, "radius", 0.5, w);
        if (!(r > 0.0)) throw InvalidInput("sphere radius must be positive");
        return Shape::sphere(read_vec3(j, "center", Vec3::Zero(), w), r);
    }
    if (type == "torus") {
        require_keys(j, {"type", "center", "major", "minor"}, w);
        const double R = read(j, "major", 0.5, w), r = read(j, "minor", 0.2, w);
        if (!(r > 0.0 && R > r)) throw InvalidInput("torus needs major > minor > 0");
        return Shape::torus(read_vec3(j, "center", Vec3::Zero(), w), R, r);
    }
    if (type == "rounded_box") {
        require_keys(j, {"type", "center", "half_extent", "radius"}, w);
        const Vec3 half = read_vec3(j, "half_extent", Vec3::Constant(0.3), w);
        const double r = read(j, "radius", 0.05, w);
        if (!(half.minCoeff() > 0.0) || !(r >= 0.0)) throw InvalidInput("rounded_box needs positive extents");
        return Shape::rounded_box(read_vec3(j, "center", Vec3::Zero(), w), half, r);
    }
    if (type == "smooth_union") {
        require_keys(j, {"type", "blend", "children"}, w);
        if (!j.contains("children") || !j.at("children").is_array() || j.at("children").empty()) {
            throw InvalidInput("smooth_union needs a non-empty children array");
        }
        std::vector<Shape> parts;
        for (const auto& c : j.at("children")) parts.push_back(parse_shape(c));
        const double k = read(j, "blend", 0.05, w);
        if (!(k >= 0.0)) throw InvalidInput("smooth_union blend must be non-negative");
        return Shape::smooth_union(std::move(parts), k);
    }
    throw InvalidInput("scene.shape.type must be sphere, torus, rounded_box or smooth_union");
}

std::string ablation_suffix(Ablation a)
{
    switch (a) {
    case Ablation::none: return "";
    case Ablation::no_Lp: return "_no-Lp";
    case Ablation::no_Lg: return "_no-Lg";
    case Ablation::stack_both: return "_stack-both";
    }
    return "";
}

Manifest parse_manifest(const json& doc)
{
    require_keys(doc, kTopKeys, "manifest");
    Manifest m;
    if (doc.contains("scene")) m.scene = parse_scene(doc.at("scene"));
    m.dataset = read<std::string>(doc, "dataset", "", "manifest");
    m.output = read<std::string>(doc, "output", "", "manifest");
    m.train = parse_train(doc.value("train", json::object()));

    const json wj = doc.value("weights", json::object());
    require_keys(wj, kWeightKeys, "weights");
    m.weights.lambda_g = read(wj, "lambda_g", m.weights.lambda_g, "weights");
    m.weights.lambda_m = read(wj, "lambda_m", m.weights.lambda_m, "weights");
    m.weights.lambda_e = read(wj, "lambda_e", m.weights.lambda_e, "weights");
    m.weights.validate();

    m.ablation = parse_ablation(read<std::string>(doc, "ablation", "none", "manifest"));
    if (m.ablation == Ablation::no_Lp) m.train.disable_Lp = true;
    if (m.ablation == Ablation::no_Lg) m.train.disable_Lg = true;
    if (m.ablation == Ablation::stack_both) m.train.stack_both = true;
    m.threads = read(doc, "threads", 0, "manifest");
    if (m.threads < 0) throw InvalidInput("threads must be non-negative");
    m.train.threads = m.threads;

    const json ej = doc.value("eval", json::object());
    require_keys(ej, {"estimate", "samples", "seed", "gt_mesh_resolution"}, "eval");
    m.estimate = read<std::string>(ej, "estimate", "", "eval");
    m.eval_samples = read<std::size_t>(ej, "samples", m.eval_samples, "eval");
    m.eval_seed = read<std::uint64_t>(ej, "seed", m.eval_seed, "eval");
    m.gt_mesh_resolution = read(ej, "gt_mesh_resolution", m.gt_mesh_resolution, "eval");
    if (m.eval_samples == 0 || m.gt_mesh_resolution < 8) throw InvalidInput("invalid eval settings");

    const json aj = doc.value("aop", json::object());
    require_keys(aj, {"view"}, "aop");
    m.aop_view = read(aj, "view", -1, "aop");

    m.json = doc;
    json train = train_json(m.train);
    train.erase("stack_both");
    train.erase("disable_Lp");
    train.erase("disable_Lg");
    const TrainConfig& given = parse_train(doc.value("train", json::object()));
    train["stack_both"] = given.stack_both;
    train["disable_Lp"] = given.disable_Lp;
    train["disable_Lg"] = given.disable_Lg;
    m.json["train"] = train;
    m.json["weights"] = {{"lambda_g", m.weights.lambda_g}, {"lambda_m", m.weights.lambda_m}, {"lambda_e", m.weights.lambda_e}};
    return m;
}

void apply_override(json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidInput("override '" + assignment + "' is not key=value");
    std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }

    if (key == "ablate") key = "ablation";
    if (key.find('.') == std::string::npos && !contains(kTopKeys, key)) {
        if (contains(kTrainKeys, key)) key = "train." + key;
        else if (contains(kWeightKeys, key)) key = "weights." + key;
        else throw InvalidInput("unknown override key '" + key + "'");
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot - start);
        if (part.empty()) throw InvalidInput("malformed override key '" + key + "'");
        if (!node->is_object()) throw InvalidInput("override '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        if (!node->contains(part)) (*node)[part] = json::object();
        node = &(*node)[part];
        start = dot + 1;
    }
}

Manifest load_manifest(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read manifest " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidInput("manifest " + path.string() + ": " + e.what());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return parse_manifest(doc);
}

// ---------------------------------------------------------------------------

void cmd_render(const Manifest& m, std::ostream& log)
{
    if (!m.scene) throw InvalidInput("render needs a scene");
    const Scene& scene = *m.scene;
    if (scene.cameras.empty()) throw InvalidInput("scene has no cameras");
    const auto dir = require_dataset(m);
    ensure_dir(dir);

    Dataset data;
    data.eta = scene.material.eta;
    for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        RenderedView r = render_scene(scene, scene.cameras[i], thread_count(m.threads));
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        View v;
        v.camera = scene.cameras[i];
        v.image = std::move(r.image);
        v.aop = std::move(r.aop);
        v.normals = std::move(r.normals);
        v.dominance = std::move(r.dominance);
        int masked = 0;
        for (auto b : v.image.mask) masked += b ? 1 : 0;
        log << "view " << i << ": " << masked << " object pixels, " << static_cast<long>(std::lround(ms)) << " ms\n";
        data.views.push_back(std::move(v));
    }
    write_dataset(data, dir);

    FieldSet gt(m.gt_mesh_resolution);
    gt.fill_sdf([&](const Vec3& p) { return scene.shape.eval(p); });
    write_obj(marching_cubes(gt), dir / "gt_mesh.obj");
    write_manifest(m, dir / "manifest.json");
    log << "wrote " << data.views.size() << " views to " << dir.string() << '\n';
}

TrainResult cmd_reconstruct(const Manifest& m, std::ostream& log)
{
    const Dataset data = read_dataset(require_dataset(m));
    ensure_dir(m.output);
    const std::string sfx = ablation_suffix(m.ablation);
    write_manifest(m, m.output / ("manifest" + sfx + ".json"));

    const int every = std::max(1, m.train.iterations / 20);
    auto on_ckpt = [&](int iter, const FieldSet& fs) {
        save_checkpoint(fs, m.output / ("fields" + sfx + "_iter" + std::to_string(iter) + ".ckpt"));
    };
    auto on_progress = [&](const TrainLogRow& r) {
        if (r.iter % every != 0 && r.iter + 1 != m.train.iterations) return;
        char line[200];
        std::snprintf(line, sizeof line, "iter %5d  total %.5f  Lp %.5f  Lg %.3e  Lm %.5f  Le %.5f  s %.1f\n", r.iter,
                      r.loss.total, r.loss.Lp, r.loss.Lg, r.loss.Lm, r.loss.Le, r.s_sharp);
        log << line << std::flush;
    };
    TrainResult res = reconstruct(data, m.train, m.weights, on_ckpt, on_progress);

    write_train_log(res.log, m.output / ("train_log" + sfx + ".csv"));
    save_checkpoint(res.fields, m.output / ("fields" + sfx + ".ckpt"));
    if (res.diverged) throw NumericalFailure("training diverged at " + res.message + "; last good fields saved");
    write_obj(marching_cubes(res.fields), m.output / ("mesh" + sfx + ".obj"));
    log << "wrote " << (m.output / ("mesh" + sfx + ".obj")).string() << '\n';
    return res;
}

EvalReport cmd_eval(const Manifest& m, std::ostream& log)
{
    const auto dir = require_dataset(m);
    if (m.estimate.empty()) throw InvalidInput("eval needs eval.estimate (mesh .obj or checkpoint .ckpt)");
    const Dataset data = read_dataset(dir);
    if (!std::filesystem::exists(dir / "gt_mesh.obj")) throw InvalidInput("dataset has no gt_mesh.obj");
    const Mesh gt = read_obj(dir / "gt_mesh.obj");

    std::optional<FieldSet> fs;
    Mesh est;
    if (m.estimate.extension() == ".ckpt") {
        fs = load_checkpoint(m.estimate);
        est = marching_cubes(*fs);
    } else {
        est = read_obj(m.estimate);
    }
    EvalReport r = evaluate(est, gt, fs ? &*fs : nullptr, &data, m.eval_samples, m.eval_seed, thread_count(m.threads));
    log << r.json() << '\n' << r.table();
    if (!m.output.empty()) {
        ensure_dir(m.output);
        std::ofstream out(m.output / "eval.json");
        if (!out) throw InvalidInput("cannot write " + (m.output / "eval.json").string());
        out << r.json() << '\n';
    }
    return r;
}

std::vector<std::uint8_t> aop_to_rgb(const AoPMap& aop)
{
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(aop.width) * aop.height * 3, 0);
    for (int y = 0; y < aop.height; ++y)
        for (int x = 0; x < aop.width; ++x) {
            if (!aop.ok(x, y)) continue;
            hsv_to_rgb(2.0 * aop.at(x, y), &rgb[(static_cast<std::size_t>(y) * aop.width + x) * 3]);
        }
    return rgb;
}

void cmd_aop(const Manifest& m, std::ostream& log)
{
    const Dataset data = read_dataset(require_dataset(m));
    ensure_dir(m.output);
    const int n = static_cast<int>(data.views.size());
    if (m.aop_view >= n) throw InvalidInput("aop.view is out of range");
    for (int i = 0; i < n; ++i) {
        if (m.aop_view >= 0 && i != m.aop_view) continue;
        const AoPMap& a = data.views[i].aop;
        char name[32];
        std::snprintf(name, sizeof name, "aop_view_%02d", i);
        write_png(m.output / (std::string(name) + ".png"), a.width, a.height, 3, aop_to_rgb(a));
        FloatImage raw(a.width, a.height, 1);
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) raw.at(x, y) = a.ok(x, y) ? static_cast<float>(a.at(x, y)) : -1.0f;
        write_pfm(m.output / (std::string(name) + ".pfm"), raw);
        log << "wrote " << (m.output / (std::string(name) + ".png")).string() << '\n';
    }
    write_manifest(m, m.output / "manifest.json");
}

// ---------------------------------------------------------------------------

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Polarimetric multi-view SDF reconstruction"};
    app.require_subcommand(1);
    std::string manifest_path;
    int threads = -1;
    std::vector<CLI::App*> subs;
    for (const auto& [name, desc] : std::vector<std::pair<std::string, std::string>>{
             {"render", "forward-render a synthetic polarimetric dataset"},
             {"reconstruct", "optimize SDF and appearance fields from a dataset"},
             {"eval", "Chamfer distance and normal error against ground truth"},
             {"aop", "write angle-of-polarization maps of a dataset"}}) {
        CLI::App* s = app.add_subcommand(name, desc);
        s->add_option("manifest", manifest_path, "JSON manifest")->required();
        s->add_option("--threads", threads, "worker threads (default POLARSDF_THREADS or 1)");
        s->allow_extras();
        s->footer("Any manifest field can be overridden with --section.key=value, e.g. --train.iterations=0 or --ablate=no-Lg.");
        subs.push_back(s);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = nullptr;
    for (auto* s : subs)
        if (s->parsed()) sub = s;

    try {
        std::vector<std::string> overrides;
        const auto extras = sub->remaining();
        for (std::size_t i = 0; i < extras.size(); ++i) {
            const std::string& tok = extras[i];
            if (tok.rfind("--", 0) != 0) throw InvalidInput("unexpected argument '" + tok + "'");
            std::string kv = tok.substr(2);
            if (kv.find('=') == std::string::npos) {
                if (i + 1 >= extras.size()) throw InvalidInput("override '" + tok + "' has no value");
                kv += "=" + extras[++i];
            }
            overrides.push_back(kv);
        }
        if (threads >= 0) overrides.push_back("threads=" + std::to_string(threads));
        const Manifest m = load_manifest(manifest_path, overrides);

        const std::string name = sub->get_name();
        if (name == "render") cmd_render(m, out);
        else if (name == "reconstruct") cmd_reconstruct(m, out);
        else if (name == "eval") cmd_eval(m, out);
        else cmd_aop(m, out);
        return 0;
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace polarsdf
