#include "polarsdf/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "polarsdf/io.hpp"

namespace polarsdf {

namespace {

using nlohmann::json;

json mat_json(const Mat3& m)
{
    json a = json::array();
    for (int r = 0; r < 3; ++r) a.push_back({m(r, 0), m(r, 1), m(r, 2)});
    return a;
}

Mat3 json_mat(const json& j)
{
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = j.at(r).at(c).get<double>();
    return m;
}

std::filesystem::path view_dir(const std::filesystem::path& dir, std::size_t i)
{
    char name[32];
    std::snprintf(name, sizeof name, "view_%02zu", i);
    return dir / name;
}

std::uint8_t dominance_code(Dominance d, bool inside)
{
    if (!inside) return 0;
    switch (d) {
    case Dominance::diffuse: return 1;
    case Dominance::specular: return 2;
    case Dominance::unknown: return 3;
    }
    return 3;
}

} // namespace

void Dataset::validate() const
{
    if (views.empty()) throw InvalidInput("dataset has no views");
    if (!(eta > 1.0)) throw InvalidInput("dataset refractive index must exceed 1");
    for (const auto& v : views) {
        if (v.image.width != v.camera.width() || v.image.height != v.camera.height()) {
            throw InvalidInput("view image size differs from its camera");
        }
        v.image.validate();
        if (v.aop.width != v.image.width || v.aop.height != v.image.height) throw InvalidInput("AoP map size mismatch");
    }
}

Dataset render_dataset(const Scene& scene, int threads)
{
    if (scene.cameras.empty()) throw InvalidInput("scene has no cameras");
    Dataset data;
    data.eta = scene.material.eta;
    for (const auto& cam : scene.cameras) {
        RenderedView r = render_scene(scene, cam, threads);
        View v;
        v.camera = cam;
        v.image = std::move(r.image);
        v.aop = std::move(r.aop);
        v.normals = std::move(r.normals);
        v.dominance = std::move(r.dominance);
        data.views.push_back(std::move(v));
    }
    return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InvalidInput("cannot create " + dir.string() + ": " + ec.message());

    json cams = json::array();
    for (std::size_t i = 0; i < data.views.size(); ++i) {
        const View& v = data.views[i];
        const Camera& c = v.camera;
        cams.push_back({{"K", mat_json(c.K())},
                        {"R", mat_json(c.R())},
                        {"t", {c.t().x(), c.t().y(), c.t().z()}},
                        {"width", c.width()},
                        {"height", c.height()}});

        const auto vd = view_dir(dir, i);
        std::filesystem::create_directories(vd, ec);
        if (ec) throw InvalidInput("cannot create " + vd.string() + ": " + ec.message());
        const int w = v.image.width, h = v.image.height;

        for (int comp = 0; comp < 4; ++comp) {
            FloatImage img(w, h, 3);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int ch = 0; ch < 3; ++ch) {
                        const StokesVector& s = v.image.at(x, y, ch);
                        const double val = comp == 0 ? s.s0 : comp == 1 ? s.s1 : comp == 2 ? s.s2 : s.s3;
                        img.at(x, y, ch) = static_cast<float>(val);
                    }
            write_pfm(vd / ("s" + std::to_string(comp) + ".pfm"), img);
        }

        std::vector<std::uint8_t> mask(v.image.mask.size());
        for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = v.image.mask[p] ? 255 : 0;
        write_png(vd / "mask.png", w, h, 1, mask);

        FloatImage aop(w, h, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) aop.at(x, y) = v.aop.ok(x, y) ? static_cast<float>(v.aop.at(x, y)) : -1.0f;
        write_pfm(vd / "aop.pfm", aop);

        if (!v.normals.empty()) {
            FloatImage nrm(w, h, 3);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int a = 0; a < 3; ++a) nrm.at(x, y, a) = static_cast<float>(v.normals[static_cast<std::size_t>(y) * w + x][a]);
            write_pfm(vd / "normal.pfm", nrm);
        }
        if (!v.dominance.empty()) {
            std::vector<std::uint8_t> dom(v.dominance.size());
            for (std::size_t p = 0; p < dom.size(); ++p) dom[p] = dominance_code(v.dominance[p], v.image.mask[p] != 0);
            write_png(vd / "dominance.png", w, h, 1, dom);
        }
    }
    std::ofstream out(dir / "cameras.json");
    if (!out) throw InvalidInput("cannot write " + (dir / "cameras.json").string());
    out << json{{"eta", data.eta}, {"views", cams}}.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "cameras.json");
    if (!in) throw InvalidInput("no cameras.json in " + dir.string());
    json meta;
    try {
        meta = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidInput("cameras.json: " + std::string(e.what()));
    }

    Dataset data;
    try {
        data.eta = meta.at("eta").get<double>();
        const json& cams = meta.at("views");
        for (std::size_t i = 0; i < cams.size(); ++i) {
            const json& c = cams[i];
            const auto& tj = c.at("t");
            View v;
            v.camera = Camera(json_mat(c.at("K")), json_mat(c.at("R")), Vec3(tj.at(0), tj.at(1), tj.at(2)),
                              c.at("width").get<int>(), c.at("height").get<int>());
            const int w = v.camera.width(), h = v.camera.height();
            const auto vd = view_dir(dir, i);

            v.image = PolarizedImage(w, h, 3);
            for (int comp = 0; comp < 4; ++comp) {
                const FloatImage img = read_pfm(vd / ("s" + std::to_string(comp) + ".pfm"));
                if (img.width != w || img.height != h || img.channels != 3) throw InvalidInput("Stokes image size mismatch in " + vd.string());
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        for (int ch = 0; ch < 3; ++ch) {
                            StokesVector& s = v.image.at(x, y, ch);
                            const double val = img.at(x, y, ch);
                            (comp == 0 ? s.s0 : comp == 1 ? s.s1 : comp == 2 ? s.s2 : s.s3) = val;
                        }
            }
            int mw = 0, mh = 0;
            const auto mask = read_png_gray(vd / "mask.png", mw, mh);
            if (mw != w || mh != h) throw InvalidInput("mask size mismatch in " + vd.string());
            for (std::size_t p = 0; p < mask.size(); ++p) v.image.mask[p] = mask[p] > 127 ? 1 : 0;
            v.aop = aop_map(v.image);

            if (std::filesystem::exists(vd / "normal.pfm")) {
                const FloatImage nrm = read_pfm(vd / "normal.pfm");
                if (nrm.width != w || nrm.height != h || nrm.channels != 3) throw InvalidInput("normal map size mismatch in " + vd.string());
                v.normals.resize(static_cast<std::size_t>(w) * h);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        v.normals[static_cast<std::size_t>(y) * w + x] = Vec3(nrm.at(x, y, 0), nrm.at(x, y, 1), nrm.at(x, y, 2));
            }
            if (std::filesystem::exists(vd / "dominance.png")) {
                int dw = 0, dh = 0;
                const auto dom = read_png_gray(vd / "dominance.png", dw, dh);
                if (dw != w || dh != h) throw InvalidInput("dominance map size mismatch in " + vd.string());
                v.dominance.resize(dom.size());
                for (std::size_t p = 0; p < dom.size(); ++p) {
                    v.dominance[p] = dom[p] == 1 ? Dominance::diffuse : dom[p] == 2 ? Dominance::specular : Dominance::unknown;
                }
            }
            data.views.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw InvalidInput("cameras.json: " + std::string(e.what()));
    }
    data.validate();
    return data;
}

} // namespace polarsdf
