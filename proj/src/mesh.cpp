#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "polarsdf/fields.hpp"

namespace polarsdf {

void Mesh::validate() const
{
    const auto nv = static_cast<std::int32_t>(vertices.size());
    for (const auto& v : vertices) {
        if (!v.allFinite()) throw InvalidInput("mesh vertex is not finite");
    }
    for (const auto& t : triangles) {
        for (std::int32_t i : t) {
            if (i < 0 || i >= nv) throw InvalidInput("mesh triangle index out of range");
        }
    }
    if (!normals.empty() && normals.size() != vertices.size()) throw InvalidInput("mesh normal count differs from vertex count");
}

double Mesh::area() const
{
    double a = 0.0;
    for (const auto& t : triangles) {
        a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
    }
    return a;
}

void write_obj(const Mesh& mesh, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << std::setprecision(9);
    for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& n : mesh.normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
    const bool with_normals = mesh.normals.size() == mesh.vertices.size() && !mesh.normals.empty();
    for (const auto& t : mesh.triangles) {
        out << 'f';
        for (std::int32_t i : t) {
            out << ' ' << i + 1;
            if (with_normals) out << "//" << i + 1;
        }
        out << '\n';
    }
    if (!out) throw InvalidInput("failed writing " + path.string());
}

Mesh read_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    Mesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 v;
            ss >> v.x() >> v.y() >> v.z();
            mesh.vertices.push_back(v);
        } else if (tag == "vn") {
            Vec3 n;
            ss >> n.x() >> n.y() >> n.z();
            mesh.normals.push_back(n);
        } else if (tag == "f") {
            std::vector<std::int32_t> idx;
            std::string tok;
            while (ss >> tok) idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
            // Fan-triangulate polygons.
            for (std::size_t k = 2; k < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k - 1], idx[k]});
        }
    }
    if (mesh.normals.size() != mesh.vertices.size()) mesh.normals.clear();
    mesh.validate();
    return mesh;
}

void save_checkpoint(const FieldSet& fs, const std::filesystem::path& path)
{
    nlohmann::json header;
    header["format"] = "polarsdf-fieldset";
    header["version"] = 1;
    header["resolution"] = fs.resolution();
    header["dtype"] = "f64le";
    header["sh_degree"] = kShDegree;
    nlohmann::json blocks = nlohmann::json::array();
    for (auto b : {FieldSet::Block::sdf, FieldSet::Block::diffuse, FieldSet::Block::rough, FieldSet::Block::env,
                   FieldSet::Block::sharpness}) {
        const auto [lo, hi] = fs.block_range(b);
        blocks.push_back({{"name", FieldSet::block_name(b)}, {"offset", lo}, {"count", hi - lo}});
    }
    header["blocks"] = blocks;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto& p = fs.params();
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!out) throw InvalidInput("failed writing " + path.string());
}

FieldSet load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (1u << 20)) throw InvalidInput("malformed checkpoint header in " + path.string());
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    if (header.value("format", "") != "polarsdf-fieldset" || header.value("dtype", "") != "f64le") {
        throw InvalidInput("unsupported checkpoint format in " + path.string());
    }
    FieldSet fs(header.at("resolution").get<int>());
    auto& p = fs.params();
    in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!in) throw InvalidInput("truncated checkpoint " + path.string());
    for (double v : p) {
        if (!std::isfinite(v)) throw InvalidInput("checkpoint contains non-finite parameters");
    }
    return fs;
}

} // namespace polarsdf
