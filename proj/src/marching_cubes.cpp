#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "polarsdf/fields.hpp"

namespace polarsdf {

namespace {

// Classic marching-cubes triangle table (Lorensen & Cline / Bourke corner
// and edge numbering).
constexpr int kTriTable[256][16] = {
#include "mc_tri_table.inc"
};

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

} // namespace

Mesh marching_cubes(const FieldSet& fs, double iso)
{
    const int n = fs.resolution();
    const auto& p = fs.params();

    bool has_neg = false, has_pos = false;
    for (std::size_t i = 0; i < fs.node_count(); ++i) {
        if (p[i] < iso) has_neg = true;
        else has_pos = true;
    }
    if (!has_neg || !has_pos) throw EmptySurface();

    Mesh mesh;
    // Vertices are keyed by (lower grid node, axis) so neighbouring cells share them.
    std::unordered_map<std::int64_t, std::int32_t> edge_vertex;

    auto vertex_on_edge = [&](int i, int j, int k, int e) -> std::int32_t {
        const int* ca = kCorner[kEdgeCorners[e][0]];
        const int* cb = kCorner[kEdgeCorners[e][1]];
        int ax = 0;
        while (ca[ax] == cb[ax]) ++ax;
        const int lo_i = i + std::min(ca[0], cb[0]);
        const int lo_j = j + std::min(ca[1], cb[1]);
        const int lo_k = k + std::min(ca[2], cb[2]);
        const std::int64_t key = (static_cast<std::int64_t>(fs.node_index(lo_i, lo_j, lo_k)) * 3) + ax;
        const auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;

        const Vec3 pa = fs.node_position(i + ca[0], j + ca[1], k + ca[2]);
        const Vec3 pb = fs.node_position(i + cb[0], j + cb[1], k + cb[2]);
        const double va = p[fs.node_index(i + ca[0], j + ca[1], k + ca[2])];
        const double vb = p[fs.node_index(i + cb[0], j + cb[1], k + cb[2])];
        const double denom = vb - va;
        const double t = denom == 0.0 ? 0.5 : std::clamp((iso - va) / denom, 0.0, 1.0);
        const Vec3 x = pa + t * (pb - pa);
        const auto id = static_cast<std::int32_t>(mesh.vertices.size());
        mesh.vertices.push_back(x);
        Vec3 g = fs.sdf_gradient(x);
        const double gn = g.norm();
        mesh.normals.push_back(gn > 0.0 ? Vec3(g / gn) : Vec3::UnitZ());
        edge_vertex.emplace(key, id);
        return id;
    };

    for (int k = 0; k + 1 < n; ++k) {
        for (int j = 0; j + 1 < n; ++j) {
            for (int i = 0; i + 1 < n; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    if (p[fs.node_index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])] < iso) cube |= 1 << c;
                }
                if (cube == 0 || cube == 255) continue;
                const int* tri = kTriTable[cube];
                for (int t = 0; tri[t] != -1; t += 3) {
                    const std::int32_t a = vertex_on_edge(i, j, k, tri[t]);
                    const std::int32_t b = vertex_on_edge(i, j, k, tri[t + 1]);
                    const std::int32_t c = vertex_on_edge(i, j, k, tri[t + 2]);
                    if (a == b || b == c || a == c) continue;
                    // The table winds triangles clockwise seen from outside.
                    mesh.triangles.push_back({a, c, b});
                }
            }
        }
    }
    return mesh;
}

} // namespace polarsdf
