#pragma once

#include <filesystem>
#include <vector>

#include "polarsdf/geometry.hpp"
#include "polarsdf/polarimetry.hpp"
#include "polarsdf/render.hpp"

namespace polarsdf {

/// One calibrated polarimetric view.
struct View {
    Camera camera;
    PolarizedImage image;
    AoPMap aop;
    /// Ground-truth diagnostics; empty when unknown.
    std::vector<Vec3> normals;
    std::vector<Dominance> dominance;
};

struct Dataset {
    std::vector<View> views;
    double eta = 1.5;

    void validate() const;
};

/// Forward-renders every camera of `scene`.
Dataset render_dataset(const Scene& scene, int threads = 1);

/// Directory layout:
///   cameras.json                   intrinsics, rotation, translation, size per view, eta
///   view_XX/s0.pfm .. s3.pfm       3-channel Stokes components
///   view_XX/mask.png               255 inside the silhouette
///   view_XX/aop.pfm                AoP in [0, pi), -1 where undefined
///   view_XX/normal.pfm             ground-truth normals (zero outside)
///   view_XX/dominance.png          0 none, 1 diffuse, 2 specular, 3 unknown
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

} // namespace polarsdf
