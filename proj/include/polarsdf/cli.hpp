#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "polarsdf/evalkit.hpp"
#include "polarsdf/optim.hpp"
#include "polarsdf/render.hpp"

namespace polarsdf {

enum class Ablation { none, no_Lp, no_Lg, stack_both };

/// A validated run description. `json` holds the resolved document (defaults
/// filled in, overrides applied) that is copied next to every output.
struct Manifest {
    nlohmann::json json;

    std::optional<Scene> scene;
    std::filesystem::path dataset;
    std::filesystem::path output;
    TrainConfig train;
    LossWeights weights;
    Ablation ablation = Ablation::none;
    int threads = 0;

    /// Mesh (.obj) or checkpoint (.ckpt) evaluated by `eval`.
    std::filesystem::path estimate;
    std::size_t eval_samples = 100000;
    std::uint64_t eval_seed = 0;
    int gt_mesh_resolution = 128;

    int aop_view = -1; // all views
};

/// Schema-checks `doc` (unknown keys are errors) and fills defaults.
Manifest parse_manifest(const nlohmann::json& doc);
Manifest load_manifest(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Applies "a.b.c=value"; the value is parsed as JSON when possible and as a
/// string otherwise. Bare train/weights keys resolve into their section.
void apply_override(nlohmann::json& doc, const std::string& assignment);

Shape parse_shape(const nlohmann::json& j);
std::string ablation_suffix(Ablation a);

// Commands. Each writes a resolved manifest.json next to its outputs.
void cmd_render(const Manifest& m, std::ostream& log);
TrainResult cmd_reconstruct(const Manifest& m, std::ostream& log);
EvalReport cmd_eval(const Manifest& m, std::ostream& log);
void cmd_aop(const Manifest& m, std::ostream& log);

/// HSV encoding with hue = 2 * AoP; undefined pixels are black.
std::vector<std::uint8_t> aop_to_rgb(const AoPMap& aop);

/// Entry point: `polarsdf <render|reconstruct|eval|aop> manifest.json [--key=value ...]`.
/// Returns 0 on success, 2 on invalid input, 3 on numerical failure.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

} // namespace polarsdf
