#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "polarsdf/dataset.hpp"
#include "polarsdf/difftape.hpp"
#include "polarsdf/fields.hpp"
#include "polarsdf/render.hpp"

namespace polarsdf {

struct LossWeights {
    double lambda_g = 0.1;
    double lambda_m = 0.1;
    double lambda_e = 0.1;

    void validate() const;
};

struct TrainConfig {
    int iterations = 3000;
    int rays_per_batch = 512;
    int geometric_points = 256;
    int eikonal_points = 256;
    double background_fraction = 0.25;
    /// Share of background rays drawn from outside pixels within
    /// `silhouette_band` pixels of the mask; the rest are uniform.
    double band_fraction = 0.75;
    int silhouette_band = 2;
    /// Background rays also enter the photometric loss (observed Stokes of the backdrop).
    bool photometric_background = true;

    double learning_rate = 5e-3;
    /// Cosine decay ends at learning_rate * final_lr_ratio.
    double final_lr_ratio = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Step size of the SDF grid relative to learning_rate. Adam moves every
    /// node by about one step per iteration, so SDF steps must stay well below
    /// the node spacing to keep the field a distance function.
    double sdf_lr_scale = 0.1;

    std::uint64_t seed = 0;
    int resolution = 64;
    /// Coarse-to-fine: training starts at resolution / 2^coarse_levels and
    /// doubles in equal steps over the first coarse_fraction of iterations.
    /// SDF steps scale with the node spacing of the current level.
    int coarse_levels = 2;
    double coarse_fraction = 0.3;
    double init_radius = 0.5;
    double s_init = 16.0;
    bool learn_s = true;

    int n_coarse = 64;
    int n_fine = 32;
    /// Volume samples at or below this weight are not shaded.
    double shade_min_weight = 1e-5;

    /// Stack both branches of every AoP row instead of taking the smaller residual.
    bool stack_both = false;
    bool disable_Lp = false;
    bool disable_Lg = false;

    int checkpoint_every = 500;
    int threads = 0;
    bool record_wall_time = true;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Loss terms on a single tape

/// Mean over rays of sum |s - s_obs| over (s0, s1, s2) and channels.
ad::Var loss_photometric(std::span<const std::array<StokesT<ad::Var>, 3>> predicted,
                         std::span<const std::array<StokesVector, 3>> observed);

/// Mean over points of sum_rows (t . n)^2 with n from the SDF normal. Rows with
/// an alternative branch use the smaller residual unless `stack_both`.
/// Points without rows are skipped and counted in `skipped`.
ad::Var loss_geometric(ad::Tape& tape, const FieldSet& fs, std::span<const TangentSystem> systems, bool stack_both,
                       int* skipped = nullptr);

/// Mean binary cross entropy of mask labels against opacities clamped to [1e-6, 1 - 1e-6].
ad::Var loss_mask(std::span<const ad::Var> opacity, std::span<const double> mask);

/// Mean (|grad f| - 1)^2.
ad::Var loss_eikonal(ad::Tape& tape, const FieldSet& fs, std::span<const Vec3> points);

struct LossTerms {
    ad::Var Lp, Lg, Lm, Le;
};

ad::Var total_loss(const LossTerms& terms, const LossWeights& w, bool disable_Lp = false, bool disable_Lg = false);

// ---------------------------------------------------------------------------
// Batched evaluation

struct PlannedRay {
    int view = 0;
    int px = 0, py = 0;
    Ray ray;
    std::vector<double> t;
    bool inside = false;
    std::array<StokesVector, 3> observed;
};

struct LossPlan {
    std::vector<PlannedRay> rays;
    std::vector<TangentSystem> surface;
    std::vector<Vec3> eikonal;
    /// Geometric samples dropped because they missed the surface or had no visible view.
    int skipped_points = 0;
};

/// Samples one iteration's rays, surface points and eikonal points. Sample
/// depths and intersections use the current fields and are then frozen.
LossPlan sample_plan(const FieldSet& fs, const Dataset& data, const TrainConfig& cfg, std::mt19937_64& rng);

/// Tangent rows for surface point x from every view that sees it unoccluded inside its mask.
TangentSystem visible_tangent_system(const FieldSet& fs, const Dataset& data, const Vec3& x);

struct LossBreakdown {
    double Lp = 0.0, Lg = 0.0, Lm = 0.0, Le = 0.0, total = 0.0;
};

/// Evaluates the total loss of a frozen plan; adds d total / d params into `grad`
/// (sized like fs.params()) when non-null. Deterministic for any thread count.
LossBreakdown evaluate_loss(const FieldSet& fs, const Dataset& data, const LossPlan& plan, const LossWeights& w,
                            const TrainConfig& cfg, std::vector<double>* grad);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Throws NumericalFailure naming the offending
/// parameter (via `describe`) on a non-finite gradient; params stay untouched then.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state, double lr,
               const AdamOptions& opt, const std::function<std::string(std::size_t)>& describe = {});

double cosine_lr(const TrainConfig& cfg, int iter);

struct TrainLogRow {
    int iter = 0;
    LossBreakdown loss;
    double s_sharp = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    FieldSet fields;
    std::vector<TrainLogRow> log;
    bool diverged = false;
    std::string message;
};

using CheckpointFn = std::function<void(int iter, const FieldSet&)>;
using ProgressFn = std::function<void(const TrainLogRow&)>;

/// Full training loop from the initial sphere. On divergence returns the last
/// good fields with `diverged` set.
TrainResult reconstruct(const Dataset& data, const TrainConfig& cfg, const LossWeights& w,
                        const CheckpointFn& on_checkpoint = {}, const ProgressFn& on_progress = {});

FieldSet initial_fields(const TrainConfig& cfg);
/// Grid resolution used at iteration `iter`.
int stage_resolution(const TrainConfig& cfg, int iter);

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path);

} // namespace polarsdf
