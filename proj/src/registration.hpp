#pragma once

#include "losses.hpp"
#include "metrics.hpp"
#include "transform.hpp"

#include <functional>
#include <optional>

namespace mplreg {

/// Moving/fixed images and their lung labels on one grid, intensities in [0,1].
struct RegistrationPair {
    Volume moving;
    Volume fixed;
    LabelMask moving_label;
    LabelMask fixed_label;

    void validate() const;
};

struct AdamSettings {
    double step_size = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First-order optimizer with bias-corrected moment estimates.
class Adam {
public:
    Adam(std::size_t dimension, AdamSettings settings);

    /// One in-place update of params from gradient.
    void step(std::span<double> params, std::span<const double> gradient);

    int iterations() const noexcept { return t_; }

private:
    AdamSettings s_;
    std::vector<double> m_;
    std::vector<double> v_;
    int t_ = 0;
};

struct RegistrationConfig {
    int cascades = 5;
    int iters_affine = 100;
    int iters_cascade = 60;
    /// Adam step for dense increments, voxels per iteration.
    double step_size = 0.1;
    /// Adam step for the affine stage. Linear entries are scaled so one unit
    /// moves the grid boundary by one voxel; translations are in voxels.
    double affine_step_size = 0.2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossSettings loss;
    /// Relative change of the total loss over stop_window iterations below
    /// which a stage stops early.
    double stop_tol = 1e-6;
    int stop_window = 10;
    /// Gaussian sigma (voxels) applied to the raw increment parameters; 0
    /// optimizes the increment voxelwise.
    double increment_smoothing = 2.0;
    /// A cascade stops once its composed field folds in more than this
    /// percentage of voxels; later iterates are not kept.
    double max_neg_jacobian_pct = 5.0;
    /// Keep each stage's composed field in the result.
    bool keep_stage_fields = false;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class StageKind { Affine, Dense };

/// Parameters of one stage: an affine map or a dense increment field.
struct StageParameters {
    StageKind kind = StageKind::Affine;
    std::optional<AffineParams> affine;
    std::optional<DisplacementField> field;
};

struct TraceEntry {
    int iteration = 0;
    LossBreakdown loss;
    /// Percent negative Jacobian of the composed field (dense stages only).
    double pct_neg_jacobian = 0.0;
};

struct StageTrace {
    StageKind kind = StageKind::Affine;
    /// 0 for the affine stage, n for cascade n.
    int index = 0;
    std::vector<TraceEntry> entries;
    LossBreakdown best;
    int best_iteration = 0;
    /// Dice of the moving label warped by the composed field after this stage.
    double dice_after = 0.0;
    double pct_neg_jacobian_after = 0.0;
};

struct RegistrationResult {
    DisplacementField final_field;
    Volume warped_moving;
    LabelMask warped_label;
    AffineParams affine;
    std::vector<StageTrace> stages;
    std::vector<DisplacementField> stage_fields;
    MetricsReport metrics;
};

/// Raised when a stage produces a non-finite loss. Carries what was finished.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& message, std::vector<StageTrace> stages,
                    std::optional<AffineParams> last_affine, std::optional<DisplacementField> last_field)
        : Error(ErrorCode::Divergence, message),
          stages(std::move(stages)),
          last_affine(std::move(last_affine)),
          last_field(std::move(last_field))
    {}

    std::vector<StageTrace> stages;
    std::optional<AffineParams> last_affine;
    std::optional<DisplacementField> last_field;
};

/// Called after every optimizer iteration.
using ProgressCallback = std::function<void(const StageTrace& stage, const TraceEntry& entry)>;

/// Affine stage from identity. Returns the best iterate; trace optional.
AffineParams register_affine(const RegistrationPair& pair, const RegistrationConfig& config,
                             StageTrace* trace = nullptr, const ProgressCallback& progress = {});

/// One cascade: optimizes an increment on top of accumulated and returns
/// compose(accumulated, best increment).
DisplacementField register_cascade(const RegistrationPair& pair, const DisplacementField& accumulated,
                                   const RegistrationConfig& config, int cascade_index = 1,
                                   StageTrace* trace = nullptr, const ProgressCallback& progress = {});

/// Affine stage, then config.cascades dense stages composed recursively.
RegistrationResult register_images(const RegistrationPair& pair, const RegistrationConfig& config,
                                   const ProgressCallback& progress = {});

/// Carries a volume co-aligned with the moving image into fixed space.
Volume apply_to_companion(const RegistrationResult& result, const Volume& companion);

/// Maps between AffineParams and the scaled parameter vector the affine
/// stage optimizes.
struct AffineParameterization {
    explicit AffineParameterization(const GridMeta& grid);

    AffineParams to_affine(std::span<const double> theta) const;
    std::vector<double> from_affine(const AffineParams& a) const;
    /// dL/dtheta from dL/d[A|t].
    std::vector<double> chain(const std::array<double, 12>& grad_affine) const;

    Vec3 center;
    double scale;
};

/// A cascade optimizes raw parameters v (3 x N, component-major); the
/// increment is the Gaussian-smoothed v and the stage field is
/// compose(accumulated, increment).
struct CascadeParameterization {
    CascadeParameterization(const GridMeta& grid, double smoothing);

    DisplacementField increment(std::span<const double> raw) const;
    /// dL/dv from dL/d(composed).
    std::vector<double> chain(const DisplacementField& accumulated, const DisplacementField& increment,
                              const DisplacementField& dl_dcomposed) const;

    GridMeta grid;
    GaussianKernel kernel;
};

const char* to_string(StageKind kind);

} // namespace mplreg
