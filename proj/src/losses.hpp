#pragma once

#include "image.hpp"
#include "transform.hpp"

#include <functional>

namespace mplreg {

// ---------------------------------------------------------------------------
// Gaussian scale space

/// Discrete Gaussian truncated at radius ceil(3 sigma) and renormalized.
/// sigma == 0 is the identity kernel.
struct GaussianKernel {
    double sigma = 0.0;
    int radius = 0;
    std::vector<double> weights{1.0};

    static GaussianKernel make(double sigma);
};

/// Separable convolution with clamp-to-edge boundaries.
void gaussian_filter(const GridMeta& g, std::span<const double> in, std::span<double> out, const GaussianKernel& k);

/// Transpose of gaussian_filter. Identical to it away from the boundary;
/// near the boundary the clamped taps fold back onto the edge voxel.
void gaussian_filter_adjoint(const GridMeta& g, std::span<const double> in, std::span<double> out,
                             const GaussianKernel& k);

template <class Tag>
Image<Tag> gaussian_filter(const Image<Tag>& v, double sigma)
{
    if (!(sigma >= 0.0))
        fail(ErrorCode::InvalidArgument, "gaussian sigma must be non-negative");
    std::vector<double> out(v.size());
    gaussian_filter(v.grid(), v.data(), out, GaussianKernel::make(sigma));
    if constexpr (std::is_same_v<Tag, LabelTag>) {
        for (double& x : out)
            x = std::clamp(x, 0.0, 1.0);
    }
    return Image<Tag>(v.grid(), std::move(out));
}

// ---------------------------------------------------------------------------
// Mutual information

struct HistogramSettings {
    int bins = 32;
    /// Parzen window width in bin units; 0 means hard nearest-bin counting.
    double parzen_sigma = 1.0;
};

/// Parzen weights of one intensity over the bins. Intensity v in [0,1] sits
/// at bin coordinate v * (bins - 1). The window is a Gaussian tapered to
/// zero value and slope at 3 sigma, normalized so each sample has unit mass.
class ParzenBinner {
public:
    explicit ParzenBinner(const HistogramSettings& s);

    int bins() const noexcept { return bins_; }
    /// Number of weight slots written by weights().
    int width() const noexcept { return width_; }

    /// Fills w[0..width) (and dw, the derivative wrt v, when non-null) for bins
    /// first .. first+width-1. Returns first.
    int weights(double v, double* w, double* dw) const noexcept;

private:
    int bins_;
    double sigma_;
    int width_;
    double tail_;
    double step_ratio_;
};

/// Joint distribution p(m,f), row index m. Rows/columns sum to the marginals.
struct JointHistogram {
    int bins = 0;
    double parzen_sigma = 0.0;
    std::vector<double> joint;
    std::vector<double> marginal_m;
    std::vector<double> marginal_f;

    double p(int m, int f) const { return joint[std::size_t(m) * std::size_t(bins) + std::size_t(f)]; }
};

/// Throws Domain when an intensity leaves [0,1] (1e-9 slack).
void check_normalized(std::span<const double> v, const char* what);

JointHistogram joint_histogram(const Volume& m, const Volume& f, const HistogramSettings& s = {},
                               const LabelMask* mask = nullptr);

/// -sum p log(p / (pm pf)); 0 when either marginal is degenerate.
double mutual_information_loss(const JointHistogram& h);

double mi_loss(const Volume& m, const Volume& f, const HistogramSettings& s = {}, const LabelMask* mask = nullptr);

/// d mi_loss / d m(x). Requires parzen_sigma > 0.
ScalarField mi_loss_gradient(const Volume& m, const Volume& f, const HistogramSettings& s = {},
                             const LabelMask* mask = nullptr);

// ---------------------------------------------------------------------------
// Gaussian-pyramid label loss

enum class GplMode { SoftDice, Mse };

constexpr double kSoftDiceEps = 1e-5;

struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double lambda = 2.0;
    std::vector<double> scales{0, 1, 2, 4, 8, 16};
    GplMode gpl_mode = GplMode::SoftDice;

    void validate() const;
};

double gpl_loss(const LabelMask& m_label, const LabelMask& f_label, std::span<const double> scales,
                GplMode mode = GplMode::SoftDice);

ScalarField gpl_loss_gradient(const LabelMask& m_label, const LabelMask& f_label, std::span<const double> scales,
                              GplMode mode = GplMode::SoftDice);

/// Fixed-label side of the GPL, filtered once per scale and reused. Since
/// a.b = m.(G^T b) and |a|^2 = m.(G^T G m), each scale costs one separable
/// pass per evaluation.
class GplTarget {
public:
    GplTarget(const LabelMask& f_label, std::vector<double> scales, GplMode mode);

    const GridMeta& grid() const noexcept { return grid_; }

    /// Loss for a moving label given as raw values on grid(); writes
    /// d loss / d label into grad when non-empty.
    double evaluate(std::span<const double> m_label, std::span<double> grad) const;

private:
    GridMeta grid_;
    std::vector<double> scales_;
    GplMode mode_;
    std::vector<GaussianKernel> kernels_;
    /// Per scale: G^T G f (the intersection weights) and |G f|^2.
    std::vector<std::vector<double>> target_;
    std::vector<double> filtered_sq_;
    /// Per scale and axis: dense M^T M of the 1-D filter.
    std::vector<std::array<std::vector<double>, 3>> gram_;
};

// ---------------------------------------------------------------------------
// Bending energy

/// Mean over interior voxels and components of
/// u_xx^2 + u_yy^2 + u_zz^2 + 2 u_xy^2 + 2 u_xz^2 + 2 u_yz^2.
double bending_energy(const DisplacementField& phi);

/// Writes d bending_energy / d u into grad (same grid, overwritten) and
/// returns the energy.
double bending_energy(const DisplacementField& phi, DisplacementField* grad);

DisplacementField bending_energy_gradient(const DisplacementField& phi);

// ---------------------------------------------------------------------------
// Combined loss

struct LossBreakdown {
    double mi = 0.0;
    double gpl = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

LossBreakdown combine(double mi, double gpl, double reg, const LossWeights& w);

LossBreakdown mpl_loss(const Volume& m_warped, const Volume& f, const LabelMask& m_label_warped,
                       const LabelMask& f_label, const DisplacementField& phi, const LossWeights& w,
                       const HistogramSettings& hist = {});

struct LossSettings {
    LossWeights weights;
    HistogramSettings histogram;
    /// Restrict the MI histogram to the fixed label (weighted by its values).
    bool mi_use_fixed_mask = false;
};

/// The registration objective: loss of a displacement field u applied to the
/// moving image and label, with its gradient wrt u.
class MplObjective {
public:
    MplObjective(const Volume& moving, const LabelMask& moving_label, const Volume& fixed,
                 const LabelMask& fixed_label, LossSettings settings);

    const GridMeta& grid() const noexcept { return fixed_.grid(); }
    const LossSettings& settings() const noexcept { return settings_; }

    /// Evaluates the loss at u; when grad is non-null it receives dL/du.
    LossBreakdown evaluate(const DisplacementField& u, DisplacementField* grad) const;

private:
    const Volume& moving_;
    const LabelMask& moving_label_;
    const Volume& fixed_;
    LossSettings settings_;
    ParzenBinner binner_;
    std::vector<int> fixed_first_;
    std::vector<double> fixed_w_;
    std::vector<double> mask_;
    GplTarget gpl_;
};

// ---------------------------------------------------------------------------
// Gradient checking

using ScalarFunction = std::function<double(std::span<const double>)>;
using GradientFunction = std::function<std::vector<double>(std::span<const double>)>;

/// max_i |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|) with central differences.
double finite_difference_check(const ScalarFunction& loss, const GradientFunction& gradient,
                               std::span<const double> params, double step = 1e-4);

} // namespace mplreg
