#include "registration.hpp"

#include <chrono>
#include <cmath>

namespace mplreg {

const char* to_string(StageKind kind)
{
    return kind == StageKind::Affine ? "affine" : "dense";
}

void RegistrationPair::validate() const
{
    require_compatible(moving.grid(), fixed.grid(), "registration pair");
    require_compatible(moving_label.grid(), fixed.grid(), "registration pair moving label");
    require_compatible(fixed_label.grid(), fixed.grid(), "registration pair fixed label");
}

// ---------------------------------------------------------------------------

Adam::Adam(std::size_t dimension, AdamSettings settings)
    : s_(settings), m_(dimension, 0.0), v_(dimension, 0.0)
{}

void Adam::step(std::span<double> params, std::span<const double> gradient)
{
    if (params.size() != m_.size() || gradient.size() != m_.size())
        fail(ErrorCode::InvalidArgument, "Adam state and gradient dimensions differ");
    ++t_;
    const double c1 = 1.0 - std::pow(s_.beta1, t_);
    const double c2 = 1.0 - std::pow(s_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = gradient[i];
        m_[i] = s_.beta1 * m_[i] + (1.0 - s_.beta1) * g;
        v_[i] = s_.beta2 * v_[i] + (1.0 - s_.beta2) * g * g;
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        params[i] -= s_.step_size * mhat / (std::sqrt(vhat) + s_.eps);
    }
}

// ---------------------------------------------------------------------------

void RegistrationConfig::validate() const
{
    if (cascades < 0)
        fail(ErrorCode::Config, "cascades must be >= 0");
    if (iters_affine < 1 || iters_cascade < 1)
        fail(ErrorCode::Config, "iteration counts must be >= 1");
    if (!(step_size >= 0.0) || !(affine_step_size >= 0.0))
        fail(ErrorCode::Config, "step sizes must be non-negative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
        fail(ErrorCode::Config, "Adam betas must lie in [0,1) and eps must be positive");
    if (!(stop_tol >= 0.0) || stop_window < 1)
        fail(ErrorCode::Config, "stop_tol must be >= 0 and stop_window >= 1");
    if (!(increment_smoothing >= 0.0))
        fail(ErrorCode::Config, "increment_smoothing must be >= 0");
    if (!(max_neg_jacobian_pct > 0.0))
        fail(ErrorCode::Config, "max_neg_jacobian_pct must be positive");
    loss.weights.validate();
    if (loss.histogram.bins < 2 || !(loss.histogram.parzen_sigma >= 0.0))
        fail(ErrorCode::Config, "histogram needs >= 2 bins and a non-negative parzen sigma");
}

AffineParameterization::AffineParameterization(const GridMeta& grid)
{
    int largest = 1;
    for (int d = 0; d < 3; ++d) {
        center[std::size_t(d)] = 0.5 * double(grid.dims[d] - 1);
        largest = std::max(largest, grid.dims[d]);
    }
    scale = std::max(1.0, 0.5 * double(largest));
}

AffineParams AffineParameterization::to_affine(std::span<const double> theta) const
{
    AffineParams a;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            a.values[std::size_t(4 * r + c)] = (r == c ? 1.0 : 0.0) + theta[std::size_t(3 * r + c)] / scale;
    for (int r = 0; r < 3; ++r) {
        double ac = 0.0;
        for (int c = 0; c < 3; ++c)
            ac += a.linear(r, c) * center[std::size_t(c)];
        a.values[std::size_t(4 * r + 3)] = center[std::size_t(r)] + theta[std::size_t(9 + r)] - ac;
    }
    return a;
}

std::vector<double> AffineParameterization::from_affine(const AffineParams& a) const
{
    std::vector<double> theta(12);
    for (int r = 0; r < 3; ++r) {
        double ac = 0.0;
        for (int c = 0; c < 3; ++c) {
            theta[std::size_t(3 * r + c)] = (a.linear(r, c) - (r == c ? 1.0 : 0.0)) * scale;
            ac += a.linear(r, c) * center[std::size_t(c)];
        }
        theta[std::size_t(9 + r)] = a.translation(r) - center[std::size_t(r)] + ac;
    }
    return theta;
}

std::vector<double> AffineParameterization::chain(const std::array<double, 12>& g) const
{
    std::vector<double> out(12);
    for (int r = 0; r < 3; ++r) {
        const double gt = g[std::size_t(4 * r + 3)];
        for (int c = 0; c < 3; ++c)
            out[std::size_t(3 * r + c)] = (g[std::size_t(4 * r + c)] - gt * center[std::size_t(c)]) / scale;
        out[std::size_t(9 + r)] = gt;
    }
    return out;
}

CascadeParameterization::CascadeParameterization(const GridMeta& g, double smoothing)
    : grid(g), kernel(GaussianKernel::make(smoothing))
{}

DisplacementField CascadeParameterization::increment(std::span<const double> raw) const
{
    const std::size_t n = grid.voxel_count();
    if (raw.size() != 3 * n)
        fail(ErrorCode::InvalidArgument, "cascade parameters do not match the grid");
    std::array<std::vector<double>, 3> comp;
    for (std::size_t c = 0; c < 3; ++c) {
        comp[c].resize(n);
        gaussian_filter(grid, raw.subspan(c * n, n), comp[c], kernel);
    }
    return DisplacementField(grid, std::move(comp));
}

std::vector<double> CascadeParameterization::chain(const DisplacementField& accumulated,
                                                   const DisplacementField& inc,
                                                   const DisplacementField& dl_dcomposed) const
{
    const DisplacementField g = compose_gradient(accumulated, inc, dl_dcomposed);
    const std::size_t n = grid.voxel_count();
    std::vector<double> out(3 * n);
    for (int c = 0; c < 3; ++c)
        gaussian_filter_adjoint(grid, g.component(c), std::span<double>(out).subspan(std::size_t(c) * n, n),
                                kernel);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Evaluation {
    LossBreakdown loss;
    std::vector<double> gradient;
    double pct_neg_jacobian = 0.0;
    /// False when the iterate breaks a stage constraint and must not be kept.
    bool admissible = true;
};

using StageEvaluator = std::function<Evaluation(std::span<const double>)>;

/// Adam over one stage; best receives the best admissible iterate and is
/// valid even when this throws. Every iterate is evaluated before it is
/// stepped from, so the starting point competes for best. Throws
/// DivergenceError (without payload; callers attach it) on a non-finite loss.
void optimize_stage(std::vector<double> params, const StageEvaluator& eval, AdamSettings adam, int iterations,
                    const RegistrationConfig& config, StageTrace& trace, const ProgressCallback& progress,
                    std::vector<double>& best)
{
    Adam optimizer(params.size(), adam);
    best = params;
    double best_total = std::numeric_limits<double>::infinity();
    bool have_best = false;
    std::vector<double> totals;
    for (int it = 0; it < iterations; ++it) {
        Evaluation e = eval(params);
        if (!std::isfinite(e.loss.total))
            throw DivergenceError("non-finite loss in " + std::string(to_string(trace.kind)) + " stage " +
                                      std::to_string(trace.index) + " at iteration " + std::to_string(it),
                                  {}, std::nullopt, std::nullopt);
        for (double g : e.gradient)
            if (!std::isfinite(g))
                throw DivergenceError("non-finite gradient in stage " + std::to_string(trace.index), {},
                                      std::nullopt, std::nullopt);
        TraceEntry entry{it, e.loss, e.pct_neg_jacobian};
        trace.entries.push_back(entry);
        if (progress)
            progress(trace, entry);
        if (!e.admissible)
            break;
        if (!have_best || e.loss.total < best_total) {
            have_best = true;
            best_total = e.loss.total;
            best = params;
            trace.best = e.loss;
            trace.best_iteration = it;
        }
        totals.push_back(e.loss.total);
        const std::size_t w = std::size_t(config.stop_window);
        if (totals.size() > w) {
            const double before = totals[totals.size() - 1 - w];
            const double rel = std::abs(before - e.loss.total) / std::max(std::abs(before), 1e-12);
            if (rel < config.stop_tol)
                break;
        }
        if (it + 1 < iterations)
            optimizer.step(params, e.gradient);
    }
}

AdamSettings adam_settings(const RegistrationConfig& c, double step)
{
    return {step, c.adam_beta1, c.adam_beta2, c.adam_eps};
}

AffineParams run_affine(const MplObjective& objective, const RegistrationConfig& config, StageTrace& trace,
                        const ProgressCallback& progress)
{
    const GridMeta& grid = objective.grid();
    AffineParameterization param(grid);
    trace.kind = StageKind::Affine;
    trace.index = 0;
    StageEvaluator eval = [&](std::span<const double> theta) {
        Evaluation e;
        DisplacementField u = affine_to_field(param.to_affine(theta), grid);
        DisplacementField g;
        e.loss = objective.evaluate(u, &g);
        e.gradient = param.chain(affine_gradient(g));
        return e;
    };
    std::vector<double> theta;
    try {
        optimize_stage(param.from_affine(AffineParams::identity()), eval,
                       adam_settings(config, config.affine_step_size), config.iters_affine, config, trace, progress,
                       theta);
    } catch (DivergenceError& e) {
        throw DivergenceError(e.what(), {trace}, param.to_affine(theta), std::nullopt);
    }
    return param.to_affine(theta);
}

DisplacementField run_cascade(const MplObjective& objective, const DisplacementField& accumulated,
                              const RegistrationConfig& config, int index, StageTrace& trace,
                              const ProgressCallback& progress)
{
    const GridMeta& grid = objective.grid();
    require_compatible(accumulated.grid(), grid, "cascade accumulated field");
    trace.kind = StageKind::Dense;
    trace.index = index;
    const CascadeParameterization param(grid, config.increment_smoothing);
    const std::size_t n = grid.voxel_count();

    StageEvaluator eval = [&](std::span<const double> raw) {
        Evaluation e;
        DisplacementField inc = param.increment(raw);
        DisplacementField composed = compose(accumulated, inc);
        DisplacementField g;
        e.loss = objective.evaluate(composed, &g);
        e.pct_neg_jacobian = 100.0 * fraction_negative_jacobian(composed);
        e.admissible = e.pct_neg_jacobian <= config.max_neg_jacobian_pct;
        e.gradient = param.chain(accumulated, inc, g);
        return e;
    };

    std::vector<double> raw;
    try {
        optimize_stage(std::vector<double>(3 * n, 0.0), eval, adam_settings(config, config.step_size),
                       config.iters_cascade, config, trace, progress, raw);
    } catch (DivergenceError& e) {
        throw DivergenceError(e.what(), {trace}, std::nullopt, compose(accumulated, param.increment(raw)));
    }
    return compose(accumulated, param.increment(raw));
}

MplObjective make_objective(const RegistrationPair& pair, const RegistrationConfig& config)
{
    pair.validate();
    config.validate();
    return MplObjective(pair.moving, pair.moving_label, pair.fixed, pair.fixed_label, config.loss);
}

void summarize(StageTrace& trace, const RegistrationPair& pair, const DisplacementField& field)
{
    trace.dice_after = dice(warp(pair.moving_label, field), pair.fixed_label);
    trace.pct_neg_jacobian_after = 100.0 * fraction_negative_jacobian(field);
}

} // namespace

AffineParams register_affine(const RegistrationPair& pair, const RegistrationConfig& config, StageTrace* trace,
                             const ProgressCallback& progress)
{
    MplObjective objective = make_objective(pair, config);
    StageTrace local;
    AffineParams a = run_affine(objective, config, trace ? *trace : local, progress);
    return a;
}

DisplacementField register_cascade(const RegistrationPair& pair, const DisplacementField& accumulated,
                                   const RegistrationConfig& config, int cascade_index, StageTrace* trace,
                                   const ProgressCallback& progress)
{
    MplObjective objective = make_objective(pair, config);
    StageTrace local;
    return run_cascade(objective, accumulated, config, cascade_index, trace ? *trace : local, progress);
}

RegistrationResult register_images(const RegistrationPair& pair, const RegistrationConfig& config,
                                   const ProgressCallback& progress)
{
    const auto start = std::chrono::steady_clock::now();
    MplObjective objective = make_objective(pair, config);
    RegistrationResult result;

    StageTrace affine_trace;
    try {
        result.affine = run_affine(objective, config, affine_trace, progress);
    } catch (DivergenceError& e) {
        throw DivergenceError(e.what(), {affine_trace}, e.last_affine, std::nullopt);
    }
    DisplacementField accumulated = affine_to_field(result.affine, pair.fixed.grid());
    summarize(affine_trace, pair, accumulated);
    result.stages.push_back(std::move(affine_trace));
    if (config.keep_stage_fields)
        result.stage_fields.push_back(accumulated);

    for (int n = 1; n <= config.cascades; ++n) {
        StageTrace trace;
        try {
            accumulated = run_cascade(objective, accumulated, config, n, trace, progress);
        } catch (DivergenceError& e) {
            auto stages = result.stages;
            stages.push_back(trace);
            throw DivergenceError(e.what(), std::move(stages), result.affine, accumulated);
        }
        summarize(trace, pair, accumulated);
        result.stages.push_back(std::move(trace));
        if (config.keep_stage_fields)
            result.stage_fields.push_back(accumulated);
    }

    result.warped_moving = warp(pair.moving, accumulated);
    result.warped_label = warp(pair.moving_label, accumulated);
    result.final_field = std::move(accumulated);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.metrics = evaluate_metrics(result.warped_label, pair.fixed_label, &result.final_field, seconds);
    return result;
}

Volume apply_to_companion(const RegistrationResult& result, const Volume& companion)
{
    require_compatible(companion.grid(), result.final_field.grid(), "apply_to_companion");
    return warp(companion, result.final_field);
}

} // namespace mplreg
