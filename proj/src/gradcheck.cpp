#include "gradcheck.hpp"

#include "registration.hpp"

#include <random>

namespace mplreg {

namespace {

// The sharp Parzen window has large third derivatives, so MI needs a small
// step; the label and bending terms are smooth and prefer less roundoff.
constexpr double kStepMi = 1e-5;
constexpr double kStepSmooth = 1e-4;

struct Instance {
    GridMeta grid;
    Volume moving, fixed;
    LabelMask moving_label, fixed_label;
    DisplacementField field;
};

// Sample points keep their fractional parts away from voxel boundaries and
// stay inside the grid, so central differences never straddle a kink of
// the trilinear interpolant.
DisplacementField random_field(const GridMeta& g, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> frac(0.1, 0.9);
    DisplacementField u(g);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const int x[3] = {i, j, k};
                Vec3 d;
                for (int a = 0; a < 3; ++a) {
                    std::uniform_int_distribution<int> cell(0, g.dims[a] - 2);
                    d[a] = double(cell(rng)) + frac(rng) - double(x[a]);
                }
                u.set(g.index(i, j, k), d);
            }
    return u;
}

Instance make_instance(std::uint64_t seed, int n)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> value(0.05, 0.95);
    Instance in;
    in.grid = make_grid({n, n, n});
    std::vector<double> m(in.grid.voxel_count()), f(m.size()), ml(m.size()), fl(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = value(rng);
        f[i] = value(rng);
        ml[i] = value(rng);
        fl[i] = value(rng);
    }
    in.moving = Volume(in.grid, std::move(m));
    in.fixed = Volume(in.grid, std::move(f));
    in.moving_label = LabelMask(in.grid, std::move(ml));
    in.fixed_label = LabelMask(in.grid, std::move(fl));
    in.field = random_field(in.grid, rng);
    return in;
}

LossSettings only(double alpha, double beta, double lambda)
{
    LossSettings s;
    s.weights.alpha = alpha;
    s.weights.beta = beta;
    s.weights.lambda = lambda;
    return s;
}

double step_for(const LossSettings& s)
{
    return s.weights.alpha > 0.0 ? kStepMi : kStepSmooth;
}

GradCheckResult check_field(const std::string& name, const Instance& in, const LossSettings& s)
{
    MplObjective obj(in.moving, in.moving_label, in.fixed, in.fixed_label, s);
    const GridMeta& g = in.grid;
    auto loss = [&](std::span<const double> p) { return obj.evaluate(DisplacementField::from_flat(g, p), nullptr).total; };
    auto grad = [&](std::span<const double> p) {
        DisplacementField gr;
        obj.evaluate(DisplacementField::from_flat(g, p), &gr);
        return gr.flatten();
    };
    const auto p = in.field.flatten();
    return {name, p.size(), finite_difference_check(loss, grad, p, step_for(s))};
}

GradCheckResult check_affine(const std::string& name, const Instance& in, const LossSettings& s, std::uint64_t seed)
{
    MplObjective obj(in.moving, in.moving_label, in.fixed, in.fixed_label, s);
    AffineParameterization param(in.grid);
    std::mt19937_64 rng(seed ^ 0x5bd1e995u);
    std::normal_distribution<double> small(0.0, 0.1);
    std::vector<double> theta(12);
    for (double& t : theta)
        t = small(rng);
    // Half a voxel of translation keeps near-identity sample points mid-cell.
    for (int r = 9; r < 12; ++r)
        theta[std::size_t(r)] += 0.5;
    auto loss = [&](std::span<const double> t) {
        return obj.evaluate(affine_to_field(param.to_affine(t), in.grid), nullptr).total;
    };
    auto grad = [&](std::span<const double> t) {
        DisplacementField gr;
        obj.evaluate(affine_to_field(param.to_affine(t), in.grid), &gr);
        return param.chain(affine_gradient(gr));
    };
    return {name, theta.size(), finite_difference_check(loss, grad, theta, step_for(s))};
}

GradCheckResult check_cascade(const std::string& name, const Instance& in, const LossSettings& s, std::uint64_t seed)
{
    MplObjective obj(in.moving, in.moving_label, in.fixed, in.fixed_label, s);
    CascadeParameterization param(in.grid, 1.0);
    std::mt19937_64 rng(seed ^ 0x27d4eb2fu);
    // Offsets put both x + inc and the composed points mid-cell.
    std::normal_distribution<double> small(0.0, 0.03);
    DisplacementField acc(in.grid);
    for (std::size_t v = 0; v < acc.voxel_count(); ++v)
        acc.set(v, {0.2 + small(rng), 0.15 + small(rng), 0.25 + small(rng)});
    std::vector<double> raw(3 * in.grid.voxel_count());
    for (double& r : raw)
        r = 0.3 + small(rng);
    auto loss = [&](std::span<const double> v) { return obj.evaluate(compose(acc, param.increment(v)), nullptr).total; };
    auto grad = [&](std::span<const double> v) {
        DisplacementField inc = param.increment(v);
        DisplacementField gr;
        obj.evaluate(compose(acc, inc), &gr);
        return param.chain(acc, inc, gr);
    };
    return {name, raw.size(), finite_difference_check(loss, grad, raw, step_for(s))};
}

} // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int n)
{
    if (n < 4 || n > 8)
        fail(ErrorCode::InvalidArgument, "gradient checks run on grids of 4^3 to 8^3");
    const Instance in = make_instance(seed, n);
    std::vector<GradCheckResult> out;

    {
        const HistogramSettings hs;
        auto loss = [&](std::span<const double> p) { return mi_loss(Volume(in.grid, {p.begin(), p.end()}), in.fixed, hs); };
        auto grad = [&](std::span<const double> p) {
            return mi_loss_gradient(Volume(in.grid, {p.begin(), p.end()}), in.fixed, hs).values();
        };
        out.push_back({"mi wrt intensities", in.moving.size(),
                       finite_difference_check(loss, grad, in.moving.values(), kStepMi)});
    }
    {
        const std::vector<double> scales = LossWeights{}.scales;
        auto loss = [&](std::span<const double> p) {
            return gpl_loss(LabelMask(in.grid, {p.begin(), p.end()}), in.fixed_label, scales);
        };
        auto grad = [&](std::span<const double> p) {
            return gpl_loss_gradient(LabelMask(in.grid, {p.begin(), p.end()}), in.fixed_label, scales).values();
        };
        out.push_back({"gpl wrt label", in.moving_label.size(),
                       finite_difference_check(loss, grad, in.moving_label.values(), kStepSmooth)});
    }
    {
        auto loss = [&](std::span<const double> p) { return bending_energy(DisplacementField::from_flat(in.grid, p)); };
        auto grad = [&](std::span<const double> p) {
            return bending_energy_gradient(DisplacementField::from_flat(in.grid, p)).flatten();
        };
        out.push_back({"bending wrt field", 3 * in.grid.voxel_count(),
                       finite_difference_check(loss, grad, in.field.flatten(), kStepSmooth)});
    }
    out.push_back(check_field("mi wrt field", in, only(1, 0, 0)));
    out.push_back(check_field("gpl wrt field", in, only(0, 1, 0)));
    out.push_back(check_field("mpl wrt field", in, LossSettings{}));
    out.push_back(check_affine("mi wrt affine", in, only(1, 0, 0), seed));
    out.push_back(check_affine("gpl wrt affine", in, only(0, 1, 0), seed));
    out.push_back(check_affine("mpl wrt affine", in, LossSettings{}, seed));
    out.push_back(check_cascade("mpl wrt cascade parameters", in, LossSettings{}, seed));
    return out;
}

GradCheckResult quadratic_self_test()
{
    // f(x, y) = 3x^2 + xy + 2y^2 - x
    auto loss = [](std::span<const double> p) { return 3 * p[0] * p[0] + p[0] * p[1] + 2 * p[1] * p[1] - p[0]; };
    auto grad = [](std::span<const double> p) {
        return std::vector<double>{6 * p[0] + p[1] - 1, p[0] + 4 * p[1]};
    };
    const std::vector<double> at{0.7, -1.3};
    return {"quadratic self-test", 2, finite_difference_check(loss, grad, at, kStepSmooth)};
}

} // namespace mplreg
