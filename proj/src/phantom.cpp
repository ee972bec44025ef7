#include "phantom.hpp"

#include "losses.hpp"

#include <cmath>
#include <random>

namespace mplreg {

namespace {

constexpr double kAir = 0.0;
constexpr double kTissue = 0.55;
constexpr double kLung = 0.12;
constexpr double kVessel = 0.45;
constexpr double kHeart = 0.7;
constexpr double kBone = 0.95;
constexpr double kMinJacobian = 0.05;
constexpr int kMaxAttempts = 20;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t attempt = 0)
{
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(purpose), std::uint32_t(attempt)};
    return std::mt19937_64(seq);
}

struct Ellipsoid {
    Vec3 center;
    Vec3 radii;

    double level(const Vec3& p) const
    {
        double s = 0.0;
        for (int d = 0; d < 3; ++d) {
            const double t = (p[d] - center[d]) / radii[d];
            s += t * t;
        }
        return s;
    }
    bool contains(const Vec3& p) const { return level(p) <= 1.0; }
};

struct Anatomy {
    Ellipsoid body;
    Ellipsoid heart;
    std::vector<Ellipsoid> lungs;
    std::vector<Ellipsoid> vessels;
    /// Spine axis (x, y) and radius in normalized coordinates.
    double spine_x = 0.0, spine_y = -0.5, spine_r = 0.1;
};

Anatomy sample_anatomy(std::uint64_t seed, const PhantomParams& p)
{
    auto rng = stream(seed, 1);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    Anatomy a;
    a.body = {{0.0, 0.0, 0.0}, {0.88, 0.72, 0.92}};
    a.heart = {{0.0, 0.22, -0.15}, {0.14, 0.2, 0.24}};
    const int n = p.lung_count;
    const double span = 0.76;
    const double width = std::min(0.3, 0.9 * span / std::max(1, n));
    for (int l = 0; l < n; ++l) {
        const double x = n == 1 ? 0.0 : -0.5 * span + span * double(l) / double(n - 1);
        Ellipsoid e;
        e.center = {x + 0.03 * jitter(rng), 0.0 + 0.04 * jitter(rng), 0.05 + 0.04 * jitter(rng)};
        e.radii = {width * (1.0 + 0.08 * jitter(rng)), 0.42 * (1.0 + 0.08 * jitter(rng)),
                   0.6 * (1.0 + 0.08 * jitter(rng))};
        a.lungs.push_back(e);
    }
    std::uniform_real_distribution<double> unit(-0.65, 0.65);
    std::uniform_real_distribution<double> radius(0.045, 0.08);
    for (const Ellipsoid& lung : a.lungs) {
        for (int v = 0; v < p.vessels_per_lung; ++v) {
            Vec3 off;
            do {
                off = {unit(rng), unit(rng), unit(rng)};
            } while (off[0] * off[0] + off[1] * off[1] + off[2] * off[2] > 0.65 * 0.65);
            Ellipsoid s;
            for (int d = 0; d < 3; ++d)
                s.center[d] = lung.center[d] + off[d] * lung.radii[d];
            const double r = radius(rng);
            s.radii = {r, r, r};
            a.vessels.push_back(s);
        }
    }
    return a;
}

/// Crisp tissue classes and the lung mask on the grid.
void render(const Anatomy& a, const GridMeta& g, std::vector<double>& tissue, std::vector<double>& label)
{
    tissue.assign(g.voxel_count(), kAir);
    label.assign(g.voxel_count(), 0.0);
    auto coord = [&](int i, int d) { return g.dims[d] > 1 ? 2.0 * i / double(g.dims[d] - 1) - 1.0 : 0.0; };
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 p{coord(i, 0), coord(j, 1), coord(k, 2)};
                if (!a.body.contains(p))
                    continue;
                double v = kTissue;
                const double sx = p[0] - a.spine_x, sy = p[1] - a.spine_y;
                if (sx * sx + sy * sy <= a.spine_r * a.spine_r)
                    v = kBone;
                if (a.heart.contains(p))
                    v = kHeart;
                bool in_lung = false;
                for (const auto& l : a.lungs)
                    in_lung = in_lung || l.contains(p);
                if (in_lung) {
                    v = kLung;
                    for (const auto& s : a.vessels)
                        if (s.contains(p))
                            v = kVessel;
                }
                const std::size_t n = g.index(i, j, k);
                tissue[n] = v;
                label[n] = in_lung ? 1.0 : 0.0;
            }
}

void add_noise(std::vector<double>& v, std::mt19937_64& rng, double sigma)
{
    std::normal_distribution<double> noise(0.0, 1.0);
    for (double& x : v) {
        if (sigma > 0.0)
            x += sigma * noise(rng);
        x = std::clamp(x, 0.0, 1.0);
    }
}

void to_float32(std::vector<double>& v)
{
    for (double& x : v)
        x = double(float(x));
}

Volume rounded(const Volume& v)
{
    std::vector<double> d = v.values();
    to_float32(d);
    return Volume(v.grid(), std::move(d));
}

} // namespace

void PhantomParams::validate() const
{
    for (int d = 0; d < 3; ++d)
        if (dims[d] < 4)
            fail(ErrorCode::InvalidArgument, "phantom dims must be >= 4");
    if (lung_count < 1)
        fail(ErrorCode::InvalidArgument, "lung_count must be >= 1");
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude))
        fail(ErrorCode::InvalidArgument, "amplitude must be >= 0");
    if (!(smoothness > 0.0) || !std::isfinite(smoothness))
        fail(ErrorCode::InvalidArgument, "smoothness must be > 0");
    if (!(noise_sigma >= 0.0) || !(gamma > 0.0) || !(render_blur >= 0.0) || vessels_per_lung < 0)
        fail(ErrorCode::InvalidArgument, "invalid phantom intensity parameters");
}

DisplacementField random_smooth_field(std::uint64_t seed, const GridMeta& grid, double amplitude, double smoothness)
{
    if (!(amplitude >= 0.0) || !(smoothness >= 0.0))
        fail(ErrorCode::InvalidArgument, "amplitude and smoothness must be >= 0");
    grid.validate();
    if (amplitude == 0.0)
        return DisplacementField(grid);
    const GaussianKernel kernel = GaussianKernel::make(smoothness);
    const std::size_t n = grid.voxel_count();
    // Noise is drawn on a margin of one kernel radius so the cropped field
    // never sees the clamped boundary.
    const int r = kernel.radius;
    const GridMeta padded = make_grid({grid.dims[0] + 2 * r, grid.dims[1] + 2 * r, grid.dims[2] + 2 * r});
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        auto rng = stream(seed, 2, std::uint64_t(attempt));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::array<std::vector<double>, 3> comp;
        std::vector<double> white(padded.voxel_count()), smooth(padded.voxel_count());
        for (auto& c : comp) {
            for (double& x : white)
                x = normal(rng);
            gaussian_filter(padded, white, smooth, kernel);
            c.resize(n);
            for (int k = 0; k < grid.dims[2]; ++k)
                for (int j = 0; j < grid.dims[1]; ++j)
                    for (int i = 0; i < grid.dims[0]; ++i)
                        c[grid.index(i, j, k)] = smooth[padded.index(i + r, j + r, k + r)];
        }
        double peak = 0.0;
        for (std::size_t m = 0; m < n; ++m)
            peak = std::max(peak, std::sqrt(comp[0][m] * comp[0][m] + comp[1][m] * comp[1][m] + comp[2][m] * comp[2][m]));
        if (!(peak > 0.0))
            continue;
        const double s = amplitude / peak;
        for (auto& c : comp)
            for (double& x : c)
                x *= s;
        DisplacementField u(grid, std::move(comp));
        const ScalarField jac = jacobian_determinant(u);
        bool ok = true;
        for (double j : jac.data())
            ok = ok && j > kMinJacobian;
        if (ok)
            return u;
    }
    fail(ErrorCode::Generation, "random_smooth_field: no admissible field after 20 attempts (amplitude " +
                                    std::to_string(amplitude) + ", smoothness " + std::to_string(smoothness) + ")");
}

PhantomCase generate_phantom_pair(std::uint64_t seed, const PhantomParams& params)
{
    params.validate();
    const GridMeta grid = make_grid(params.dims, params.spacing);
    const Anatomy anatomy = sample_anatomy(seed, params);
    std::vector<double> tissue, label;
    render(anatomy, grid, tissue, label);

    std::vector<double> smooth(tissue.size());
    gaussian_filter(grid, tissue, smooth, GaussianKernel::make(params.render_blur));

    std::vector<double> a = smooth;
    auto noise_a = stream(seed, 3);
    add_noise(a, noise_a, params.noise_sigma);

    std::vector<double> b(smooth.size());
    for (std::size_t n = 0; n < b.size(); ++n)
        b[n] = std::pow(1.0 - std::clamp(smooth[n], 0.0, 1.0), params.gamma);
    auto noise_b = stream(seed, 4);
    add_noise(b, noise_b, params.noise_sigma);

    // Ventilation-like map: lung mask times a smooth texture.
    std::vector<double> texture(tissue.size());
    {
        auto rng = stream(seed, 5);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> white(tissue.size());
        for (double& x : white)
            x = normal(rng);
        gaussian_filter(grid, white, texture, GaussianKernel::make(3.0));
        double peak = 1e-12;
        for (double x : texture)
            peak = std::max(peak, std::abs(x));
        for (std::size_t n = 0; n < texture.size(); ++n)
            texture[n] = label[n] * (0.6 + 0.4 * texture[n] / peak);
    }

    // Everything is rounded to float32 so a case written to NIfTI reads back
    // exactly as generated.
    PhantomCase c;
    c.seed = seed;
    c.params = params;
    DisplacementField u = random_smooth_field(seed, grid, params.amplitude, params.smoothness);
    std::array<std::vector<double>, 3> uc;
    for (int d = 0; d < 3; ++d) {
        uc[std::size_t(d)].assign(u.component(d).begin(), u.component(d).end());
        to_float32(uc[std::size_t(d)]);
    }
    c.true_field = DisplacementField(grid, std::move(uc));
    to_float32(a);
    to_float32(b);
    to_float32(texture);
    c.fixed = Volume(grid, std::move(a));
    c.fixed_label = LabelMask(grid, std::move(label));
    const Volume b_render(grid, std::move(b));
    c.moving = rounded(warp(b_render, c.true_field));
    c.moving_label = binarize(warp(c.fixed_label, c.true_field));
    c.companion_fixed = Volume(grid, std::move(texture));
    c.companion = rounded(warp(c.companion_fixed, c.true_field));
    return c;
}

double pearson(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.empty())
        fail(ErrorCode::InvalidArgument, "pearson needs equally sized non-empty arrays");
    double ma = 0.0, mb = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        ma += a[n];
        mb += b[n];
    }
    ma /= double(a.size());
    mb /= double(b.size());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        sab += (a[n] - ma) * (b[n] - mb);
        saa += (a[n] - ma) * (a[n] - ma);
        sbb += (b[n] - mb) * (b[n] - mb);
    }
    if (!(saa > 0.0 && sbb > 0.0))
        return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace mplreg
