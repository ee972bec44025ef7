#pragma once

// Independent reference computations for tests. Written from the
// definitions, without the library's fast paths.

#include "losses.hpp"
#include "metrics.hpp"
#include "transform.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using namespace mplreg;

/// MI loss from hard nearest-bin counts (bin coordinate v * (bins - 1)).
inline double counting_mi_loss(std::span<const double> m, std::span<const double> f, int bins)
{
    std::vector<double> joint(std::size_t(bins * bins), 0.0), pm(std::size_t(bins), 0.0), pf(std::size_t(bins), 0.0);
    const double n = double(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const int a = int(std::lround(m[i] * (bins - 1)));
        const int b = int(std::lround(f[i] * (bins - 1)));
        joint[std::size_t(a * bins + b)] += 1.0 / n;
        pm[std::size_t(a)] += 1.0 / n;
        pf[std::size_t(b)] += 1.0 / n;
    }
    double mi = 0.0;
    for (int a = 0; a < bins; ++a)
        for (int b = 0; b < bins; ++b) {
            const double p = joint[std::size_t(a * bins + b)];
            if (p > 0)
                mi += p * std::log(p / (pm[std::size_t(a)] * pf[std::size_t(b)]));
        }
    return -mi;
}

inline std::vector<double> gaussian_weights(double sigma)
{
    if (sigma == 0.0)
        return {1.0};
    const int r = int(std::ceil(3.0 * sigma));
    std::vector<double> w(std::size_t(2 * r + 1));
    double sum = 0.0;
    for (int t = -r; t <= r; ++t)
        sum += w[std::size_t(t + r)] = std::exp(-0.5 * t * t / (sigma * sigma));
    for (double& x : w)
        x /= sum;
    return w;
}

/// Full 3-D convolution with the product kernel, clamp-to-edge.
inline std::vector<double> dense_gaussian(const GridMeta& g, std::span<const double> in, double sigma)
{
    const auto w = gaussian_weights(sigma);
    const int r = int(w.size() / 2);
    const auto clamp = [](int i, int n) { return std::clamp(i, 0, n - 1); };
    std::vector<double> out(in.size(), 0.0);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                double s = 0.0;
                for (int c = -r; c <= r; ++c)
                    for (int b = -r; b <= r; ++b)
                        for (int a = -r; a <= r; ++a)
                            s += w[std::size_t(a + r)] * w[std::size_t(b + r)] * w[std::size_t(c + r)] *
                                 in[g.index(clamp(i + a, g.dims[0]), clamp(j + b, g.dims[1]), clamp(k + c, g.dims[2]))];
                out[g.index(i, j, k)] = s;
            }
    return out;
}

/// Impulses at the corners, edge midpoints, face centers, the center and a
/// few random voxels of an n^3 grid.
inline std::vector<Dims3> impulse_sites(int n, std::uint64_t seed = 7)
{
    std::vector<Dims3> out;
    const int pos[3] = {0, n / 2, n - 1};
    for (int a : pos)
        for (int b : pos)
            for (int c : pos)
                out.push_back({a, b, c});
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, n - 1);
    for (int t = 0; t < 8; ++t)
        out.push_back({u(rng), u(rng), u(rng)});
    return out;
}

/// Worst |separable - dense| over impulse responses on an n^3 grid.
inline double separable_vs_dense(int n, std::span<const double> sigmas)
{
    const GridMeta g = make_grid({n, n, n});
    double worst = 0.0;
    std::vector<double> in(g.voxel_count()), fast(g.voxel_count());
    for (double sigma : sigmas)
        for (const Dims3& p : impulse_sites(n)) {
            std::fill(in.begin(), in.end(), 0.0);
            in[g.index(p[0], p[1], p[2])] = 1.0;
            gaussian_filter(g, in, fast, GaussianKernel::make(sigma));
            const auto ref = dense_gaussian(g, in, sigma);
            for (std::size_t q = 0; q < in.size(); ++q)
                worst = std::max(worst, std::abs(fast[q] - ref[q]));
        }
    return worst;
}

/// Two 4^3 cubes in a 10^3 grid overlapping in half their voxels.
inline double half_overlap_cube_dice()
{
    const GridMeta g = make_grid({10, 10, 10});
    LabelMask a(g), b(g);
    for (int k = 2; k < 6; ++k)
        for (int j = 2; j < 6; ++j)
            for (int i = 2; i < 6; ++i) {
                a.at(i, j, k) = 1.0;
                b.at(i + 2, j, k) = 1.0;
            }
    return dice(a, b);
}

inline Volume random_volume(const GridMeta& g, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(g.voxel_count());
    for (double& x : v)
        x = u(rng);
    return Volume(g, std::move(v));
}

inline DisplacementField random_field(const GridMeta& g, std::uint64_t seed, double amplitude)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    DisplacementField f(g);
    for (int c = 0; c < 3; ++c)
        for (double& x : f.component(c))
            x = u(rng);
    return f;
}

/// Affine map with dyadic entries so finite differences are exact.
inline AffineParams dyadic_affine()
{
    AffineParams a;
    a.values = {1.125, 0.25, -0.125, 1.5, -0.0625, 0.875, 0.25, -2.0, 0.125, -0.25, 1.0625, 0.75};
    return a;
}

inline bool same(const DisplacementField& a, const DisplacementField& b)
{
    for (int c = 0; c < 3; ++c)
        if (!std::equal(a.component(c).begin(), a.component(c).end(), b.component(c).begin()))
            return false;
    return true;
}

struct IdentityReport {
    bool zero_field_warp = false;
    bool affine_det = false;
    bool bending_affine = false;
    bool compose_zero_left = false;
    bool compose_zero_right = false;
    bool compose_translations = false;
    bool zero_field_jacobian = false;

    bool all() const
    {
        return zero_field_warp && affine_det && bending_affine && compose_zero_left && compose_zero_right &&
               compose_translations && zero_field_jacobian;
    }
};

inline IdentityReport transform_identities()
{
    IdentityReport r;
    const GridMeta g = make_grid({9, 8, 7}, {2.0, 1.5, 3.0});
    const Volume v = random_volume(g, 11);
    const DisplacementField zero(g);
    const Volume w = warp(v, zero);
    r.zero_field_warp = std::equal(v.values().begin(), v.values().end(), w.values().begin());

    const AffineParams a = dyadic_affine();
    const DisplacementField af = affine_to_field(a, g);
    const ScalarField det = jacobian_determinant(af);
    r.affine_det = std::all_of(det.values().begin(), det.values().end(), [&](double d) { return d == a.determinant(); });
    r.bending_affine = bending_energy(af) == 0.0;

    const DisplacementField u = random_field(g, 5, 1.5);
    r.compose_zero_left = same(compose(zero, u), u);
    r.compose_zero_right = same(compose(u, zero), u);

    DisplacementField t1(g), t2(g), sum(g);
    const Vec3 s1{1.0, -2.0, 0.5}, s2{-0.25, 1.0, 2.0};
    for (std::size_t n = 0; n < g.voxel_count(); ++n) {
        t1.set(n, s1);
        t2.set(n, s2);
        sum.set(n, {s1[0] + s2[0], s1[1] + s2[1], s1[2] + s2[2]});
    }
    r.compose_translations = same(compose(t1, t2), sum);

    const ScalarField dz = jacobian_determinant(zero);
    r.zero_field_jacobian =
        std::all_of(dz.values().begin(), dz.values().end(), [](double d) { return d == 1.0; }) &&
        fraction_negative_jacobian(zero) == 0.0;
    return r;
}

} // namespace oracle
