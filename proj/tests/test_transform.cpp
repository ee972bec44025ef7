#include "oracles.hpp"

#include <doctest.h>

using namespace mplreg;

TEST_CASE("transform identities hold exactly")
{
    const auto r = oracle::transform_identities();
    CHECK(r.zero_field_warp);
    CHECK(r.affine_det);
    CHECK(r.bending_affine);
    CHECK(r.compose_zero_left);
    CHECK(r.compose_zero_right);
    CHECK(r.compose_translations);
    CHECK(r.zero_field_jacobian);
}

TEST_CASE("integer translation shifts voxels")
{
    const GridMeta g = make_grid({6, 5, 4});
    const Volume v = oracle::random_volume(g, 1);
    DisplacementField t(g);
    for (std::size_t n = 0; n < g.voxel_count(); ++n)
        t.set(n, {1.0, 0.0, -1.0});
    const Volume w = warp(v, t);
    for (int k = 1; k < 4; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 5; ++i)
                CHECK(w.at(i, j, k) == v.at(i + 1, j, k - 1));
    // clamp-to-edge past the border
    CHECK(w.at(5, 0, 1) == v.at(5, 0, 0));
}

TEST_CASE("warp of a label stays in [0,1]")
{
    const GridMeta g = make_grid({5, 5, 5});
    LabelMask l = binarize(oracle::random_volume(g, 4));
    const LabelMask w = warp(l, oracle::random_field(g, 9, 2.0));
    for (double x : w.values()) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("compose matches sequential warping of a linear image")
{
    // For a linear image trilinear sampling is exact away from the border,
    // so warping by compose(prev, inc) equals warp(warp(v, prev), inc).
    const GridMeta g = make_grid({12, 12, 12});
    Volume lin(g);
    for (int k = 0; k < 12; ++k)
        for (int j = 0; j < 12; ++j)
            for (int i = 0; i < 12; ++i)
                lin.at(i, j, k) = 0.5 * i - 0.25 * j + 0.125 * k;
    DisplacementField prev(g), inc(g);
    for (std::size_t n = 0; n < g.voxel_count(); ++n) {
        prev.set(n, {0.3, -0.2, 0.4});
        inc.set(n, {-0.1, 0.35, 0.2});
    }
    const Volume once = warp(lin, compose(prev, inc));
    const Volume twice = warp(warp(lin, prev), inc);
    for (int k = 2; k < 10; ++k)
        for (int j = 2; j < 10; ++j)
            for (int i = 2; i < 10; ++i)
                CHECK(once.at(i, j, k) == doctest::Approx(twice.at(i, j, k)).epsilon(1e-12));
}

TEST_CASE("folding is detected")
{
    const GridMeta g = make_grid({6, 6, 6});
    AffineParams flip;
    flip.values = {-1, 0, 0, 5, 0, 1, 0, 0, 0, 0, 1, 0};
    const DisplacementField f = affine_to_field(flip, g);
    CHECK(fraction_negative_jacobian(f) == 1.0);
    CHECK(jacobian_determinant(f)[0] == -1.0);
}

TEST_CASE("affine gradient matches finite differences")
{
    const GridMeta g = make_grid({5, 4, 6});
    const DisplacementField w = oracle::random_field(g, 3, 1.0);
    // L(u) = sum w . u is linear, so dL/dtheta is exact under central differences.
    auto loss = [&](std::span<const double> p) {
        AffineParams a;
        std::copy(p.begin(), p.end(), a.values.begin());
        const DisplacementField u = affine_to_field(a, g);
        double s = 0.0;
        for (int c = 0; c < 3; ++c)
            for (std::size_t n = 0; n < g.voxel_count(); ++n)
                s += w.component(c)[n] * u.component(c)[n];
        return s;
    };
    auto grad = [&](std::span<const double>) {
        const auto a = affine_gradient(w);
        return std::vector<double>(a.begin(), a.end());
    };
    const auto id = AffineParams::identity().values;
    CHECK(finite_difference_check(loss, grad, id, 1e-3) < 1e-8);
}

TEST_CASE("field statistics")
{
    const GridMeta g = make_grid({4, 4, 4});
    DisplacementField f(g);
    for (std::size_t n = 0; n < g.voxel_count(); ++n)
        f.set(n, {3.0, 4.0, 0.0});
    CHECK(field_rms(f) == doctest::Approx(5.0));
    CHECK(field_max_norm(f) == doctest::Approx(5.0));
    const auto flat = f.flatten();
    CHECK(oracle::same(DisplacementField::from_flat(g, flat), f));
}
