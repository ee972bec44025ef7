#include "oracles.hpp"

#include <doctest.h>

using namespace mplreg;

TEST_CASE("separable Gaussian equals dense convolution on impulses")
{
    const double sigmas[] = {0.0, 0.5, 1.0, 2.0, 4.0};
    CHECK(oracle::separable_vs_dense(9, sigmas) < 1e-9);
}

TEST_CASE("adjoint filter is the transpose")
{
    const GridMeta g = make_grid({7, 6, 5});
    const Volume a = oracle::random_volume(g, 1), b = oracle::random_volume(g, 2);
    std::vector<double> ga(g.voxel_count()), gtb(g.voxel_count());
    const auto k = GaussianKernel::make(2.0);
    gaussian_filter(g, a.data(), ga, k);
    gaussian_filter_adjoint(g, b.data(), gtb, k);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t n = 0; n < g.voxel_count(); ++n) {
        lhs += ga[n] * b[n];
        rhs += a[n] * gtb[n];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("MI with a vanishing Parzen window equals counting")
{
    const GridMeta g = make_grid({2, 2, 2});
    const Volume m(g, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 0.1, 0.9});
    const Volume f(g, {1.0, 0.9, 0.1, 0.0, 0.3, 0.5, 0.7, 0.2});
    for (int bins : {4, 8, 32})
        for (double sigma : {0.0, 0.05, 0.1}) {
            const HistogramSettings s{bins, sigma};
            CHECK(std::abs(mi_loss(m, f, s) - oracle::counting_mi_loss(m.data(), f.data(), bins)) < 1e-10);
        }

    const GridMeta big = make_grid({6, 6, 6});
    const Volume rm = oracle::random_volume(big, 3), rf = oracle::random_volume(big, 4);
    const HistogramSettings s{8, 0.1};
    CHECK(std::abs(mi_loss(rm, rf, s) - oracle::counting_mi_loss(rm.data(), rf.data(), 8)) < 1e-10);
}

TEST_CASE("MI properties")
{
    const GridMeta g = make_grid({8, 8, 8});
    const Volume a = oracle::random_volume(g, 5);
    std::vector<double> inv(a.size());
    for (std::size_t n = 0; n < a.size(); ++n)
        inv[n] = 1.0 - a[n];
    const Volume b(g, inv);
    // an invertible intensity map keeps MI at the entropy
    CHECK(mi_loss(a, b) == doctest::Approx(mi_loss(a, a)).epsilon(1e-9));
    CHECK(mi_loss(a, a) < mi_loss(a, oracle::random_volume(g, 6)));
    CHECK(mi_loss(a, Volume(g, 0.5)) == doctest::Approx(0.0).epsilon(1e-12));

    const auto h = joint_histogram(a, b);
    double total = 0.0;
    for (double p : h.joint)
        total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(mi_loss(Volume(g, 1.5), a), Error);
    CHECK_THROWS_AS(mi_loss_gradient(a, b, {32, 0.0}), Error);
}

TEST_CASE("Dice on hand-counted cubes")
{
    CHECK(oracle::half_overlap_cube_dice() == 0.5);
    const GridMeta g = make_grid({3, 3, 3});
    CHECK(dice(LabelMask(g), LabelMask(g)) == 1.0);
    CHECK(dice(LabelMask(g, 1.0), LabelMask(g)) == 0.0);
    CHECK(dice(LabelMask(g, 1.0), LabelMask(g, 1.0)) == 1.0);
}

TEST_CASE("GPL operator form matches the filtered definition")
{
    const GridMeta g = make_grid({10, 9, 8});
    const LabelMask m = binarize(oracle::random_volume(g, 7)), f = binarize(oracle::random_volume(g, 8));
    const std::vector<double> scales{0, 1, 2, 4};
    for (GplMode mode : {GplMode::SoftDice, GplMode::Mse}) {
        const GplTarget t(f, scales, mode);
        std::vector<double> grad(g.voxel_count());
        const double fast = t.evaluate(m.data(), grad);
        CHECK(fast == doctest::Approx(gpl_loss(m, f, scales, mode)).epsilon(1e-12));
        const ScalarField ref = gpl_loss_gradient(m, f, scales, mode);
        for (std::size_t n = 0; n < grad.size(); ++n)
            CHECK(grad[n] == doctest::Approx(ref[n]).epsilon(1e-9).scale(1e-12));
    }
    CHECK(gpl_loss(f, f, scales) == doctest::Approx(0.0).epsilon(1e-9).scale(1e-9));
    CHECK(gpl_loss(m, f, scales) > 0.0);
}

TEST_CASE("bending energy")
{
    const GridMeta g = make_grid({8, 8, 8});
    CHECK(bending_energy(DisplacementField(g)) == 0.0);
    CHECK(bending_energy(affine_to_field(oracle::dyadic_affine(), g)) == 0.0);
    DisplacementField q(g);
    for (int k = 0; k < 8; ++k)
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 8; ++i)
                q.component(0)[g.index(i, j, k)] = 0.5 * i * i;
    // u_xx = 1 in the interior, averaged over 3 components
    CHECK(bending_energy(q) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("loss weights combine")
{
    LossWeights w;
    const auto b = combine(-0.5, 0.25, 0.1, w);
    CHECK(b.total == doctest::Approx(-0.5 + 0.25 + 0.2));
    w.lambda = -1.0;
    CHECK_THROWS_AS(w.validate(), Error);
}

TEST_CASE("finite-difference checker on a quadratic")
{
    auto loss = [](std::span<const double> p) { return p[0] * p[0] + 3.0 * p[1] * p[1]; };
    auto grad = [](std::span<const double> p) { return std::vector<double>{2.0 * p[0], 6.0 * p[1]}; };
    const std::vector<double> at{0.3, -0.7};
    CHECK(finite_difference_check(loss, grad, at) < 1e-8);
    auto wrong = [](std::span<const double> p) { return std::vector<double>{2.0 * p[0], 5.0 * p[1]}; };
    CHECK(finite_difference_check(loss, wrong, at) > 1e-2);
}
