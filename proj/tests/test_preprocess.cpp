#include "pipeline.hpp"
#include "preprocess.hpp"

#include <doctest.h>

using namespace mplreg;

TEST_CASE("resample identity and hand evaluation")
{
    const GridMeta g = make_grid({3, 2, 2}, {5.0, 5.0, 5.0});
    const Volume v(g, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    const Volume same = resample_isotropic(v, 5.0);
    CHECK(same.values() == v.values());

    const Volume two(make_grid({2, 1, 1}), {0.0, 10.0});
    const Volume up = resample_isotropic(two, 0.5);
    REQUIRE(up.dims() == Dims3{4, 2, 2});
    CHECK(up.at(0, 0, 0) == doctest::Approx(0.0));
    CHECK(up.at(1, 0, 0) == doctest::Approx(2.5));
    CHECK(up.at(2, 0, 0) == doctest::Approx(7.5));
    CHECK(up.at(3, 0, 0) == doctest::Approx(10.0));
    CHECK(up.grid().spacing == Vec3{0.5, 0.5, 0.5});

    const Volume c(make_grid({4, 5, 3}, {1.0, 2.0, 0.7}), 3.25);
    const Volume rc = resample_isotropic(c, 1.3);
    CHECK(rc.dims() == Dims3{4, 8, 2});
    for (double x : rc.values())
        CHECK(x == 3.25);
}

TEST_CASE("crop_pad centers the roi")
{
    const GridMeta g = make_grid({8, 8, 8});
    LabelMask m(g);
    m.at(3, 3, 3) = 1.0;
    const RoiBox roi = compute_roi(m, 0);
    CHECK(roi.lo == Dims3{3, 3, 3});
    CHECK(roi.hi == Dims3{3, 3, 3});
    Volume v(g, -1.0);
    v.at(3, 3, 3) = 42.0;
    const auto r = crop_pad(v, roi, {4, 4, 4}, -1000.0);
    CHECK_FALSE(r.overflow);
    CHECK(r.image.at(2, 2, 2) == 42.0);
    int padded = 0;
    for (double x : r.image.values())
        padded += x == -1000.0;
    CHECK(padded == 63);
    // world position of the kept voxel is unchanged
    CHECK(r.image.grid().origin[0] + 2 * r.image.grid().spacing[0] == doctest::Approx(3.0));

    LabelMask full(g, 1.0);
    const auto id = crop_pad(v, compute_roi(full, 0), g.dims, 0.0);
    CHECK(id.image.values() == v.values());
}

TEST_CASE("crop_pad overflow and empty roi")
{
    const GridMeta g = make_grid({8, 8, 8});
    LabelMask full(g, 1.0);
    const auto r = crop_pad(Volume(g, 1.0), compute_roi(full, 0), {4, 4, 4}, 0.0);
    CHECK(r.overflow);
    CHECK(r.image.dims() == Dims3{4, 4, 4});
    try {
        compute_roi(LabelMask(g), 2);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyRoi);
    }
}

TEST_CASE("normalize_minmax")
{
    std::vector<double> v(101);
    for (int i = 0; i <= 100; ++i)
        v[std::size_t(i)] = i;
    const Volume n = normalize_minmax(Volume(make_grid({101, 1, 1}), v));
    CHECK(n[0] == 0.0);
    CHECK(n[100] == 1.0);
    CHECK(n[50] == doctest::Approx(0.5));

    const Volume ct(make_grid({3, 1, 1}), {-1000.0, 500.0, -250.0});
    const Volume nc = normalize_minmax(ct, std::pair{-1000.0, 500.0});
    CHECK(nc[0] == 0.0);
    CHECK(nc[1] == 1.0);
    CHECK(nc[2] == doctest::Approx(0.5).epsilon(1e-15));

    const Volume constant(make_grid({2, 2, 2}), 7.0);
    const Volume clipped = normalize_minmax(constant, std::pair{0.0, 1.0});
    CHECK(std::all_of(clipped.values().begin(), clipped.values().end(), [](double x) { return x == 1.0; }));
    try {
        normalize_minmax(constant);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Domain);
    }
}

TEST_CASE("prepared pair shares the fixed grid")
{
    const GridMeta gf = make_grid({20, 18, 16}, {2.5, 2.5, 5.0});
    const GridMeta gm = make_grid({16, 16, 16}, {5.0, 5.0, 5.0});
    Volume f(gf), m(gm);
    LabelMask fl(gf), ml(gm);
    for (std::size_t n = 0; n < gf.voxel_count(); ++n)
        f[n] = double(n % 7);
    for (std::size_t n = 0; n < gm.voxel_count(); ++n)
        m[n] = double(n % 5);
    for (int k = 4; k < 10; ++k)
        for (int j = 4; j < 10; ++j)
            for (int i = 4; i < 10; ++i) {
                fl.at(i, j, k) = 1.0;
                ml.at(i, j, k) = 1.0;
            }
    PreprocessSettings s;
    s.out_dims = {16, 16, 16};
    const PreparedPair p = prepare_pair(f, fl, m, ml, s);
    CHECK(p.pair.fixed.dims() == Dims3{16, 16, 16});
    CHECK(p.pair.moving.grid() == p.pair.fixed.grid());
    CHECK(p.pair.fixed.grid().spacing == Vec3{5.0, 5.0, 5.0});
    const auto [lo, hi] = std::minmax_element(p.pair.moving.values().begin(), p.pair.moving.values().end());
    CHECK(*lo == 0.0);
    CHECK(*hi == 1.0);

    const Volume comp = prepare_companion(m, m, p, s);
    CHECK(comp.grid() == p.pair.fixed.grid());

    s.enabled = false;
    CHECK_THROWS_AS(prepare_pair(f, fl, m, ml, s), Error);
}
