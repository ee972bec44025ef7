#include "oracles.hpp"
#include "phantom.hpp"

#include <doctest.h>

#include <filesystem>

using namespace mplreg;

namespace {

PhantomParams small()
{
    PhantomParams p;
    p.dims = {32, 32, 32};
    return p;
}

} // namespace

TEST_CASE("phantom generation is seed deterministic")
{
    const PhantomCase a = generate_phantom_pair(5, small());
    const PhantomCase b = generate_phantom_pair(5, small());
    const PhantomCase c = generate_phantom_pair(6, small());
    CHECK(a.moving.values() == b.moving.values());
    CHECK(oracle::same(a.true_field, b.true_field));
    CHECK(a.moving.values() != c.moving.values());
}

TEST_CASE("phantom ground truth")
{
    const PhantomCase c = generate_phantom_pair(1, small());
    const ScalarField j = jacobian_determinant(c.true_field);
    CHECK(*std::min_element(j.values().begin(), j.values().end()) > 0.05);
    CHECK(field_max_norm(c.true_field) == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(dice(c.moving_label, c.fixed_label) < 0.97);
    CHECK(dice(binarize(warp(c.fixed_label, c.true_field)), c.moving_label) == 1.0);
    // the two modalities are inversely related inside the body
    CHECK(pearson(c.fixed.data(), warp(c.moving, DisplacementField(c.fixed.grid())).data()) < 0.9);
    for (double x : c.fixed.values())
        CHECK((x >= 0.0 && x <= 1.0));
    // companion in moving space is the fixed-space map carried by the field
    const Volume expect = warp(c.companion_fixed, c.true_field);
    for (std::size_t n = 0; n < expect.size(); ++n)
        CHECK(std::abs(expect[n] - c.companion[n]) < 1e-6);
}

TEST_CASE("amplitude zero gives an identity field")
{
    PhantomParams p = small();
    p.amplitude = 0.0;
    const PhantomCase c = generate_phantom_pair(3, p);
    CHECK(field_max_norm(c.true_field) == 0.0);
    CHECK(c.moving_label.values() == c.fixed_label.values());
}

TEST_CASE("random smooth field honours the amplitude")
{
    const GridMeta g = make_grid({24, 24, 24});
    const DisplacementField f = random_smooth_field(9, g, 2.5, 6.0);
    CHECK(field_max_norm(f) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(fraction_negative_jacobian(f) == 0.0);
}

TEST_CASE("invalid phantom parameters")
{
    PhantomParams p = small();
    p.amplitude = -1.0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = small();
    p.smoothness = 0.0;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("case directory round trip is exact")
{
    const PhantomCase c = generate_phantom_pair(8, small());
    const auto dir = std::filesystem::temp_directory_path() / "mplreg_tests" / "case8";
    std::filesystem::remove_all(dir);
    write_phantom_case(c, dir);
    const PhantomCase r = read_phantom_case(dir);
    CHECK(r.seed == 8);
    CHECK(r.params.dims == c.params.dims);
    CHECK(r.fixed.values() == c.fixed.values());
    CHECK(r.moving.values() == c.moving.values());
    CHECK(r.fixed_label.values() == c.fixed_label.values());
    CHECK(r.moving_label.values() == c.moving_label.values());
    CHECK(r.companion.values() == c.companion.values());
    CHECK(oracle::same(r.true_field, c.true_field));
    CHECK(r.fixed.grid().spacing == c.fixed.grid().spacing);
}
