#include "error.hpp"
#include "gradcheck.hpp"

#include <doctest.h>

#include <chrono>

using namespace mplreg;

TEST_CASE("gradient suite passes on several seeds")
{
    CHECK(quadratic_self_test().max_rel_error < 1e-8);
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto results = run_gradient_suite(seed, 6);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        CHECK(results.size() >= 10);
        for (const auto& r : results) {
            INFO(r.name);
            CHECK(r.max_rel_error < kGradTolerance);
        }
        CHECK(secs < 60.0);
    }
}

TEST_CASE("gradient suite enforces small grids")
{
    CHECK_THROWS_AS(run_gradient_suite(0, 9), Error);
    CHECK_THROWS_AS(run_gradient_suite(0, 3), Error);
}
