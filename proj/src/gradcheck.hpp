#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mplreg {

struct GradCheckResult {
    std::string name;
    std::size_t parameters = 0;
    double max_rel_error = 0.0;
};

constexpr double kGradTolerance = 1e-3;

/// Central-difference checks of every analytic gradient on random n^3
/// instances: MI, GPL and bending energy alone, the full objective wrt a
/// dense field, wrt the 12 affine parameters and wrt raw cascade parameters.
/// n must be in [4, 8].
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int n = 6);

/// 2-D quadratic with a known gradient; exercises the checker itself.
GradCheckResult quadratic_self_test();

} // namespace mplreg
