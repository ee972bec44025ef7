#pragma once

#include "phantom.hpp"
#include "registration.hpp"

#include <functional>

namespace mplreg {

struct SuiteCase {
    std::uint64_t seed = 0;
    double baseline_dice = 0.0;
    MetricsReport metrics;
    /// Dice after the affine stage and after each cascade.
    std::vector<double> stage_dice;
};

struct SuiteSummary {
    std::size_t cases = 0;
    double mean_baseline_dice = 0.0;
    double mean_dice = 0.0;
    double mean_pct_neg_jacobian = 0.0;
    double max_runtime_seconds = 0.0;
    /// Mean Dice after the affine stage (index 0) and after each cascade.
    std::vector<double> mean_stage_dice;
};

SuiteCase run_suite_case(std::uint64_t seed, const PhantomParams& params, const RegistrationConfig& config);

/// Cases seeds first_seed .. first_seed + count - 1; up to jobs cases run
/// concurrently. Results are in seed order whatever the job count.
std::vector<SuiteCase> run_suite(std::uint64_t first_seed, int count, const PhantomParams& params,
                                 const RegistrationConfig& config, int jobs = 1,
                                 const std::function<void(const SuiteCase&)>& on_case = {});

SuiteSummary summarize(const std::vector<SuiteCase>& cases);

} // namespace mplreg
