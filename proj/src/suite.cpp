#include "suite.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace mplreg {

SuiteCase run_suite_case(std::uint64_t seed, const PhantomParams& params, const RegistrationConfig& config)
{
    const PhantomCase c = generate_phantom_pair(seed, params);
    const RegistrationPair pair{c.moving, c.fixed, c.moving_label, c.fixed_label};
    SuiteCase out;
    out.seed = seed;
    out.baseline_dice = dice(c.moving_label, c.fixed_label);
    const RegistrationResult r = register_images(pair, config);
    out.metrics = r.metrics;
    for (const StageTrace& s : r.stages)
        out.stage_dice.push_back(s.dice_after);
    return out;
}

std::vector<SuiteCase> run_suite(std::uint64_t first_seed, int count, const PhantomParams& params,
                                 const RegistrationConfig& config, int jobs,
                                 const std::function<void(const SuiteCase&)>& on_case)
{
    if (count < 1)
        fail(ErrorCode::InvalidArgument, "suite needs at least one case");
    std::vector<SuiteCase> out(static_cast<std::size_t>(count));
    std::atomic<int> next{0};
    std::mutex lock;
    std::exception_ptr error;
    auto work = [&] {
        for (int i = next++; i < count; i = next++) {
            try {
                out[std::size_t(i)] = run_suite_case(first_seed + std::uint64_t(i), params, config);
                if (on_case) {
                    std::lock_guard<std::mutex> g(lock);
                    on_case(out[std::size_t(i)]);
                }
            } catch (...) {
                std::lock_guard<std::mutex> g(lock);
                if (!error)
                    error = std::current_exception();
                next = count;
            }
        }
    };
    const int threads = std::clamp(jobs, 1, count);
    if (threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    if (error)
        std::rethrow_exception(error);
    return out;
}

SuiteSummary summarize(const std::vector<SuiteCase>& cases)
{
    SuiteSummary s;
    s.cases = cases.size();
    if (cases.empty())
        return s;
    std::size_t stages = cases.front().stage_dice.size();
    for (const auto& c : cases)
        stages = std::min(stages, c.stage_dice.size());
    s.mean_stage_dice.assign(stages, 0.0);
    for (const auto& c : cases) {
        s.mean_baseline_dice += c.baseline_dice;
        s.mean_dice += c.metrics.dice;
        s.mean_pct_neg_jacobian += c.metrics.pct_neg_jacobian;
        s.max_runtime_seconds = std::max(s.max_runtime_seconds, c.metrics.runtime_seconds);
        for (std::size_t k = 0; k < stages; ++k)
            s.mean_stage_dice[k] += c.stage_dice[k];
    }
    const double n = double(cases.size());
    s.mean_baseline_dice /= n;
    s.mean_dice /= n;
    s.mean_pct_neg_jacobian /= n;
    for (double& d : s.mean_stage_dice)
        d /= n;
    return s;
}

} // namespace mplreg
