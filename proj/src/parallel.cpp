#include "parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mplreg {

namespace {

std::atomic<int> g_override{0};

int env_workers()
{
    int hw = int(std::thread::hardware_concurrency());
    if (hw <= 0)
        hw = 1;
    if (const char* env = std::getenv("MPLREG_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0)
            return std::min(hw, cap);
    }
    return hw;
}

} // namespace

int worker_count()
{
    int o = g_override.load();
    return o > 0 ? o : env_workers();
}

void set_worker_count(int n)
{
    g_override.store(std::max(0, n));
}

void parallel_for(int n, const std::function<void(int)>& fn)
{
    if (n <= 0)
        return;
    int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int k = 0; k < n; ++k)
            fn(k);
        return;
    }

    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (int w = 0; w < workers; ++w) {
        int begin = int((long long)n * w / workers);
        int end = int((long long)n * (w + 1) / workers);
        pool.emplace_back([&, begin, end] {
            try {
                for (int k = begin; k < end; ++k)
                    fn(k);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

} // namespace mplreg
