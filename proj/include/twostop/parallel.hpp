#ifndef TWOSTOP_PARALLEL_HPP
#define TWOSTOP_PARALLEL_HPP

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace twostop {

/// Worker count for a requested cap; 0 means hardware concurrency.
inline unsigned resolve_threads(unsigned requested)
{
    unsigned hw = std::max(1U, std::thread::hardware_concurrency());
    return requested == 0 ? hw : std::min(requested, hw);
}

/// Run f(i) for i in [0, n) on up to `threads` workers, contiguous chunks.
/// Output must not depend on the schedule; callers write disjoint slots.
template <class F>
void par_for(int n, unsigned threads, F&& f)
{
    unsigned workers = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max(n, 1)));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    int chunk = (n + static_cast<int>(workers) - 1) / static_cast<int>(workers);
    for (unsigned w = 0; w < workers; ++w) {
        int lo = static_cast<int>(w) * chunk;
        int hi = std::min(n, lo + chunk);
        pool.emplace_back([&, lo, hi, w] {
            try {
                for (int i = lo; i < hi; ++i)
                    f(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

}  // namespace twostop

#endif  // TWOSTOP_PARALLEL_HPP
