#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

namespace ets {

inline unsigned default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Runs compute(p) for p in [0, n) on up to `threads` workers and hands each result to
// fold(p, result) on the calling thread in increasing p. Output is independent of `threads`.
template <class Compute, class Fold>
void for_each_path_ordered(std::size_t n, unsigned threads, Compute&& compute, Fold&& fold) {
    using Result = decltype(compute(std::size_t{0}));
    threads = std::max(1u, threads);
    if (threads == 1) {
        for (std::size_t p = 0; p < n; ++p) fold(p, compute(p));
        return;
    }
    const std::size_t batch = 64 * static_cast<std::size_t>(threads);
    std::vector<std::optional<Result>> slots(batch);
    for (std::size_t begin = 0; begin < n; begin += batch) {
        const std::size_t end = std::min(n, begin + batch);
        std::vector<std::exception_ptr> errors(threads);
        {
            std::vector<std::jthread> pool;
            pool.reserve(threads);
            for (unsigned w = 0; w < threads; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        for (std::size_t p = begin + w; p < end; p += threads) slots[p - begin].emplace(compute(p));
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (std::size_t p = begin; p < end; ++p) {
            fold(p, std::move(*slots[p - begin]));
            slots[p - begin].reset();
        }
    }
}

}  // namespace ets
