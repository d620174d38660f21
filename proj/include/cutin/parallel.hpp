#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace cutin {

// Worker count: CUTIN_THREADS if set, else the hardware concurrency.
inline unsigned default_threads() {
    if (const char* e = std::getenv("CUTIN_THREADS")) {
        int v = std::atoi(e);
        if (v > 0) return unsigned(v);
    }
    unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1u : h;
}

// out[i] = f(i) for i < n. Output order is the index order whatever the
// scheduling; the exception from the lowest failing index is rethrown.
template <class F>
auto parallel_map(std::size_t n, F&& f, unsigned threads = 0) {
    using R = std::invoke_result_t<F&, std::size_t>;
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                slots[i].emplace(f(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads == 0) threads = default_threads();
    threads = unsigned(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace cutin
