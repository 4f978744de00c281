#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace hctl {

/// Runs body(i) for i in [0, count) on up to hardware_concurrency threads.
/// Work items are claimed dynamically; results must be written by index so
/// that the outcome does not depend on scheduling. The first exception is
/// rethrown after all workers finish.
template <class Body>
void parallel_for(int count, Body&& body, unsigned max_threads = 0) {
    unsigned workers = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max(count, 1)));
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&]() {
        for (int i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace hctl
