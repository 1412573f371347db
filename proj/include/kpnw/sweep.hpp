#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace kpnw {

// Runs task(i) for every i in [0, n) on a fixed pool of `workers` threads.
// The calling thread is the only consumer: sink(i, result) sees results in
// index order, whatever order they complete in. An exception from a task is
// rethrown on the calling thread once its turn comes.
template <class T>
void ordered_parallel(std::size_t n, int workers, const std::function<T(std::size_t)>& task,
                      const std::function<void(std::size_t, T&&)>& sink) {
    if (n == 0) return;
    std::vector<std::optional<T>> done(n);
    std::vector<std::exception_ptr> failed(n);
    std::mutex m;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};

    auto work = [&] {
        for (std::size_t i; !stop && (i = next.fetch_add(1)) < n;) {
            std::optional<T> r;
            std::exception_ptr e;
            try {
                r.emplace(task(i));
            } catch (...) {
                e = std::current_exception();
            }
            {
                std::lock_guard lk(m);
                done[i] = std::move(r);
                failed[i] = e;
            }
            cv.notify_all();
        }
    };
    const int nw = std::max(1, std::min<int>(workers, int(n)));
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (int w = 0; w < nw; ++w) pool.emplace_back(work);

    std::exception_ptr err;
    for (std::size_t i = 0; i < n && !err; ++i) {
        std::unique_lock lk(m);
        cv.wait(lk, [&] { return done[i].has_value() || failed[i]; });
        if (failed[i]) {
            err = failed[i];
            break;
        }
        T r = std::move(*done[i]);
        done[i].reset();
        lk.unlock();
        try {
            sink(i, std::move(r));
        } catch (...) {
            err = std::current_exception();
        }
    }
    if (err) stop = true;
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace kpnw
