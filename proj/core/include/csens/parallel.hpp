#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace csens {

// Runs work(0..n_tasks-1) on up to `threads` workers. Tasks must write to
// disjoint slots; the first exception is rethrown after all workers join.
inline void parallel_for(int n_tasks, int threads,
                         const std::function<void(int)>& work) {
  if (threads <= 1 || n_tasks <= 1) {
    for (int i = 0; i < n_tasks; ++i) work(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto runner = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n_tasks) break;
      try {
        work(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int t = std::min(threads, n_tasks);
  pool.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) pool.emplace_back(runner);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace csens
