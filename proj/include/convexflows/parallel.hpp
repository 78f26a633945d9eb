#pragma once

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace convexflows {

// Worker count from CONVEXFLOWS_THREADS, else 1.
inline std::size_t default_threads() {
  if (const char* env = std::getenv("CONVEXFLOWS_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

// Calls f(i) for i in [0, count) over contiguous blocks, one block per
// worker. f must only write to per-index storage; callers reduce afterwards
// in index order, so results do not depend on the worker count.
template <class F>
void parallel_for(std::size_t count, std::size_t workers, F&& f) {
  if (workers <= 1 || count < 2 * workers) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t block = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(count, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([&, w, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace convexflows
