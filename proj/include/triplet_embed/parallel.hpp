#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace triplet_embed {

namespace detail {
inline std::size_t& thread_cap() {
  static std::size_t cap = 0;  // 0 = not configured
  return cap;
}
}  // namespace detail

inline std::size_t hardware_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

// Global worker cap. Falls back to TRIPLET_EMBED_THREADS, then to the
// number of hardware threads.
inline std::size_t max_threads() {
  if (detail::thread_cap() != 0) return detail::thread_cap();
  if (const char* env = std::getenv("TRIPLET_EMBED_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return hardware_threads();
}

inline void set_max_threads(std::size_t n) { detail::thread_cap() = n; }

// Runs body(begin, end) over [0, n) in chunks of `grain`, handed out
// dynamically. Bodies must only write to locations owned by their range,
// so results never depend on scheduling.
template <class Body>
void parallel_for(std::size_t n, std::size_t grain, Body&& body) {
  if (n == 0) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (n + grain - 1) / grain;
  const std::size_t workers = std::min(max_threads(), chunks);
  if (workers <= 1) {
    for (std::size_t b = 0; b < n; b += grain) body(b, std::min(n, b + grain));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      const std::size_t b = c * grain;
      try {
        body(b, std::min(n, b + grain));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(chunks);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace triplet_embed
