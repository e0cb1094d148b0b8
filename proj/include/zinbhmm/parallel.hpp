#pragma once

// Bounded worker pool for independent tasks (replicates, K-grid fits).

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "zinbhmm/errors.hpp"

namespace zinbhmm {

inline constexpr const char* kThreadsEnv = "ZINBHMM_THREADS";

/// Worker count from ZINBHMM_THREADS, else the hardware concurrency.
inline int default_thread_count() {
  if (const char* env = std::getenv(kThreadsEnv); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs task(i) for i in [0, n) on up to `threads` workers. Exceptions are
/// captured per task; the returned vector holds nullptr for tasks that
/// succeeded.
inline std::vector<std::exception_ptr> parallel_for(std::size_t n, int threads,
                                                    const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (count <= 1) {
    worker();
    return errors;
  }
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  }
  return errors;
}

}  // namespace zinbhmm
