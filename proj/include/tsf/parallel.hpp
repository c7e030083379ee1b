#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "tsf/error.hpp"
#include "tsf/format.hpp"

namespace tsf {

inline constexpr const char* kWorkersEnv = "TSF_WORKERS";

/// Pool size from TSF_WORKERS; defaults to the hardware thread count.
inline std::size_t worker_count() {
  if (const char* env = std::getenv(kWorkersEnv); env && *env) {
    const auto v = parse_int(env);
    if (!v || *v < 1) fail(ErrorKind::config, std::string(kWorkersEnv) + " must be a positive integer, got '" + env + "'");
    return static_cast<std::size_t>(*v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written by index; if several tasks throw, the lowest index wins so the
/// reported error does not depend on scheduling.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace tsf
