#include "migrate/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <string>

namespace migrate {

int worker_count() {
  if (const char* env = std::getenv("MIGRATE_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      return 1;
    }
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace detail {

void run_chunks(Eigen::Index chunk_count, const std::function<void(Eigen::Index)>& body) {
  int workers = std::min<Eigen::Index>(worker_count(), chunk_count);
  if (workers <= 1) {
    for (Eigen::Index c = 0; c < chunk_count; ++c) body(c);
    return;
  }
  std::atomic<Eigen::Index> next{0};
  // Failures are collected per chunk and the lowest-index one is rethrown, so
  // the surfaced error does not depend on thread scheduling.
  std::mutex err_mutex;
  Eigen::Index err_chunk = chunk_count;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        Eigen::Index c = next.fetch_add(1, std::memory_order_relaxed);
        if (c >= chunk_count) return;
        try {
          body(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (c < err_chunk) {
            err_chunk = c;
            err = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace detail

}  // namespace migrate
