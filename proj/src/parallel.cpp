#include "ep2t/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace ep2t {

namespace {

int env_thread_cap() {
  const char* value = std::getenv("E2P_THREADS");
  if (value == nullptr) return 0;
  const int n = std::atoi(value);
  return n > 0 ? n : 0;
}

}  // namespace

int default_thread_count() {
  const int cap = env_thread_cap();
  if (cap > 0) return cap;
  return std::max(1u, std::thread::hardware_concurrency());
}

int resolve_thread_count(int requested) {
  const int n = requested > 0 ? requested : default_thread_count();
  const int cap = env_thread_cap();
  return cap > 0 ? std::min(n, cap) : n;
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(n)));
  if (workers == 1) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
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

}  // namespace ep2t
