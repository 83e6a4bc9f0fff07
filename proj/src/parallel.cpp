#include "midgn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace midgn {

namespace {

std::size_t initial_threads() {
  if (const char* env = std::getenv("MIDGN_THREADS")) {
    try {
      long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<std::size_t>& threads_setting() {
  static std::atomic<std::size_t> n{initial_threads()};
  return n;
}

constexpr std::size_t kSumBlock = 1024;

}  // namespace

std::size_t thread_count() { return threads_setting().load(); }
void set_thread_count(std::size_t n) { threads_setting().store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1 || n < 64) {
    if (n > 0) body(0, n);
    return;
  }
  const std::size_t step = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t lo = w * step;
    const std::size_t hi = std::min(n, lo + step);
    if (lo < hi) pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body(0, std::min(n, step));
}

double parallel_sum(std::size_t n, const std::function<double(std::size_t)>& f) {
  const std::size_t blocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partial(blocks, 0.0);
  parallel_for(blocks, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) {
      double s = 0.0;
      const std::size_t end = std::min(n, (b + 1) * kSumBlock);
      for (std::size_t i = b * kSumBlock; i < end; ++i) s += f(i);
      partial[b] = s;
    }
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace midgn
