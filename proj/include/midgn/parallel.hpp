#pragma once

#include <cstddef>
#include <functional>

namespace midgn {

/// Number of worker threads used by the kernels. Defaults to the value of
/// MIDGN_THREADS, or 1 when unset.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(begin, end) over a static partition of [0, n). Each index is
/// owned by exactly one worker, so kernels that write only to rows they own
/// produce results that do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Sum of f(i) over [0, n), reduced in fixed blocks so the result is
/// independent of the thread count.
double parallel_sum(std::size_t n, const std::function<double(std::size_t)>& f);

}  // namespace midgn
