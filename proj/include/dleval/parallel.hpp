#pragma once

#include <omp.h>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <thread>

namespace dleval::parallel {

inline unsigned hardware_workers() noexcept {
  return std::max(1u, std::thread::hardware_concurrency());
}

// 0 means "one worker per hardware thread".
inline unsigned resolve_workers(unsigned requested) noexcept {
  return requested == 0 ? hardware_workers() : requested;
}

// Runs body(begin, end) once per worker on fixed contiguous chunks covering
// [0, count). Every chunk except possibly the last starts and ends on a
// multiple of `align`. Empty chunks are not dispatched.
template <class Body>
void for_chunks(std::size_t count, unsigned workers, std::size_t align, Body&& body) {
  if (count == 0) return;
  align = std::max<std::size_t>(align, 1);
  const std::size_t units = (count + align - 1) / align;
  const unsigned w = static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), units));
  if (w <= 1) {
    body(std::size_t{0}, count);
    return;
  }
#pragma omp parallel num_threads(w)
  {
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t per = units / nt;
    const std::size_t extra = units % nt;
    const std::size_t first = t * per + std::min(t, extra);
    const std::size_t last = first + per + (t < extra ? 1 : 0);
    const std::size_t begin = std::min(first * align, count);
    const std::size_t end = std::min(last * align, count);
    if (begin < end) body(begin, end);
  }
}

// Runs body(i) for every i in [0, count) with a static per-element schedule.
template <class Body>
void for_each_index(std::size_t count, unsigned workers, Body&& body) {
  if (count == 0) return;
  const unsigned w = resolve_workers(workers);
  const auto n = static_cast<std::int64_t>(count);
  if (w <= 1) {
    for (std::int64_t i = 0; i < n; ++i) body(static_cast<std::size_t>(i));
    return;
  }
#pragma omp parallel for num_threads(w) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) body(static_cast<std::size_t>(i));
}

}  // namespace dleval::parallel
