#pragma once

#include <algorithm>
#include <array>
#include <cstddef>

namespace pairhalo {

/// Sum of f(i) over [0, n) that gives the same bits for any OpenMP thread
/// count: the range is cut into a fixed number of chunks, each chunk is summed
/// in order, and the chunk totals are combined serially.
template <class F>
double chunked_sum(std::size_t n, F&& f) {
  constexpr int kChunks = 64;
  std::array<double, kChunks> partial{};
  const std::size_t step = (n + kChunks - 1) / kChunks;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < kChunks; ++c) {
    const std::size_t lo = std::min(n, static_cast<std::size_t>(c) * step);
    const std::size_t hi = std::min(n, lo + step);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += f(i);
    partial[c] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace pairhalo
