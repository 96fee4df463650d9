#pragma once

// Data-parallel kernels. Every parallel kernel has a serial reference
// twin with the same contract; the tests compare the two and the
// benchmark target times them against each other.
//
// Parallel reductions are done over fixed-size blocks that are combined
// in block order, so results do not depend on the thread count.

#include <cstdint>
#include <exception>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "slmfit/sparse.hpp"
#include "slmfit/weights.hpp"

namespace slmfit::kernels {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

/// Evaluates fn(i) for i in [0, n) and returns results in index order.
/// If any call throws, the exception of the lowest failing index is
/// rethrown after the loop.
template <class T, class Fn>
std::vector<T> serial_map(std::size_t n, Fn&& fn) {
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(fn(i));
  return out;
}

template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n, Fn&& fn) {
  std::vector<T> out(n);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

struct KnnResult {
  int k = 0;
  std::vector<Eigen::Index> neighbors;   // row-major n x k, nearest first
  std::vector<Eigen::Index> tied_rows;   // rows where the k-th distance is tied
};

KnnResult knn_serial(std::span<const Point2> coords, int k);
KnnResult knn_parallel(std::span<const Point2> coords, int k);

/// tr(W^j) for j = 0..max_power, computed exactly column by column.
std::vector<double> trace_powers_serial(const SparseMat& w, int max_power);
std::vector<double> trace_powers_parallel(const SparseMat& w, int max_power);

/// Hutchinson estimate of tr(W^j) with Rademacher probes from a fixed seed.
std::vector<double> trace_powers_stochastic(const SparseMat& w, int max_power,
                                            int probes, std::uint64_t seed);

}  // namespace slmfit::kernels
