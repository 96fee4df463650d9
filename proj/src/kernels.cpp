#include "slmfit/kernels.hpp"

#include <algorithm>
#include <random>

namespace slmfit::kernels {

namespace {

constexpr std::int64_t kBlock = 64;

struct Candidate {
  double dist2;
  Eigen::Index index;
};

// Nearest k of row i, ties by smallest index. Returns true when the k-th
// and (k+1)-th distances coincide (or the point duplicates another).
bool knn_row(std::span<const Point2> coords, int k, Eigen::Index i,
             std::vector<Candidate>& scratch, Eigen::Index* out) {
  const auto n = static_cast<Eigen::Index>(coords.size());
  scratch.clear();
  const Point2 p = coords[static_cast<std::size_t>(i)];
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) continue;
    const double dx = coords[static_cast<std::size_t>(j)].x - p.x;
    const double dy = coords[static_cast<std::size_t>(j)].y - p.y;
    scratch.push_back({dx * dx + dy * dy, j});
  }
  const auto less = [](const Candidate& a, const Candidate& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
  };
  const std::size_t keep = std::min<std::size_t>(scratch.size(), static_cast<std::size_t>(k) + 1);
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(keep),
                    scratch.end(), less);
  for (int r = 0; r < k; ++r) out[r] = scratch[static_cast<std::size_t>(r)].index;
  bool tied = scratch.front().dist2 == 0.0;
  if (keep > static_cast<std::size_t>(k))
    tied = tied || scratch[static_cast<std::size_t>(k)].dist2 ==
                       scratch[static_cast<std::size_t>(k) - 1].dist2;
  return tied;
}

// Adds the diagonal of W^j e_c for j = 0..max_power into acc.
void column_traces(const SparseMat& w, int max_power, Eigen::Index c, Eigen::VectorXd& v,
                   Eigen::VectorXd& next, std::vector<double>& acc) {
  v.setZero();
  v[c] = 1.0;
  acc[0] += 1.0;
  for (int j = 1; j <= max_power; ++j) {
    next.noalias() = w * v;
    v.swap(next);
    acc[static_cast<std::size_t>(j)] += v[c];
  }
}

}  // namespace

KnnResult knn_serial(std::span<const Point2> coords, int k) {
  const auto n = static_cast<Eigen::Index>(coords.size());
  KnnResult out;
  out.k = k;
  out.neighbors.resize(static_cast<std::size_t>(n * k));
  std::vector<Candidate> scratch;
  for (Eigen::Index i = 0; i < n; ++i)
    if (knn_row(coords, k, i, scratch, out.neighbors.data() + i * k)) out.tied_rows.push_back(i);
  return out;
}

KnnResult knn_parallel(std::span<const Point2> coords, int k) {
  const auto n = static_cast<std::int64_t>(coords.size());
  KnnResult out;
  out.k = k;
  out.neighbors.resize(static_cast<std::size_t>(n * k));
  std::vector<char> tied(static_cast<std::size_t>(n), 0);
#pragma omp parallel
  {
    std::vector<Candidate> scratch;
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
      tied[static_cast<std::size_t>(i)] =
          knn_row(coords, k, i, scratch, out.neighbors.data() + i * k) ? 1 : 0;
  }
  for (std::int64_t i = 0; i < n; ++i)
    if (tied[static_cast<std::size_t>(i)]) out.tied_rows.push_back(i);
  return out;
}

std::vector<double> trace_powers_serial(const SparseMat& w, int max_power) {
  const Eigen::Index n = w.rows();
  const std::size_t width = static_cast<std::size_t>(max_power) + 1;
  std::vector<double> out(width, 0.0), acc(width);
  Eigen::VectorXd v(n), next(n);
  // Same block-wise reduction as the parallel twin, so the two agree bit for bit.
  for (Eigen::Index start = 0; start < n; start += kBlock) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const Eigen::Index end = std::min<Eigen::Index>(n, start + kBlock);
    for (Eigen::Index c = start; c < end; ++c) column_traces(w, max_power, c, v, next, acc);
    for (std::size_t j = 0; j < width; ++j) out[j] += acc[j];
  }
  return out;
}

std::vector<double> trace_powers_parallel(const SparseMat& w, int max_power) {
  const Eigen::Index n = w.rows();
  const std::int64_t blocks = (n + kBlock - 1) / kBlock;
  const std::size_t width = static_cast<std::size_t>(max_power) + 1;
  std::vector<double> partial(static_cast<std::size_t>(blocks) * width, 0.0);
#pragma omp parallel
  {
    Eigen::VectorXd v(n), next(n);
    std::vector<double> acc(width);
#pragma omp for schedule(dynamic, 1)
    for (std::int64_t b = 0; b < blocks; ++b) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const Eigen::Index end = std::min<Eigen::Index>(n, (b + 1) * kBlock);
      for (Eigen::Index c = b * kBlock; c < end; ++c) column_traces(w, max_power, c, v, next, acc);
      std::copy(acc.begin(), acc.end(), partial.begin() + static_cast<std::ptrdiff_t>(b) * static_cast<std::ptrdiff_t>(width));
    }
  }
  std::vector<double> out(width, 0.0);
  for (std::int64_t b = 0; b < blocks; ++b)
    for (std::size_t j = 0; j < width; ++j) out[j] += partial[static_cast<std::size_t>(b) * width + j];
  return out;
}

std::vector<double> trace_powers_stochastic(const SparseMat& w, int max_power, int probes,
                                            std::uint64_t seed) {
  const Eigen::Index n = w.rows();
  const std::size_t width = static_cast<std::size_t>(max_power) + 1;
  // Probe vectors are generated up front so the estimate is independent of
  // the thread count.
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Eigen::MatrixXd z(n, probes);
  for (int p = 0; p < probes; ++p)
    for (Eigen::Index i = 0; i < n; ++i) z(i, p) = coin(rng) ? 1.0 : -1.0;

  std::vector<double> partial(static_cast<std::size_t>(probes) * width, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
  for (int p = 0; p < probes; ++p) {
    Eigen::VectorXd v = z.col(p);
    const Eigen::VectorXd z0 = z.col(p);
    partial[static_cast<std::size_t>(p) * width] = z0.dot(v);
    for (int j = 1; j <= max_power; ++j) {
      v = w * v;
      partial[static_cast<std::size_t>(p) * width + static_cast<std::size_t>(j)] = z0.dot(v);
    }
  }
  std::vector<double> out(width, 0.0);
  for (int p = 0; p < probes; ++p)
    for (std::size_t j = 0; j < width; ++j)
      out[j] += partial[static_cast<std::size_t>(p) * width + j] / probes;
  out[0] = static_cast<double>(n);
  return out;
}

}  // namespace slmfit::kernels
