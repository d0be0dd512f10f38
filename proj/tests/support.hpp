#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "ae2i/geometry.hpp"
#include "ae2i/matrix.hpp"
#include "ae2i/rng.hpp"

namespace ae2i::testing {

inline MatrixD random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// Continuous coordinates; distance ties have probability zero.
inline PointCloud random_cloud(Rng& rng, std::size_t n, std::size_t channels = 0) {
  PointCloud c;
  c.positions = random_matrix(rng, n, 3);
  c.features = random_matrix(rng, n, channels);
  return c;
}

/// Small integer coordinates; many exact distance ties.
inline PointCloud grid_cloud(Rng& rng, std::size_t n) {
  PointCloud c;
  c.positions.resize(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < c.positions.size(); ++i) {
    c.positions.data()[i] = static_cast<double>(rng.index(4));
  }
  c.features.resize(static_cast<Eigen::Index>(n), 0);
  return c;
}

inline double sq_dist(const MatrixD& p, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double x = p(static_cast<Eigen::Index>(a), d) - p(static_cast<Eigen::Index>(b), d);
    s += x * x;
  }
  return s;
}

/// Exhaustive sort: K nearest other points, ties by lower index.
inline IndexList oracle_knn(const MatrixD& p, std::size_t center, std::size_t k) {
  std::vector<std::tuple<double, std::size_t>> all;
  for (std::size_t j = 0; j < static_cast<std::size_t>(p.rows()); ++j) {
    if (j != center) all.emplace_back(sq_dist(p, center, j), j);
  }
  std::sort(all.begin(), all.end());
  IndexList out;
  for (std::size_t a = 0; a < k; ++a) out.push_back(static_cast<std::int32_t>(std::get<1>(all[a])));
  return out;
}

/// Greedy max-min selection over unpicked points, recomputed from scratch at
/// every step.
inline IndexList oracle_fps(const MatrixD& p, std::size_t m, std::size_t start) {
  IndexList picked{static_cast<std::int32_t>(start)};
  const std::size_t n = static_cast<std::size_t>(p.rows());
  while (picked.size() < m) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::find(picked.begin(), picked.end(), static_cast<std::int32_t>(j)) != picked.end()) continue;
      double nearest = INFINITY;
      for (std::int32_t s : picked) nearest = std::min(nearest, sq_dist(p, j, static_cast<std::size_t>(s)));
      if (nearest > best) {
        best = nearest;
        arg = j;
      }
    }
    picked.push_back(static_cast<std::int32_t>(arg));
  }
  return picked;
}

/// Edge neighbors of every (center, slot) by plain squared Euclidean distance
/// between terminal points, self slot excluded, ties by lower point index.
/// Returned as point ids, M x k x k_e.
inline IndexList oracle_edges(const MatrixD& p, const NeighborIndex& nbr, std::size_t k_e) {
  IndexList out;
  for (std::size_t m = 0; m < nbr.center_count(); ++m) {
    for (std::size_t a = 0; a < nbr.k; ++a) {
      const auto j = static_cast<std::size_t>(nbr.neighbor(m, a));
      std::vector<std::tuple<double, std::int32_t>> all;
      for (std::size_t b = 0; b < nbr.k; ++b) {
        if (b == a) continue;
        const std::int32_t kk = nbr.neighbor(m, b);
        all.emplace_back(sq_dist(p, j, static_cast<std::size_t>(kk)), kk);
      }
      std::sort(all.begin(), all.end());
      for (std::size_t t = 0; t < k_e; ++t) out.push_back(std::get<1>(all[t]));
    }
  }
  return out;
}

/// Metrics tallied directly from (truth, prediction) pairs: per-class true
/// positives, false positives and false negatives, averaged in class order
/// over classes present in the truth.
struct OracleMetrics {
  std::vector<std::uint64_t> counts;  // truth * n + predicted
  double oa = 0.0, macc = 0.0, miou = 0.0;
};

inline OracleMetrics oracle_metrics(const std::vector<std::int32_t>& truth, const std::vector<std::int32_t>& pred,
                                    std::size_t n) {
  OracleMetrics m;
  m.counts.assign(n * n, 0);
  std::uint64_t correct = 0;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    ++m.counts[static_cast<std::size_t>(truth[s]) * n + static_cast<std::size_t>(pred[s])];
    if (truth[s] == pred[s]) ++correct;
  }
  double acc = 0.0, iou = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t s = 0; s < truth.size(); ++s) {
      const bool t = static_cast<std::size_t>(truth[s]) == c, p = static_cast<std::size_t>(pred[s]) == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    if (tp + fn == 0) continue;
    acc += static_cast<double>(tp) / static_cast<double>(tp + fn);
    iou += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    ++present;
  }
  m.oa = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.macc = acc / static_cast<double>(present);
  m.miou = iou / static_cast<double>(present);
  return m;
}

}  // namespace ae2i::testing
