#include "ae2i/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "ae2i/errors.hpp"

namespace ae2i {

namespace {

double squared_distance(const MatrixD& p, std::size_t a, std::size_t b) {
  const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
  const double dx = p(ia, 0) - p(ib, 0);
  const double dy = p(ia, 1) - p(ib, 1);
  const double dz = p(ia, 2) - p(ib, 2);
  return dx * dx + dy * dy + dz * dz;
}

void check_positions(const MatrixD& p) {
  if (p.cols() != 3) throw DimensionError("positions must have 3 columns");
}

void check_index(const MatrixD& p, std::size_t i) {
  if (i >= static_cast<std::size_t>(p.rows())) {
    throw ArgumentError("point index " + std::to_string(i) + " out of range");
  }
}

// Selects the `k` smallest (key, index) pairs in ascending order.
void select_smallest(std::vector<std::pair<double, std::int32_t>>& cand, std::size_t k) {
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
}

}  // namespace

void PointCloud::validate() const {
  if (positions.rows() < 1) throw DataError("point cloud is empty");
  if (positions.cols() != 3) throw DataError("positions must be N x 3");
  if (!positions.allFinite()) throw DataError("positions contain non-finite values");
  if (features.rows() != positions.rows() && !(features.size() == 0 && features.cols() == 0)) {
    throw DataError("feature row count does not match point count");
  }
  if (!labels.empty() && labels.size() != size()) throw DataError("label count does not match point count");
}

IndexList farthest_point_sample(const MatrixD& positions, std::size_t m, std::size_t start) {
  check_positions(positions);
  const auto n = static_cast<std::size_t>(positions.rows());
  if (m < 1 || m > n) throw ArgumentError("farthest_point_sample: need 1 <= m <= N");
  check_index(positions, start);
  IndexList picked;
  picked.reserve(m);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t current = start;
  for (std::size_t s = 0; s < m; ++s) {
    picked.push_back(static_cast<std::int32_t>(current));
    nearest[current] = -1.0;
    std::size_t best = 0;
    double best_d = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (nearest[i] < 0.0) continue;
      nearest[i] = std::min(nearest[i], squared_distance(positions, i, current));
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  return picked;
}

IndexList farthest_point_sample(const PointCloud& cloud, std::size_t m, std::size_t start) {
  return farthest_point_sample(cloud.positions, m, start);
}

NeighborIndex knn_points(const MatrixD& positions, const IndexList& centers, std::size_t k) {
  check_positions(positions);
  const auto n = static_cast<std::size_t>(positions.rows());
  if (k >= n) throw ArgumentError("knn_points: K must be at most N - 1");
  if (k == 0) throw ArgumentError("knn_points: K must be positive");
  NeighborIndex out;
  out.centers = centers;
  out.k = k;
  out.neighbors.resize(centers.size() * k);
  std::vector<std::pair<double, std::int32_t>> cand;
  cand.reserve(n);
  for (std::size_t m = 0; m < centers.size(); ++m) {
    const auto c = static_cast<std::size_t>(centers[m]);
    check_index(positions, c);
    cand.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (i == c) continue;
      cand.emplace_back(squared_distance(positions, c, i), static_cast<std::int32_t>(i));
    }
    select_smallest(cand, k);
    for (std::size_t a = 0; a < k; ++a) out.neighbors[m * k + a] = cand[a].second;
  }
  return out;
}

NeighborIndex knn_points(const PointCloud& cloud, const IndexList& centers, std::size_t k) {
  return knn_points(cloud.positions, centers, k);
}

double edge_distance(const MatrixD& positions, std::size_t j, std::size_t k) {
  check_index(positions, j);
  check_index(positions, k);
  return std::sqrt(std::sqrt(squared_distance(positions, j, k)));
}

double edge_distance(const PointCloud& cloud, std::size_t j, std::size_t k) {
  return edge_distance(cloud.positions, j, k);
}

EdgeNeighborIndex knn_edges(const MatrixD& positions, const NeighborIndex& nbr, std::size_t k_e) {
  check_positions(positions);
  if (k_e < 1 || k_e + 1 > nbr.k) throw ArgumentError("knn_edges: need 1 <= K_e <= K - 1");
  EdgeNeighborIndex out;
  out.k = nbr.k;
  out.k_e = k_e;
  const std::size_t m_count = nbr.center_count();
  out.slots.resize(m_count * nbr.k * k_e);
  out.points.resize(out.slots.size());
  // (distance, terminal point, slot); the point id breaks distance ties.
  struct Cand {
    double d;
    std::int32_t point;
    std::int32_t slot;
    bool operator<(const Cand& o) const { return d < o.d || (d == o.d && point < o.point); }
  };
  std::vector<Cand> cand;
  for (std::size_t m = 0; m < m_count; ++m) {
    for (std::size_t a = 0; a < nbr.k; ++a) {
      const auto j = static_cast<std::size_t>(nbr.neighbor(m, a));
      cand.clear();
      for (std::size_t b = 0; b < nbr.k; ++b) {
        if (b == a) continue;
        const std::int32_t kp = nbr.neighbor(m, b);
        cand.push_back({edge_distance(positions, j, static_cast<std::size_t>(kp)), kp, static_cast<std::int32_t>(b)});
      }
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k_e), cand.end());
      for (std::size_t b = 0; b < k_e; ++b) {
        out.slots[out.offset(m, a, b)] = cand[b].slot;
        out.points[out.offset(m, a, b)] = cand[b].point;
      }
    }
  }
  return out;
}

EdgeNeighborIndex knn_edges(const PointCloud& cloud, const NeighborIndex& nbr, std::size_t k_e) {
  return knn_edges(cloud.positions, nbr, k_e);
}

Vec3 relative_position(const MatrixD& positions, std::size_t a, std::size_t b) {
  check_index(positions, a);
  check_index(positions, b);
  return (positions.row(static_cast<Eigen::Index>(b)) - positions.row(static_cast<Eigen::Index>(a))).transpose();
}

Vec3 relative_position(const PointCloud& cloud, std::size_t a, std::size_t b) {
  return relative_position(cloud.positions, a, b);
}

Vec3 surface_normal(const MatrixD& positions, std::size_t i, std::size_t j, std::size_t k) {
  const Vec3 ik = relative_position(positions, i, k);
  const Vec3 ij = relative_position(positions, i, j);
  return ik.cross(ij);
}

Vec3 surface_normal(const PointCloud& cloud, std::size_t i, std::size_t j, std::size_t k) {
  return surface_normal(cloud.positions, i, j, k);
}

QueryNeighbors knn_query(const MatrixD& reference, const MatrixD& queries, std::size_t k) {
  check_positions(reference);
  check_positions(queries);
  if (reference.rows() == 0) throw DimensionError("knn_query: empty reference set");
  if (k == 0) throw ArgumentError("knn_query: k must be positive");
  const auto n = static_cast<std::size_t>(reference.rows());
  const std::size_t kk = std::min(k, n);
  QueryNeighbors out;
  out.k = kk;
  out.indices.resize(static_cast<std::size_t>(queries.rows()) * kk);
  out.distances.resize(out.indices.size());
  std::vector<std::pair<double, std::int32_t>> cand;
  cand.reserve(n);
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    cand.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d d =
          (queries.row(q) - reference.row(static_cast<Eigen::Index>(i))).transpose();
      cand.emplace_back(d.squaredNorm(), static_cast<std::int32_t>(i));
    }
    select_smallest(cand, kk);
    for (std::size_t t = 0; t < kk; ++t) {
      out.indices[static_cast<std::size_t>(q) * kk + t] = cand[t].second;
      out.distances[static_cast<std::size_t>(q) * kk + t] = std::sqrt(cand[t].first);
    }
  }
  return out;
}

MatrixD gather_positions(const MatrixD& positions, const IndexList& idx) {
  MatrixD out(static_cast<Eigen::Index>(idx.size()), positions.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    check_index(positions, static_cast<std::size_t>(idx[r]));
    out.row(static_cast<Eigen::Index>(r)) = positions.row(idx[r]);
  }
  return out;
}

}  // namespace ae2i
