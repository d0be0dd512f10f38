#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ae2i/matrix.hpp"

namespace ae2i {

/// One sample: N x 3 positions, N x C features (C may be 0), optional per-point labels.
struct PointCloud {
  MatrixD positions;
  MatrixD features;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
  std::size_t channels() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws DataError unless N >= 1, positions are finite and row counts agree.
  void validate() const;
};

/// K point-neighbors for each of M centers. Neighbor lists never contain the
/// center and have no duplicates.
struct NeighborIndex {
  IndexList centers;    // M indices into the searched point set
  std::size_t k = 0;
  IndexList neighbors;  // M x k, row-major

  std::size_t center_count() const { return centers.size(); }
  std::int32_t neighbor(std::size_t m, std::size_t a) const { return neighbors[m * k + a]; }
};

/// For every edge e_ij (center m, neighbor slot a) the K_e neighboring edges
/// e_ik, stored both as slots into the center's neighbor list and as point ids.
struct EdgeNeighborIndex {
  std::size_t k = 0;
  std::size_t k_e = 0;
  IndexList slots;   // M x k x k_e
  IndexList points;  // M x k x k_e

  std::size_t offset(std::size_t m, std::size_t a, std::size_t b) const { return (m * k + a) * k_e + b; }
};

/// Greedy max-min subsampling. First pick is `start`; ties go to the lowest index.
IndexList farthest_point_sample(const MatrixD& positions, std::size_t m, std::size_t start = 0);
IndexList farthest_point_sample(const PointCloud& cloud, std::size_t m, std::size_t start = 0);

/// Exhaustive K nearest neighbors of each center, excluding the center itself.
NeighborIndex knn_points(const MatrixD& positions, const IndexList& centers, std::size_t k);
NeighborIndex knn_points(const PointCloud& cloud, const IndexList& centers, std::size_t k);

/// sqrt(||p_j - p_k||_2): square root of the Euclidean distance between terminal points.
double edge_distance(const MatrixD& positions, std::size_t j, std::size_t k);
double edge_distance(const PointCloud& cloud, std::size_t j, std::size_t k);

/// K_e nearest edges of each edge under edge_distance, self-edge excluded,
/// ties broken by lower terminal point index.
EdgeNeighborIndex knn_edges(const MatrixD& positions, const NeighborIndex& nbr, std::size_t k_e);
EdgeNeighborIndex knn_edges(const PointCloud& cloud, const NeighborIndex& nbr, std::size_t k_e);

/// p_b - p_a.
Vec3 relative_position(const MatrixD& positions, std::size_t a, std::size_t b);
Vec3 relative_position(const PointCloud& cloud, std::size_t a, std::size_t b);

/// (p_k - p_i) x (p_j - p_i), unnormalized.
Vec3 surface_normal(const MatrixD& positions, std::size_t i, std::size_t j, std::size_t k);
Vec3 surface_normal(const PointCloud& cloud, std::size_t i, std::size_t j, std::size_t k);

/// K nearest reference points of each query (queries are not excluded from
/// anything). Used for feature propagation between point sets.
struct QueryNeighbors {
  std::size_t k = 0;
  IndexList indices;       // Q x k
  std::vector<double> distances;  // Q x k, Euclidean
};
QueryNeighbors knn_query(const MatrixD& reference, const MatrixD& queries, std::size_t k);

/// Rows of `positions` selected by `idx`.
MatrixD gather_positions(const MatrixD& positions, const IndexList& idx);

}  // namespace ae2i
