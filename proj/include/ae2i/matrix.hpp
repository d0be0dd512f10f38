#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace ae2i {

/// Dense row-major matrix; rows are items (points, edges, ...), columns are channels.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using MatrixD = Matrix<double>;
using Vec3 = Eigen::Vector3d;

/// Indices into a point set or a row set.
using IndexList = std::vector<std::int32_t>;

}  // namespace ae2i
