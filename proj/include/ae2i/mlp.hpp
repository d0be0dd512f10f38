#pragma once

#include "ae2i/ops.hpp"
#include "ae2i/params.hpp"
#include "ae2i/tape.hpp"

namespace ae2i {

/// Affine -> ReLU for every hidden layer, affine output.
template <typename T>
Var<T> mlp_forward(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mlp, const Var<T>& input);

/// Same as mlp_forward applied to the row differences points[to[r]] - points[from[r]].
/// The first layer is evaluated once per point and differenced afterwards,
/// which is exact for an affine layer and much cheaper when rows >> points.
template <typename T>
Var<T> mlp_forward_pairdiff(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mlp,
                            const Var<T>& points, SharedIndex from, SharedIndex to);

}  // namespace ae2i
