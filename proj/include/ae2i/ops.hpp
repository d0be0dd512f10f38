#pragma once

#include <memory>
#include <vector>

#include "ae2i/matrix.hpp"
#include "ae2i/tape.hpp"

namespace ae2i {

/// Row index list shared between a forward op and its backward closure.
using SharedIndex = std::shared_ptr<const IndexList>;

inline SharedIndex share(IndexList idx) { return std::make_shared<const IndexList>(std::move(idx)); }

// ---------------------------------------------------------------------------
// Plain (tape-free) kernels.

/// Softmax across the columns of each row, with max subtraction.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits);

template <typename T>
struct MaxPoolResult {
  RowVector<T> pooled;
  std::vector<std::int32_t> argmax;  // per channel; lowest row wins ties
};

/// Channel-wise max over the rows of `stack`.
template <typename T>
MaxPoolResult<T> channel_max_pool(const Matrix<T>& stack);

// ---------------------------------------------------------------------------
// Differentiable ops. Every op records onto the tape owning its first operand.

/// x * w (+ b). `b` may be a default-constructed Var for no bias.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Adds the 1 x C row `b` to every row of x.
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

/// Element-wise product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T s);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b);

/// y[r] = x[idx[r]]; backward scatter-adds.
template <typename T>
Var<T> gather_rows(const Var<T>& x, SharedIndex idx);

/// Rows form consecutive groups of `group`; softmax runs down each column of a group.
template <typename T>
Var<T> group_softmax(const Var<T>& x, std::size_t group);

/// Sums each group of `group` consecutive rows.
template <typename T>
Var<T> group_sum(const Var<T>& x, std::size_t group);

/// Channel-wise max of each group of consecutive rows. The full gradient goes
/// to the recorded argmax row (lowest row on ties).
template <typename T>
Var<T> group_max(const Var<T>& x, std::size_t group);

/// y[r] = sum_t weights(r, t) * x[idx[r * k + t]] with k = weights.cols().
/// Weights are constants.
template <typename T>
Var<T> weighted_gather(const Var<T>& x, SharedIndex idx, Matrix<T> weights);

/// Mean softmax cross-entropy over rows; returns a 1 x 1 value.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<std::int32_t>& labels);

/// sum(x .* w) as a 1 x 1 value, `w` constant.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Matrix<T>& w);

// ---------------------------------------------------------------------------
// Fault injection for exercising the gradient checker. Not for production use.
namespace fault {
void set_sign_flip(bool enabled);
bool sign_flip();
}  // namespace fault

}  // namespace ae2i
