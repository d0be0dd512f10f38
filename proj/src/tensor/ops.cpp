#include "ae2i/ops.hpp"

#include <atomic>
#include <cmath>
#include <string>
#include <utility>

#include "ae2i/errors.hpp"

namespace ae2i {

namespace fault {
namespace {
std::atomic<bool> g_sign_flip{false};
}
void set_sign_flip(bool enabled) { g_sign_flip.store(enabled); }
bool sign_flip() { return g_sign_flip.load(std::memory_order_relaxed); }
}  // namespace fault

namespace {

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw StateError(std::string(op) + ": operands on different tapes");
}

void require_groups(Eigen::Index rows, std::size_t group, const char* op) {
  if (group == 0 || rows % static_cast<Eigen::Index>(group) != 0) {
    throw DimensionError(std::string(op) + ": row count " + std::to_string(rows) +
                         " is not a multiple of group size " + std::to_string(group));
  }
}

template <typename T>
void softmax_inplace(T* v, std::size_t n, std::size_t stride) {
  T m = v[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, v[i * stride]);
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i * stride] = std::exp(v[i * stride] - m);
    s += v[i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) v[i * stride] /= s;
}

}  // namespace

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  if (logits.cols() == 0) throw DimensionError("softmax_rows: empty row");
  Matrix<T> out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    softmax_inplace(out.row(r).data(), static_cast<std::size_t>(out.cols()), 1);
  }
  return out;
}

template <typename T>
MaxPoolResult<T> channel_max_pool(const Matrix<T>& stack) {
  if (stack.rows() == 0) throw DimensionError("channel_max_pool: empty stack");
  MaxPoolResult<T> res;
  res.pooled = stack.row(0);
  res.argmax.assign(static_cast<std::size_t>(stack.cols()), 0);
  for (Eigen::Index r = 1; r < stack.rows(); ++r) {
    for (Eigen::Index c = 0; c < stack.cols(); ++c) {
      if (stack(r, c) > res.pooled(c)) {
        res.pooled(c) = stack(r, c);
        res.argmax[static_cast<std::size_t>(c)] = static_cast<std::int32_t>(r);
      }
    }
  }
  return res;
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  Tape<T>& tape = x.tape();
  require_same_tape(x, w, "linear");
  const Matrix<T>& xv = x.value();
  const Matrix<T>& wv = w.value();
  if (xv.cols() != wv.rows()) {
    throw DimensionError("linear: input width " + std::to_string(xv.cols()) +
                         " does not match weight rows " + std::to_string(wv.rows()));
  }
  Matrix<T> y(xv.rows(), wv.cols());
  y.noalias() = xv * wv;
  const bool has_bias = b.valid();
  if (has_bias) {
    require_same_tape(x, b, "linear");
    if (b.rows() != 1 || b.cols() != wv.cols()) throw DimensionError("linear: bias shape mismatch");
    y.rowwise() += b.value().row(0);
  }
  const std::size_t xid = x.id(), wid = w.id(), bid = has_bias ? b.id() : 0;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w) || (has_bias && tape.requires_grad(b));
  return tape.record(std::move(y), rg, [xid, wid, bid, has_bias](Tape<T>& t, const Matrix<T>& g) {
    const Matrix<T>& xv = t.value(xid);
    const Matrix<T>& wv = t.value(wid);
    if (t.requires_grad(xid)) {
      Matrix<T> gx(g.rows(), wv.rows());
      gx.noalias() = g * wv.transpose();
      t.accumulate(xid, std::move(gx));
    }
    if (t.requires_grad(wid)) {
      Matrix<T> gw(wv.rows(), wv.cols());
      gw.noalias() = xv.transpose() * g;
      if (fault::sign_flip()) gw = -gw;
      t.accumulate(wid, std::move(gw));
    }
    if (has_bias && t.requires_grad(bid)) {
      Matrix<T> gb = g.colwise().sum();
      t.accumulate(bid, std::move(gb));
    }
  });
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
  Tape<T>& tape = x.tape();
  require_same_tape(x, b, "add_bias");
  if (b.rows() != 1 || b.cols() != x.cols()) throw DimensionError("add_bias: bias shape mismatch");
  Matrix<T> y = x.value();
  y.rowwise() += b.value().row(0);
  const std::size_t xid = x.id(), bid = b.id();
  const bool rg = tape.requires_grad(x) || tape.requires_grad(b);
  return tape.record(std::move(y), rg, [xid, bid](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(xid, g);
    if (t.requires_grad(bid)) {
      Matrix<T> gb = g.colwise().sum();
      t.accumulate(bid, std::move(gb));
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = a.tape();
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Matrix<T> y = a.value() + b.value();
  const std::size_t aid = a.id(), bid = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(y), rg, [aid, bid](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(aid, g);
    t.accumulate(bid, g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = a.tape();
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Matrix<T> y = a.value() - b.value();
  const std::size_t aid = a.id(), bid = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(y), rg, [aid, bid](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(aid, g);
    if (t.requires_grad(bid)) t.accumulate(bid, -g);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = a.tape();
  require_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Matrix<T> y = a.value().cwiseProduct(b.value());
  const std::size_t aid = a.id(), bid = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(y), rg, [aid, bid](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(aid)) t.accumulate(aid, g.cwiseProduct(t.value(bid)));
    if (t.requires_grad(bid)) t.accumulate(bid, g.cwiseProduct(t.value(aid)));
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s) {
  Tape<T>& tape = x.tape();
  Matrix<T> y = x.value() * s;
  const std::size_t xid = x.id();
  return tape.record(std::move(y), tape.requires_grad(x),
                     [xid, s](Tape<T>& t, const Matrix<T>& g) { t.accumulate(xid, g * s); });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tape<T>& tape = x.tape();
  Matrix<T> y = x.value().cwiseMax(T(0));
  const std::size_t xid = x.id();
  return tape.record(std::move(y), tape.requires_grad(x), [xid](Tape<T>& t, const Matrix<T>& g) {
    const Matrix<T>& xv = t.value(xid);
    Matrix<T> gx = (xv.array() > T(0)).select(g.array(), T(0)).matrix();
    t.accumulate(xid, std::move(gx));
  });
}

template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = a.tape();
  require_same_tape(a, b, "concat_cols");
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
  const Eigen::Index ca = a.cols(), cb = b.cols();
  Matrix<T> y(a.rows(), ca + cb);
  y.leftCols(ca) = a.value();
  y.rightCols(cb) = b.value();
  const std::size_t aid = a.id(), bid = b.id();
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(y), rg, [aid, bid, ca, cb](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(aid)) t.accumulate(aid, g.leftCols(ca));
    if (t.requires_grad(bid)) t.accumulate(bid, g.rightCols(cb));
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, SharedIndex idx) {
  Tape<T>& tape = x.tape();
  const Matrix<T>& xv = x.value();
  const Eigen::Index n = static_cast<Eigen::Index>(idx->size());
  Matrix<T> y(n, xv.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::int32_t src = (*idx)[static_cast<std::size_t>(r)];
    if (src < 0 || src >= xv.rows()) throw DimensionError("gather_rows: index out of range");
    y.row(r) = xv.row(src);
  }
  const std::size_t xid = x.id();
  const Eigen::Index src_rows = xv.rows();
  return tape.record(std::move(y), tape.requires_grad(x),
                     [xid, idx, src_rows](Tape<T>& t, const Matrix<T>& g) {
                       Matrix<T> gx = Matrix<T>::Zero(src_rows, g.cols());
                       for (Eigen::Index r = 0; r < g.rows(); ++r) {
                         gx.row((*idx)[static_cast<std::size_t>(r)]) += g.row(r);
                       }
                       t.accumulate(xid, std::move(gx));
                     });
}

template <typename T>
Var<T> group_softmax(const Var<T>& x, std::size_t group) {
  Tape<T>& tape = x.tape();
  require_groups(x.rows(), group, "group_softmax");
  Matrix<T> y = x.value();
  const Eigen::Index k = static_cast<Eigen::Index>(group);
  RowVector<T> m(y.cols()), s(y.cols());
  for (Eigen::Index r0 = 0; r0 < y.rows(); r0 += k) {
    auto block = y.middleRows(r0, k);
    m = block.colwise().maxCoeff();
    block.rowwise() -= m;
    block = block.array().exp().matrix();
    s = block.colwise().sum();
    block.array().rowwise() /= s.array();
  }
  const std::size_t xid = x.id();
  const std::size_t yid = tape.size();  // id the output is about to receive
  return tape.record(std::move(y), tape.requires_grad(x), [xid, yid, group](Tape<T>& t, const Matrix<T>& g) {
    const Matrix<T>& yv = t.value(yid);
    Matrix<T> gy = g.cwiseProduct(yv);
    Matrix<T> gx(g.rows(), g.cols());
    const Eigen::Index k = static_cast<Eigen::Index>(group);
    for (Eigen::Index r0 = 0; r0 < g.rows(); r0 += k) {
      const RowVector<T> dot = gy.middleRows(r0, k).colwise().sum();
      gx.middleRows(r0, k) = gy.middleRows(r0, k) - (yv.middleRows(r0, k).array().rowwise() * dot.array()).matrix();
    }
    t.accumulate(xid, std::move(gx));
  });
}

template <typename T>
Var<T> group_sum(const Var<T>& x, std::size_t group) {
  Tape<T>& tape = x.tape();
  require_groups(x.rows(), group, "group_sum");
  const Matrix<T>& xv = x.value();
  const Eigen::Index k = static_cast<Eigen::Index>(group);
  const Eigen::Index groups = xv.rows() / k;
  Matrix<T> y = Matrix<T>::Zero(groups, xv.cols());
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    for (Eigen::Index r = 0; r < k; ++r) y.row(gi) += xv.row(gi * k + r);
  }
  const std::size_t xid = x.id();
  return tape.record(std::move(y), tape.requires_grad(x), [xid, k](Tape<T>& t, const Matrix<T>& g) {
    Matrix<T> gx(g.rows() * k, g.cols());
    for (Eigen::Index gi = 0; gi < g.rows(); ++gi) {
      for (Eigen::Index r = 0; r < k; ++r) gx.row(gi * k + r) = g.row(gi);
    }
    t.accumulate(xid, std::move(gx));
  });
}

template <typename T>
Var<T> group_max(const Var<T>& x, std::size_t group) {
  Tape<T>& tape = x.tape();
  require_groups(x.rows(), group, "group_max");
  const Matrix<T>& xv = x.value();
  const Eigen::Index k = static_cast<Eigen::Index>(group);
  const Eigen::Index groups = xv.rows() / k;
  const Eigen::Index cols = xv.cols();
  Matrix<T> y(groups, cols);
  auto argmax = std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(groups * cols));
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    y.row(gi) = xv.row(gi * k);
    std::int32_t* am = argmax->data() + gi * cols;
    std::fill(am, am + cols, static_cast<std::int32_t>(gi * k));
    for (Eigen::Index r = 1; r < k; ++r) {
      const Eigen::Index row = gi * k + r;
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (xv(row, c) > y(gi, c)) {
          y(gi, c) = xv(row, c);
          am[c] = static_cast<std::int32_t>(row);
        }
      }
    }
  }
  const std::size_t xid = x.id();
  const Eigen::Index src_rows = xv.rows();
  return tape.record(std::move(y), tape.requires_grad(x),
                     [xid, argmax, src_rows](Tape<T>& t, const Matrix<T>& g) {
                       Matrix<T> gx = Matrix<T>::Zero(src_rows, g.cols());
                       const Eigen::Index cols = g.cols();
                       for (Eigen::Index gi = 0; gi < g.rows(); ++gi) {
                         for (Eigen::Index c = 0; c < cols; ++c) {
                           gx((*argmax)[static_cast<std::size_t>(gi * cols + c)], c) += g(gi, c);
                         }
                       }
                       t.accumulate(xid, std::move(gx));
                     });
}

template <typename T>
Var<T> weighted_gather(const Var<T>& x, SharedIndex idx, Matrix<T> weights) {
  Tape<T>& tape = x.tape();
  const Matrix<T>& xv = x.value();
  const Eigen::Index k = weights.cols();
  const Eigen::Index n = weights.rows();
  if (static_cast<Eigen::Index>(idx->size()) != n * k) {
    throw DimensionError("weighted_gather: index count does not match weights");
  }
  Matrix<T> y = Matrix<T>::Zero(n, xv.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const std::int32_t src = (*idx)[static_cast<std::size_t>(r * k + j)];
      if (src < 0 || src >= xv.rows()) throw DimensionError("weighted_gather: index out of range");
      y.row(r) += weights(r, j) * xv.row(src);
    }
  }
  const std::size_t xid = x.id();
  const Eigen::Index src_rows = xv.rows();
  auto w = std::make_shared<const Matrix<T>>(std::move(weights));
  return tape.record(std::move(y), tape.requires_grad(x),
                     [xid, idx, w, src_rows](Tape<T>& t, const Matrix<T>& g) {
                       Matrix<T> gx = Matrix<T>::Zero(src_rows, g.cols());
                       const Eigen::Index k = w->cols();
                       for (Eigen::Index r = 0; r < g.rows(); ++r) {
                         for (Eigen::Index j = 0; j < k; ++j) {
                           gx.row((*idx)[static_cast<std::size_t>(r * k + j)]) += (*w)(r, j) * g.row(r);
                         }
                       }
                       t.accumulate(xid, std::move(gx));
                     });
}

template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<std::int32_t>& labels) {
  Tape<T>& tape = logits.tape();
  const Matrix<T>& z = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != z.rows() || z.rows() == 0) {
    throw DimensionError("softmax_cross_entropy: label count does not match logits");
  }
  Matrix<T> probs = softmax_rows(z);
  T loss = 0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const std::int32_t y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= z.cols()) throw DataError("class id " + std::to_string(y) + " out of range");
    const T m = z.row(r).maxCoeff();
    const T lse = m + std::log((z.row(r).array() - m).exp().sum());
    loss += lse - z(r, y);
  }
  loss /= static_cast<T>(z.rows());
  Matrix<T> out(1, 1);
  out(0, 0) = loss;
  const std::size_t zid = logits.id();
  auto shared_probs = std::make_shared<const Matrix<T>>(std::move(probs));
  auto shared_labels = std::make_shared<const std::vector<std::int32_t>>(labels);
  return tape.record(std::move(out), tape.requires_grad(logits),
                     [zid, shared_probs, shared_labels](Tape<T>& t, const Matrix<T>& g) {
                       Matrix<T> gz = *shared_probs;
                       for (Eigen::Index r = 0; r < gz.rows(); ++r) {
                         gz(r, (*shared_labels)[static_cast<std::size_t>(r)]) -= T(1);
                       }
                       gz *= g(0, 0) / static_cast<T>(gz.rows());
                       t.accumulate(zid, std::move(gz));
                     });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Matrix<T>& w) {
  Tape<T>& tape = x.tape();
  require_same_shape(x.value(), w, "weighted_sum");
  Matrix<T> out(1, 1);
  out(0, 0) = x.value().cwiseProduct(w).sum();
  const std::size_t xid = x.id();
  auto shared_w = std::make_shared<const Matrix<T>>(w);
  return tape.record(std::move(out), tape.requires_grad(x), [xid, shared_w](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(xid, *shared_w * g(0, 0));
  });
}

#define AE2I_INSTANTIATE_OPS(T)                                                              \
  template Matrix<T> softmax_rows<T>(const Matrix<T>&);                                      \
  template MaxPoolResult<T> channel_max_pool<T>(const Matrix<T>&);                           \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                    \
  template Var<T> add_bias<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> scale<T>(const Var<T>&, T);                                                \
  template Var<T> relu<T>(const Var<T>&);                                                    \
  template Var<T> concat_cols<T>(const Var<T>&, const Var<T>&);                              \
  template Var<T> gather_rows<T>(const Var<T>&, SharedIndex);                                \
  template Var<T> group_softmax<T>(const Var<T>&, std::size_t);                              \
  template Var<T> group_sum<T>(const Var<T>&, std::size_t);                                  \
  template Var<T> group_max<T>(const Var<T>&, std::size_t);                                  \
  template Var<T> weighted_gather<T>(const Var<T>&, SharedIndex, Matrix<T>);                 \
  template Var<T> softmax_cross_entropy<T>(const Var<T>&, const std::vector<std::int32_t>&); \
  template Var<T> weighted_sum<T>(const Var<T>&, const Matrix<T>&);

AE2I_INSTANTIATE_OPS(float)
AE2I_INSTANTIATE_OPS(double)

}  // namespace ae2i
