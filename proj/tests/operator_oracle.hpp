#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "ae2i/operators.hpp"
#include "support.hpp"

namespace ae2i::testing {

using Row = std::vector<double>;

// ---------------------------------------------------------------------------
// Scalar-loop oracle. Every term is evaluated edge by edge from its defining
// formula; nothing is shared with the batched implementation except the
// parameter values and the (separately oracle-checked) neighbor lists.

inline Row mlp(const ParamSet<double>& p, const MlpRef& m, Row x) {
  for (std::size_t l = 0; l < m.layers(); ++l) {
    const MatrixD& w = p.value(m.weight_slots[l]);
    const MatrixD& b = p.value(m.bias_slots[l]);
    Row y(static_cast<std::size_t>(w.cols()));
    for (Eigen::Index o = 0; o < w.cols(); ++o) {
      double s = b(0, o);
      for (Eigen::Index i = 0; i < w.rows(); ++i) s += x[static_cast<std::size_t>(i)] * w(i, o);
      y[static_cast<std::size_t>(o)] = (l + 1 < m.layers()) ? std::max(0.0, s) : s;
    }
    x = std::move(y);
  }
  return x;
}

inline Row cat(const Row& a, const Row& b) {
  Row out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline Row diff(const MatrixD& m, std::int32_t from, std::int32_t to) {
  Row out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = m(to, c) - m(from, c);
  return out;
}

inline Row cross(const Row& a, const Row& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline Row row_of(const MatrixD& m, std::int32_t r) {
  Row out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

struct Instance {
  MatrixD positions;
  MatrixD features;
  IndexList sample;
  std::size_t k = 0;
  std::size_t k_e = 0;
};

// Relation of the edge emanating from a towards b: sigma([p_b - p_a || f_b - f_a]).
inline Row relation(const ParamSet<double>& p, const MlpRef& sigma, const Instance& in, std::int32_t a, std::int32_t b) {
  return mlp(p, sigma, cat(diff(in.positions, a, b), diff(in.features, a, b)));
}

// One attention update of an edge from its own relation, its neighbors'
// relations and the per-neighbor geometric terms.
inline Row branch_update(const ParamSet<double>& p, const BranchParams& br, const RelationMask& mask, const Row& self,
                  const std::vector<Row>& nbrs, const std::vector<Row>& ds, const std::vector<Row>& dc) {
  const std::size_t ke = nbrs.size();
  const Row psi = mlp(p, br.psi, self);
  std::vector<Row> logits(ke), values(ke);
  for (std::size_t t = 0; t < ke; ++t) {
    Row geo(6, 0.0);
    for (int d = 0; d < 3; ++d) {
      if (mask.spatial) geo[static_cast<std::size_t>(d)] = ds[t][static_cast<std::size_t>(d)];
      if (mask.normal) geo[3 + static_cast<std::size_t>(d)] = dc[t][static_cast<std::size_t>(d)];
    }
    const Row g = mlp(p, br.gamma, geo);
    const Row phi = mlp(p, br.phi, nbrs[t]);
    const Row beta = mlp(p, br.beta, nbrs[t]);
    Row h(g.size());
    values[t].resize(g.size());
    for (std::size_t c = 0; c < g.size(); ++c) {
      h[c] = phi[c] - psi[c] + g[c];
      values[t][c] = beta[c] + g[c];
    }
    logits[t] = mlp(p, br.alpha, h);
  }
  Row out(values[0].size(), 0.0);
  for (std::size_t c = 0; c < out.size(); ++c) {
    double mx = -INFINITY;
    for (std::size_t t = 0; t < ke; ++t) mx = std::max(mx, logits[t][c]);
    double z = 0.0;
    for (std::size_t t = 0; t < ke; ++t) z += std::exp(logits[t][c] - mx);
    for (std::size_t t = 0; t < ke; ++t) out[c] += std::exp(logits[t][c] - mx) / z * values[t][c];
  }
  return out;
}

// Per-edge update h'_ij for every (center, slot), for the kind in `op`.
using EdgeFn = std::function<Row(std::int32_t i, std::int32_t j, const IndexList& ks)>;

inline MatrixD oracle_pool(const ParamSet<double>& p, const OperatorParams& op, const Instance& in, const EdgeFn& edge) {
  MatrixD out(static_cast<Eigen::Index>(in.sample.size()), static_cast<Eigen::Index>(op.out_channels));
  NeighborIndex nb;
  nb.centers = in.sample;
  nb.k = in.k;
  for (std::size_t m = 0; m < in.sample.size(); ++m) {
    const IndexList l = oracle_knn(in.positions, static_cast<std::size_t>(in.sample[m]), in.k);
    nb.neighbors.insert(nb.neighbors.end(), l.begin(), l.end());
  }
  const IndexList en = in.k_e ? oracle_edges(in.positions, nb, in.k_e) : IndexList{};
  for (std::size_t m = 0; m < in.sample.size(); ++m) {
    const std::int32_t i = in.sample[m];
    const Row fi = row_of(in.features, i);
    Row pooled(op.out_channels, -INFINITY);
    for (std::size_t a = 0; a < in.k; ++a) {
      const std::int32_t j = nb.neighbor(m, a);
      IndexList ks;
      for (std::size_t b = 0; b < in.k_e; ++b) ks.push_back(en[(m * in.k + a) * in.k_e + b]);
      const Row z = mlp(p, op.mu, cat(fi, edge(i, j, ks)));
      for (std::size_t c = 0; c < z.size(); ++c) pooled[c] = std::max(pooled[c], z[c]);
    }
    const Row r = mlp(p, op.rho, fi);
    for (std::size_t c = 0; c < op.out_channels; ++c) out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(c)) = pooled[c] + r[c];
  }
  return out;
}

inline Row forward_edge(const ParamSet<double>& p, const OperatorParams& op, const Instance& in, std::int32_t i,
                 std::int32_t j, const IndexList& ks) {
  std::vector<Row> nbrs, ds, dc;
  for (std::int32_t k : ks) {
    nbrs.push_back(relation(p, op.forward.sigma, in, i, k));
    ds.push_back(diff(in.positions, j, k));
    dc.push_back(cross(diff(in.positions, i, k), diff(in.positions, i, j)));
  }
  return branch_update(p, op.forward, op.mask, relation(p, op.forward.sigma, in, i, j), nbrs, ds, dc);
}

// Reverse edge e_ji emanates from p_j; its neighbors are e_jk for the same ks.
inline Row reverse_edge(const ParamSet<double>& p, const OperatorParams& op, const Instance& in, std::int32_t i,
                 std::int32_t j, const IndexList& ks) {
  std::vector<Row> nbrs, ds, dc;
  for (std::int32_t k : ks) {
    nbrs.push_back(relation(p, op.reverse.sigma, in, j, k));
    ds.push_back(diff(in.positions, i, k));
    dc.push_back(cross(diff(in.positions, j, k), diff(in.positions, j, i)));
  }
  return branch_update(p, op.reverse, op.mask, relation(p, op.reverse.sigma, in, j, i), nbrs, ds, dc);
}

inline Row feature_mlp(const ParamSet<double>& p, const MlpRef& m, const Instance& in, std::int32_t a, std::int32_t b) {
  return mlp(p, m, diff(in.features, a, b));
}

inline MatrixD oracle(const ParamSet<double>& p, const OperatorParams& op, const Instance& in) {
  switch (op.kind) {
    case OperatorKind::kBaselineMaxPool:
      return oracle_pool(p, op, in, [&](std::int32_t i, std::int32_t j, const IndexList&) {
        return relation(p, op.forward.sigma, in, i, j);
      });
    case OperatorKind::kAe2il:
      return oracle_pool(p, op, in, [&](std::int32_t i, std::int32_t j, const IndexList& ks) {
        return forward_edge(p, op, in, i, j, ks);
      });
    case OperatorKind::kSymAe2il:
      return oracle_pool(p, op, in, [&](std::int32_t i, std::int32_t j, const IndexList& ks) {
        Row a = forward_edge(p, op, in, i, j, ks);
        const Row b = reverse_edge(p, op, in, i, j, ks);
        for (std::size_t c = 0; c < a.size(); ++c) a[c] += b[c];
        return a;
      });
    case OperatorKind::kAe2ilStar:
      return oracle_pool(p, op, in, [&](std::int32_t i, std::int32_t j, const IndexList& ks) {
        const Row hij = feature_mlp(p, op.forward.sigma, in, i, j);
        std::vector<Row> logits, vals;
        for (std::int32_t k : ks) {
          const Row hik = feature_mlp(p, op.forward.sigma, in, i, k);
          Row d(hik.size());
          for (std::size_t c = 0; c < d.size(); ++c) d[c] = hik[c] - hij[c];
          logits.push_back(mlp(p, op.omega, d));
          vals.push_back(hik);
        }
        Row out(hij.size(), 0.0);
        for (std::size_t c = 0; c < out.size(); ++c) {
          double z = 0.0;
          for (const Row& l : logits) z += std::exp(l[c]);
          for (std::size_t t = 0; t < ks.size(); ++t) out[c] += std::exp(logits[t][c]) / z * vals[t][c];
        }
        return out;
      });
    case OperatorKind::kSymAe2ilStar:
      return oracle_pool(p, op, in, [&](std::int32_t i, std::int32_t j, const IndexList& ks) {
        Row out(op.relation_channels, 0.0);
        auto attend = [&](const MlpRef& wmap, std::int32_t wfrom, const MlpRef& vmap, std::int32_t vfrom) {
          std::vector<Row> logits, vals;
          for (std::int32_t k : ks) {
            logits.push_back(feature_mlp(p, wmap, in, wfrom, k));
            vals.push_back(feature_mlp(p, vmap, in, vfrom, k));
          }
          for (std::size_t c = 0; c < out.size(); ++c) {
            double z = 0.0;
            for (const Row& l : logits) z += std::exp(l[c]);
            for (std::size_t t = 0; t < ks.size(); ++t) out[c] += std::exp(logits[t][c]) / z * vals[t][c];
          }
        };
        attend(op.tau, j, op.forward.sigma, i);
        attend(op.tau_prime, i, op.sigma_prime, j);
        return out;
      });
    case OperatorKind::kAfaStar:
      return oracle_pool(p, op, in, [&](std::int32_t i, std::int32_t j, const IndexList& ks) {
        Row out = feature_mlp(p, op.forward.sigma, in, i, j);
        const Row fi = row_of(in.features, i), fj = row_of(in.features, j);
        const Row xi_i = mlp(p, op.xi, fi), xi_j = mlp(p, op.xi, fj);
        for (std::int32_t k : ks) {
          const Row fk = row_of(in.features, k);
          const Row xi_k = mlp(p, op.xi, fk);
          for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += xi_j[c] * (fj[c] - fk[c]) + xi_i[c] * (fk[c] - fi[c]) + xi_k[c] * (fi[c] - fj[c]);
          }
        }
        return out;
      });
  }
  return {};
}

// ---------------------------------------------------------------------------

inline constexpr OperatorKind kAllKinds[] = {OperatorKind::kBaselineMaxPool, OperatorKind::kAe2il,
                                      OperatorKind::kSymAe2il,        OperatorKind::kAfaStar,
                                      OperatorKind::kAe2ilStar,       OperatorKind::kSymAe2ilStar};

inline void jitter_biases(ParamSet<double>& p, Rng& rng) {
  for (std::size_t s = 0; s < p.size(); ++s) {
    if (p.name(s).find(".b") != std::string::npos) {
      for (Eigen::Index i = 0; i < p.value(s).size(); ++i) p.value(s).data()[i] = rng.uniform(-0.3, 0.3);
    }
  }
}

inline void zero_mlp(ParamSet<double>& p, const MlpRef& m) {
  for (std::size_t s : m.weight_slots) p.value(s).setZero();
  for (std::size_t s : m.bias_slots) p.value(s).setZero();
}

inline void identity_mlp(ParamSet<double>& p, const MlpRef& m) {
  for (std::size_t s : m.weight_slots) p.value(s) = MatrixD::Identity(p.value(s).rows(), p.value(s).cols());
  for (std::size_t s : m.bias_slots) p.value(s).setZero();
}

inline Instance random_instance(Rng& rng, std::size_t n, std::size_t cin, std::size_t m, std::size_t k, std::size_t k_e) {
  Instance in;
  const PointCloud c = random_cloud(rng, n, cin);
  in.positions = c.positions;
  in.features = c.features;
  in.sample = farthest_point_sample(c.positions, m, rng.index(n));
  in.k = k;
  in.k_e = k_e;
  return in;
}

inline MatrixD run(const ParamSet<double>& p, const OperatorParams& op, const Instance& in,
            OperatorTrace<double>* trace = nullptr, Tape<double>* tape_out = nullptr) {
  Tape<double> local;
  Tape<double>& tape = tape_out ? *tape_out : local;
  const LocalRegion<double> region =
      make_region(in.positions, tape.constant(in.features), in.sample, in.k, uses_edge_neighbors(op.kind) ? in.k_e : 0);
  return operator_forward(tape, p, op, region, trace).value();
}

inline double max_abs(const MatrixD& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace ae2i::testing
