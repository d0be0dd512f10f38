#include "ae2i/operators.hpp"

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "ae2i/errors.hpp"

namespace ae2i {

std::string to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kBaselineMaxPool: return "baseline-maxpool";
    case OperatorKind::kAe2il: return "ae2il";
    case OperatorKind::kSymAe2il: return "sym_ae2il";
    case OperatorKind::kAfaStar: return "afa_star";
    case OperatorKind::kAe2ilStar: return "ae2il_star";
    case OperatorKind::kSymAe2ilStar: return "sym_ae2il_star";
  }
  return "unknown";
}

OperatorKind parse_operator_kind(const std::string& text) {
  for (auto k : {OperatorKind::kBaselineMaxPool, OperatorKind::kAe2il, OperatorKind::kSymAe2il,
                 OperatorKind::kAfaStar, OperatorKind::kAe2ilStar, OperatorKind::kSymAe2ilStar}) {
    if (to_string(k) == text) return k;
  }
  if (text == "baseline") return OperatorKind::kBaselineMaxPool;
  throw ConfigError("unknown operator kind '" + text + "'");
}

bool uses_edge_neighbors(OperatorKind kind) { return kind != OperatorKind::kBaselineMaxPool; }

std::string RelationMask::to_string() const {
  std::string s = "df";
  if (spatial) s += "+ds";
  if (normal) s += "+dc";
  return s;
}

RelationMask RelationMask::parse(const std::string& text) {
  RelationMask m{false, false};
  bool has_df = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    const std::string tok = text.substr(start, end - start);
    if (tok == "df") {
      has_df = true;
    } else if (tok == "ds") {
      m.spatial = true;
    } else if (tok == "dc") {
      m.normal = true;
    } else {
      throw ConfigError("unknown relation term '" + tok + "' in '" + text + "'");
    }
    start = end + 1;
  }
  if (!has_df) throw ConfigError("relation mask must include df: '" + text + "'");
  return m;
}

template <typename T>
OperatorParams declare_operator(ParamSet<T>& params, const std::string& prefix, OperatorKind kind,
                                std::size_t cin, std::size_t c, std::size_t cout, Rng& rng, RelationMask mask,
                                bool share_reverse) {
  OperatorParams op;
  op.kind = kind;
  op.mask = mask;
  op.in_channels = cin;
  op.relation_channels = c;
  op.out_channels = cout;
  auto name = [&](const char* role) { return prefix + "." + role; };
  auto branch = [&](const std::string& p) {
    BranchParams b;
    b.sigma = params.add_mlp(p + "sigma", {3 + cin, c, c}, rng);
    b.phi = params.add_mlp(p + "phi", {c, c}, rng);
    b.psi = params.add_mlp(p + "psi", {c, c}, rng);
    b.gamma = params.add_mlp(p + "gamma", {6, c, c}, rng);
    b.alpha = params.add_mlp(p + "alpha", {c, c}, rng);
    b.beta = params.add_mlp(p + "beta", {c, c}, rng);
    return b;
  };

  std::size_t relation_out = c;
  switch (kind) {
    case OperatorKind::kBaselineMaxPool:
      op.forward.sigma = params.add_mlp(name("sigma"), {3 + cin, c, c}, rng);
      break;
    case OperatorKind::kAe2il:
      op.forward = branch(prefix + ".");
      break;
    case OperatorKind::kSymAe2il:
      op.forward = branch(prefix + ".");
      op.reverse = share_reverse ? op.forward : branch(prefix + ".rev.");
      break;
    case OperatorKind::kAe2ilStar:
      op.forward.sigma = params.add_mlp(name("sigma"), {cin, c, c}, rng);
      op.omega = params.add_mlp(name("omega"), {c, c}, rng);
      break;
    case OperatorKind::kSymAe2ilStar:
      op.forward.sigma = params.add_mlp(name("sigma"), {cin, c, c}, rng);
      op.tau = params.add_mlp(name("tau"), {cin, c}, rng);
      op.tau_prime = params.add_mlp(name("tau_prime"), {cin, c}, rng);
      op.sigma_prime = params.add_mlp(name("sigma_prime"), {cin, c, c}, rng);
      break;
    case OperatorKind::kAfaStar:
      // The adjustment terms live in input-feature space, so the relation does too.
      relation_out = cin;
      op.forward.sigma = params.add_mlp(name("sigma"), {cin, c, cin}, rng);
      op.xi = params.add_mlp(name("xi"), {cin, cin}, rng);
      break;
  }
  op.relation_channels = relation_out;
  op.mu = params.add_mlp(name("mu"), {cin + relation_out, cout}, rng);
  op.rho = params.add_mlp(name("rho"), {cin, cout}, rng);
  return op;
}

template <typename T>
LocalRegion<T> make_region(const MatrixD& positions, const Var<T>& features, NeighborIndex nbr, std::size_t k_e) {
  if (features.rows() != positions.rows()) throw DimensionError("make_region: feature rows != point count");
  LocalRegion<T> r;
  r.positions = positions;
  r.features = features;
  r.k_e = k_e;
  const std::size_t m_count = nbr.center_count();
  const std::size_t k = nbr.k;
  IndexList edge_center(m_count * k), edge_neighbor(m_count * k);
  for (std::size_t m = 0; m < m_count; ++m) {
    for (std::size_t a = 0; a < k; ++a) {
      edge_center[m * k + a] = nbr.centers[m];
      edge_neighbor[m * k + a] = nbr.neighbor(m, a);
    }
  }
  r.centers = share(nbr.centers);
  r.edge_center = share(std::move(edge_center));
  r.edge_neighbor = share(std::move(edge_neighbor));
  if (k_e > 0) {
    r.enbr = knn_edges(positions, nbr, k_e);
    const std::size_t t_count = m_count * k * k_e;
    IndexList te(t_count), tne(t_count), tc(t_count), tj(t_count), tk(t_count);
    for (std::size_t m = 0; m < m_count; ++m) {
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k_e; ++b) {
          const std::size_t t = r.enbr.offset(m, a, b);
          te[t] = static_cast<std::int32_t>(m * k + a);
          tne[t] = static_cast<std::int32_t>(m * k + static_cast<std::size_t>(r.enbr.slots[t]));
          tc[t] = nbr.centers[m];
          tj[t] = nbr.neighbor(m, a);
          tk[t] = r.enbr.points[t];
        }
      }
    }
    // Distinct (j, k) pairs: the reverse branch evaluates edge relations once per pair.
    std::vector<std::pair<std::int64_t, std::size_t>> keys(t_count);
    const auto n = static_cast<std::int64_t>(positions.rows());
    for (std::size_t t = 0; t < t_count; ++t) keys[t] = {static_cast<std::int64_t>(tj[t]) * n + tk[t], t};
    std::sort(keys.begin(), keys.end());
    IndexList pj, pk, tp(t_count);
    for (std::size_t u = 0; u < t_count; ++u) {
      if (u == 0 || keys[u].first != keys[u - 1].first) {
        pj.push_back(static_cast<std::int32_t>(keys[u].first / n));
        pk.push_back(static_cast<std::int32_t>(keys[u].first % n));
      }
      tp[keys[u].second] = static_cast<std::int32_t>(pj.size() - 1);
    }
    r.triple_edge = share(std::move(te));
    r.triple_nbr_edge = share(std::move(tne));
    r.triple_center = share(std::move(tc));
    r.triple_j = share(std::move(tj));
    r.triple_k = share(std::move(tk));
    r.pair_j = share(std::move(pj));
    r.pair_k = share(std::move(pk));
    r.triple_pair = share(std::move(tp));
  }
  r.nbr = std::move(nbr);
  return r;
}

template <typename T>
LocalRegion<T> make_region(const MatrixD& positions, const Var<T>& features, const IndexList& sample,
                           std::size_t k, std::size_t k_e) {
  return make_region(positions, features, knn_points(positions, sample, k), k_e);
}

namespace {

template <typename T>
void require_triples(const LocalRegion<T>& region, const char* op) {
  if (region.k_e == 0 || !region.triple_edge) {
    throw DimensionError(std::string(op) + ": region has no edge neighbors (K_e = 0)");
  }
}

// [D^s || D^c] as a constant, with masked terms zeroed.
template <typename T>
Var<T> geometry_input(Tape<T>& tape, const MatrixD& spatial, const MatrixD& normal, const RelationMask& mask) {
  Matrix<T> geo = Matrix<T>::Zero(spatial.rows(), 6);
  if (mask.spatial) geo.leftCols(3) = spatial.cast<T>();
  if (mask.normal) geo.rightCols(3) = normal.cast<T>();
  return tape.constant(std::move(geo));
}

// Interaction core shared by both branches. Row neighbor_idx[t] of `neighbor`
// holds the relation of the neighboring edge of triple t.
template <typename T>
InteractionTensor<T> interact(Tape<T>& tape, const ParamSet<T>& params, const BranchParams& branch,
                              const RelationMask& mask, const Var<T>& self, const Var<T>& neighbor,
                              const SharedIndex& neighbor_idx, MatrixD spatial, MatrixD normal,
                              const LocalRegion<T>& region) {
  if (branch.phi.out_width() != branch.gamma.out_width() || branch.psi.out_width() != branch.gamma.out_width()) {
    throw DimensionError("edge_interaction: phi, psi and gamma widths differ");
  }
  InteractionTensor<T> out;
  Var<T> phi = mlp_forward(tape, params, branch.phi, neighbor);
  phi = gather_rows(phi, neighbor_idx);
  Var<T> psi = gather_rows(mlp_forward(tape, params, branch.psi, self), region.triple_edge);
  out.feature_diff = sub(phi, psi);
  out.geometry_embed = mlp_forward(tape, params, branch.gamma, geometry_input<T>(tape, spatial, normal, mask));
  out.interaction = add(out.feature_diff, out.geometry_embed);
  out.spatial = std::move(spatial);
  out.normal = std::move(normal);
  return out;
}

template <typename T>
AttentionResult<T> attend(Tape<T>& tape, const ParamSet<T>& params, const BranchParams& branch,
                          const Var<T>& neighbor, const SharedIndex& neighbor_idx,
                          const InteractionTensor<T>& inter, const LocalRegion<T>& region) {
  if (static_cast<std::size_t>(inter.interaction.rows()) != region.triple_count()) {
    throw DimensionError("attend_update: K_e axis does not match the edge-neighbor index");
  }
  AttentionResult<T> out;
  out.weights = group_softmax(mlp_forward(tape, params, branch.alpha, inter.interaction), region.k_e);
  Var<T> beta = mlp_forward(tape, params, branch.beta, neighbor);
  beta = gather_rows(beta, neighbor_idx);
  Var<T> values = add(beta, inter.geometry_embed);
  out.updated = group_sum(mul(out.weights, values), region.k_e);
  return out;
}

template <typename T>
Var<T> positions_and_features(Tape<T>& tape, const LocalRegion<T>& region) {
  return concat_cols(tape.constant(region.positions.template cast<T>()), region.features);
}

}  // namespace

template <typename T>
Var<T> point_relation(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& sigma, const LocalRegion<T>& region) {
  if (sigma.in_width() != 3 + static_cast<std::size_t>(region.features.cols())) {
    throw DimensionError("point_relation: sigma expects " + std::to_string(sigma.in_width()) +
                         " inputs, region provides 3 + " + std::to_string(region.features.cols()));
  }
  return mlp_forward_pairdiff(tape, params, sigma, positions_and_features(tape, region), region.edge_center,
                              region.edge_neighbor);
}

template <typename T>
InteractionTensor<T> edge_interaction(Tape<T>& tape, const ParamSet<T>& params, const BranchParams& branch,
                                      const RelationMask& mask, const Var<T>& relation,
                                      const LocalRegion<T>& region) {
  require_triples(region, "edge_interaction");
  const std::size_t t_count = region.triple_count();
  MatrixD spatial(static_cast<Eigen::Index>(t_count), 3), normal(static_cast<Eigen::Index>(t_count), 3);
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto i = static_cast<std::size_t>((*region.triple_center)[t]);
    const auto j = static_cast<std::size_t>((*region.triple_j)[t]);
    const auto k = static_cast<std::size_t>((*region.triple_k)[t]);
    spatial.row(static_cast<Eigen::Index>(t)) = relative_position(region.positions, j, k).transpose();
    normal.row(static_cast<Eigen::Index>(t)) = surface_normal(region.positions, i, j, k).transpose();
  }
  return interact(tape, params, branch, mask, relation, relation, region.triple_nbr_edge, std::move(spatial),
                  std::move(normal), region);
}

template <typename T>
AttentionResult<T> attend_update(Tape<T>& tape, const ParamSet<T>& params, const BranchParams& branch,
                                 const Var<T>& relation, const InteractionTensor<T>& inter,
                                 const LocalRegion<T>& region) {
  require_triples(region, "attend_update");
  return attend(tape, params, branch, relation, region.triple_nbr_edge, inter, region);
}

template <typename T>
ReverseResult<T> reverse_update(Tape<T>& tape, const ParamSet<T>& params, const BranchParams& branch,
                                const RelationMask& mask, const LocalRegion<T>& region) {
  require_triples(region, "reverse_update");
  ReverseResult<T> out;
  Var<T> x = positions_and_features(tape, region);
  // e_ji emanates from p_j towards p_i; its neighbors e_jk end at the edge-neighbors of e_ij.
  out.relation_self = mlp_forward_pairdiff(tape, params, branch.sigma, x, region.edge_neighbor, region.edge_center);
  out.relation_neighbor = mlp_forward_pairdiff(tape, params, branch.sigma, x, region.pair_j, region.pair_k);
  const std::size_t t_count = region.triple_count();
  MatrixD spatial(static_cast<Eigen::Index>(t_count), 3), normal(static_cast<Eigen::Index>(t_count), 3);
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto i = static_cast<std::size_t>((*region.triple_center)[t]);
    const auto j = static_cast<std::size_t>((*region.triple_j)[t]);
    const auto k = static_cast<std::size_t>((*region.triple_k)[t]);
    spatial.row(static_cast<Eigen::Index>(t)) = relative_position(region.positions, i, k).transpose();
    normal.row(static_cast<Eigen::Index>(t)) = surface_normal(region.positions, j, i, k).transpose();
  }
  out.inter = interact(tape, params, branch, mask, out.relation_self, out.relation_neighbor, region.triple_pair,
                       std::move(spatial), std::move(normal), region);
  out.attn = attend(tape, params, branch, out.relation_neighbor, region.triple_pair, out.inter, region);
  return out;
}

template <typename T>
Var<T> aggregate(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mu, const MlpRef& rho,
                 const Var<T>& updated, const LocalRegion<T>& region, Var<T>* edge_features) {
  if (mu.out_width() != rho.out_width()) throw DimensionError("aggregate: mu and rho widths differ");
  Var<T> f_edge = gather_rows(region.features, region.edge_center);
  Var<T> z = mlp_forward(tape, params, mu, concat_cols(f_edge, updated));
  if (edge_features) *edge_features = z;
  Var<T> pooled = group_max(z, region.nbr.k);
  Var<T> residual = mlp_forward(tape, params, rho, gather_rows(region.features, region.centers));
  return add(pooled, residual);
}

template <typename T>
Var<T> simplified_ae2il(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                        const LocalRegion<T>& region) {
  require_triples(region, "simplified_ae2il");
  Var<T> h = mlp_forward_pairdiff(tape, params, op.forward.sigma, region.features, region.edge_center,
                                  region.edge_neighbor);
  Var<T> h_ik = gather_rows(h, region.triple_nbr_edge);
  Var<T> h_ij = gather_rows(h, region.triple_edge);
  Var<T> w = group_softmax(mlp_forward(tape, params, op.omega, sub(h_ik, h_ij)), region.k_e);
  return group_sum(mul(w, h_ik), region.k_e);
}

template <typename T>
Var<T> simplified_sym(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                      const LocalRegion<T>& region) {
  require_triples(region, "simplified_sym");
  const Var<T>& f = region.features;
  // sigma(f_k - f_i) is the relation of edge e_ik.
  Var<T> h = mlp_forward_pairdiff(tape, params, op.forward.sigma, f, region.edge_center, region.edge_neighbor);
  Var<T> h_ik = gather_rows(h, region.triple_nbr_edge);
  Var<T> w = group_softmax(mlp_forward_pairdiff(tape, params, op.tau, f, region.triple_j, region.triple_k),
                           region.k_e);
  Var<T> first = group_sum(mul(w, h_ik), region.k_e);
  Var<T> w_rev = group_softmax(
      mlp_forward_pairdiff(tape, params, op.tau_prime, f, region.triple_center, region.triple_k), region.k_e);
  Var<T> v_rev = mlp_forward_pairdiff(tape, params, op.sigma_prime, f, region.triple_j, region.triple_k);
  Var<T> second = group_sum(mul(w_rev, v_rev), region.k_e);
  return add(first, second);
}

template <typename T>
Var<T> afa_baseline(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                    const LocalRegion<T>& region) {
  require_triples(region, "afa_baseline");
  const Var<T>& f = region.features;
  if (op.xi.in_width() != op.xi.out_width() || op.xi.in_width() != static_cast<std::size_t>(f.cols())) {
    throw DimensionError("afa_baseline: xi must map C_in -> C_in");
  }
  Var<T> h = mlp_forward_pairdiff(tape, params, op.forward.sigma, f, region.edge_center, region.edge_neighbor);
  Var<T> xi = mlp_forward(tape, params, op.xi, f);
  Var<T> fi = gather_rows(f, region.triple_center);
  Var<T> fj = gather_rows(f, region.triple_j);
  Var<T> fk = gather_rows(f, region.triple_k);
  Var<T> term = mul(gather_rows(xi, region.triple_j), sub(fj, fk));
  term = add(term, mul(gather_rows(xi, region.triple_center), sub(fk, fi)));
  term = add(term, mul(gather_rows(xi, region.triple_k), sub(fi, fj)));
  return add(group_sum(term, region.k_e), h);
}

template <typename T>
Var<T> ae2il_forward(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                     const LocalRegion<T>& region, OperatorTrace<T>* trace) {
  Var<T> h = point_relation(tape, params, op.forward.sigma, region);
  InteractionTensor<T> inter = edge_interaction(tape, params, op.forward, op.mask, h, region);
  AttentionResult<T> attn = attend_update(tape, params, op.forward, h, inter, region);
  Var<T> edge_features;
  Var<T> out = aggregate(tape, params, op.mu, op.rho, attn.updated, region, &edge_features);
  if (trace) {
    trace->relation = h;
    trace->inter = inter;
    trace->attn = attn;
    trace->combined = attn.updated;
    trace->edge_features = edge_features;
    trace->output = out;
  }
  return out;
}

template <typename T>
Var<T> sym_ae2il_forward(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                         const LocalRegion<T>& region, OperatorTrace<T>* trace) {
  Var<T> h = point_relation(tape, params, op.forward.sigma, region);
  InteractionTensor<T> inter = edge_interaction(tape, params, op.forward, op.mask, h, region);
  AttentionResult<T> attn = attend_update(tape, params, op.forward, h, inter, region);
  ReverseResult<T> rev = reverse_update(tape, params, op.reverse, op.mask, region);
  Var<T> combined = add(attn.updated, rev.attn.updated);
  Var<T> edge_features;
  Var<T> out = aggregate(tape, params, op.mu, op.rho, combined, region, &edge_features);
  if (trace) {
    trace->relation = h;
    trace->inter = inter;
    trace->attn = attn;
    trace->reverse = rev;
    trace->combined = combined;
    trace->edge_features = edge_features;
    trace->output = out;
  }
  return out;
}

template <typename T>
Var<T> operator_forward(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                        const LocalRegion<T>& region, OperatorTrace<T>* trace) {
  switch (op.kind) {
    case OperatorKind::kAe2il: return ae2il_forward(tape, params, op, region, trace);
    case OperatorKind::kSymAe2il: return sym_ae2il_forward(tape, params, op, region, trace);
    default: break;
  }
  Var<T> updated;
  switch (op.kind) {
    case OperatorKind::kBaselineMaxPool:
      updated = point_relation(tape, params, op.forward.sigma, region);
      break;
    case OperatorKind::kAe2ilStar: updated = simplified_ae2il(tape, params, op, region); break;
    case OperatorKind::kSymAe2ilStar: updated = simplified_sym(tape, params, op, region); break;
    case OperatorKind::kAfaStar: updated = afa_baseline(tape, params, op, region); break;
    default: throw StateError("unhandled operator kind");
  }
  Var<T> edge_features;
  Var<T> out = aggregate(tape, params, op.mu, op.rho, updated, region, &edge_features);
  if (trace) {
    trace->relation = updated;
    trace->combined = updated;
    trace->edge_features = edge_features;
    trace->output = out;
  }
  return out;
}

MatrixD ae2il_forward(const ParamSet<double>& params, const OperatorParams& op, const PointCloud& cloud,
                      const IndexList& sample, std::size_t k, std::size_t k_e) {
  cloud.validate();
  Tape<double> tape;
  Var<double> f = tape.constant(cloud.features);
  LocalRegion<double> region = make_region(cloud.positions, f, sample, k, k_e);
  return ae2il_forward(tape, params, op, region).value();
}

MatrixD sym_ae2il_forward(const ParamSet<double>& params, const OperatorParams& op, const PointCloud& cloud,
                          const IndexList& sample, std::size_t k, std::size_t k_e) {
  cloud.validate();
  Tape<double> tape;
  Var<double> f = tape.constant(cloud.features);
  LocalRegion<double> region = make_region(cloud.positions, f, sample, k, k_e);
  return sym_ae2il_forward(tape, params, op, region).value();
}

#define AE2I_INSTANTIATE_OPERATORS(T)                                                                         \
  template OperatorParams declare_operator<T>(ParamSet<T>&, const std::string&, OperatorKind, std::size_t,     \
                                              std::size_t, std::size_t, Rng&, RelationMask, bool);             \
  template LocalRegion<T> make_region<T>(const MatrixD&, const Var<T>&, NeighborIndex, std::size_t);          \
  template LocalRegion<T> make_region<T>(const MatrixD&, const Var<T>&, const IndexList&, std::size_t,        \
                                         std::size_t);                                                        \
  template Var<T> point_relation<T>(Tape<T>&, const ParamSet<T>&, const MlpRef&, const LocalRegion<T>&);      \
  template InteractionTensor<T> edge_interaction<T>(Tape<T>&, const ParamSet<T>&, const BranchParams&,        \
                                                    const RelationMask&, const Var<T>&, const LocalRegion<T>&); \
  template AttentionResult<T> attend_update<T>(Tape<T>&, const ParamSet<T>&, const BranchParams&,             \
                                               const Var<T>&, const InteractionTensor<T>&,                    \
                                               const LocalRegion<T>&);                                        \
  template ReverseResult<T> reverse_update<T>(Tape<T>&, const ParamSet<T>&, const BranchParams&,              \
                                              const RelationMask&, const LocalRegion<T>&);                    \
  template Var<T> aggregate<T>(Tape<T>&, const ParamSet<T>&, const MlpRef&, const MlpRef&, const Var<T>&,     \
                               const LocalRegion<T>&, Var<T>*);                                               \
  template Var<T> simplified_ae2il<T>(Tape<T>&, const ParamSet<T>&, const OperatorParams&,                    \
                                      const LocalRegion<T>&);                                                 \
  template Var<T> simplified_sym<T>(Tape<T>&, const ParamSet<T>&, const OperatorParams&,                      \
                                    const LocalRegion<T>&);                                                   \
  template Var<T> afa_baseline<T>(Tape<T>&, const ParamSet<T>&, const OperatorParams&, const LocalRegion<T>&); \
  template Var<T> ae2il_forward<T>(Tape<T>&, const ParamSet<T>&, const OperatorParams&, const LocalRegion<T>&, \
                                   OperatorTrace<T>*);                                                        \
  template Var<T> sym_ae2il_forward<T>(Tape<T>&, const ParamSet<T>&, const OperatorParams&,                   \
                                       const LocalRegion<T>&, OperatorTrace<T>*);                             \
  template Var<T> operator_forward<T>(Tape<T>&, const ParamSet<T>&, const OperatorParams&,                    \
                                      const LocalRegion<T>&, OperatorTrace<T>*);

AE2I_INSTANTIATE_OPERATORS(float)
AE2I_INSTANTIATE_OPERATORS(double)

}  // namespace ae2i
