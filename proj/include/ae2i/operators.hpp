#pragma once

#include <cstddef>
#include <string>

#include "ae2i/geometry.hpp"
#include "ae2i/mlp.hpp"
#include "ae2i/params.hpp"
#include "ae2i/rng.hpp"
#include "ae2i/tape.hpp"

namespace ae2i {

/// Local aggregation operator used inside one encoder stage.
enum class OperatorKind {
  kBaselineMaxPool,  // point-to-point relation only, no edge interaction
  kAe2il,
  kSymAe2il,
  kAfaStar,          // AFA-style adjustment, features only
  kAe2ilStar,        // simplified edge attention, features only
  kSymAe2ilStar,     // simplified symmetric variant, features only
};

std::string to_string(OperatorKind kind);
/// Accepts baseline-maxpool, ae2il, sym_ae2il, afa_star, ae2il_star, sym_ae2il_star.
OperatorKind parse_operator_kind(const std::string& text);
/// True for kinds that need an edge-neighbor index.
bool uses_edge_neighbors(OperatorKind kind);

/// Geometric terms fed to gamma next to the always-present feature term.
struct RelationMask {
  bool spatial = true;  // D^s
  bool normal = true;   // D^c

  std::string to_string() const;
  static RelationMask parse(const std::string& text);  // "df", "df+ds", "df+dc", "df+ds+dc"
  bool operator==(const RelationMask&) const = default;
};

/// MLPs of one relation/interaction/attention branch.
struct BranchParams {
  MlpRef sigma, phi, psi, gamma, alpha, beta;
};

struct OperatorParams {
  OperatorKind kind = OperatorKind::kSymAe2il;
  RelationMask mask;
  BranchParams forward;
  BranchParams reverse;  // SymAE2IL only; aliases `forward` when shared
  MlpRef mu, rho;
  MlpRef omega, tau, tau_prime, sigma_prime, xi;
  std::size_t in_channels = 0;
  std::size_t relation_channels = 0;
  std::size_t out_channels = 0;
};

/// Declares every MLP the operator kind needs under `prefix.` and returns their slots.
/// Widths: sigma [3+Cin, C, C]; phi, psi, alpha, beta [C, C]; gamma [6, C, C];
/// mu [Cin+C, Cout]; rho [Cin, Cout]. Feature-only kinds drop the 3 position inputs.
template <typename T>
OperatorParams declare_operator(ParamSet<T>& params, const std::string& prefix, OperatorKind kind,
                                std::size_t in_channels, std::size_t relation_channels, std::size_t out_channels,
                                Rng& rng, RelationMask mask = {}, bool share_reverse = false);

/// Neighborhood of one operator application: the searched point set, its
/// features, and every gather index the operator needs. Edge rows are ordered
/// (center, neighbor slot); triple rows (center, neighbor slot, edge-neighbor slot).
template <typename T>
struct LocalRegion {
  MatrixD positions;  // N x 3
  Var<T> features;    // N x Cin
  NeighborIndex nbr;
  EdgeNeighborIndex enbr;  // empty when the kind needs none
  std::size_t k_e = 0;

  SharedIndex centers;          // M
  SharedIndex edge_center;      // E = M*K
  SharedIndex edge_neighbor;    // E
  SharedIndex triple_edge;      // T = E*K_e, row of e_ij
  SharedIndex triple_nbr_edge;  // T, row of e_ik
  SharedIndex triple_center;    // T, point i
  SharedIndex triple_j;         // T, point j
  SharedIndex triple_k;         // T, point k
  SharedIndex pair_j;           // U distinct (j, k) pairs over all triples, sorted
  SharedIndex pair_k;           // U
  SharedIndex triple_pair;      // T, row of (j, k) among the pairs

  std::size_t center_count() const { return nbr.center_count(); }
  std::size_t edge_count() const { return edge_center->size(); }
  std::size_t triple_count() const { return triple_edge ? triple_edge->size() : 0; }
};

/// Builds the gather indices for a given neighbor index; k_e = 0 skips edge neighbors.
template <typename T>
LocalRegion<T> make_region(const MatrixD& positions, const Var<T>& features, NeighborIndex nbr, std::size_t k_e);

/// knn_points over `sample` followed by knn_edges (when k_e > 0).
template <typename T>
LocalRegion<T> make_region(const MatrixD& positions, const Var<T>& features, const IndexList& sample,
                           std::size_t k, std::size_t k_e);

/// Edge-to-edge interaction terms, one row per (edge, edge-neighbor).
template <typename T>
struct InteractionTensor {
  Var<T> feature_diff;    // D^f
  Var<T> geometry_embed;  // gamma([D^s || D^c]); reused by the attention update
  Var<T> interaction;     // H
  MatrixD spatial;        // D^s, T x 3
  MatrixD normal;         // D^c, T x 3
};

template <typename T>
struct AttentionResult {
  Var<T> weights;  // softmax over each edge's K_e rows, per channel
  Var<T> updated;  // E x C
};

/// h_ij = sigma([(p_j - p_i) || (f_j - f_i)]) for every edge.
template <typename T>
Var<T> point_relation(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& sigma, const LocalRegion<T>& region);

/// D^f = phi(h_ik) - psi(h_ij), D^s = p_k - p_j, D^c = (p_k - p_i) x (p_j - p_i),
/// H = D^f + gamma([D^s || D^c]).
template <typename T>
InteractionTensor<T> edge_interaction(Tape<T>& tape, const ParamSet<T>& params, const BranchParams& branch,
                                      const RelationMask& mask, const Var<T>& relation,
                                      const LocalRegion<T>& region);

/// w' = softmax_k(alpha(H)); h'_ij = sum_k w' .* (beta(h_ik) + gamma([D^s || D^c])).
template <typename T>
AttentionResult<T> attend_update(Tape<T>& tape, const ParamSet<T>& params, const BranchParams& branch,
                                 const Var<T>& relation, const InteractionTensor<T>& inter,
                                 const LocalRegion<T>& region);

/// Reverse-edge branch: updates e_ji from the edges e_jk, k in the edge-neighbors of e_ij.
template <typename T>
struct ReverseResult {
  Var<T> relation_self;      // h^_ji, E rows
  Var<T> relation_neighbor;  // h^_jk, one row per distinct (j, k) pair; see LocalRegion::triple_pair
  InteractionTensor<T> inter;
  AttentionResult<T> attn;
};

template <typename T>
ReverseResult<T> reverse_update(Tape<T>& tape, const ParamSet<T>& params, const BranchParams& branch,
                                const RelationMask& mask, const LocalRegion<T>& region);

/// f^o_i = max_j mu([f_i || h'_ij]) + rho(f_i), channel-wise max over the K edges.
template <typename T>
Var<T> aggregate(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mu, const MlpRef& rho,
                 const Var<T>& updated, const LocalRegion<T>& region, Var<T>* edge_features = nullptr);

/// h'_ij = sum_k softmax_k(omega(h_ik - h_ij)) .* h_ik with h_ij = sigma(f_j - f_i).
template <typename T>
Var<T> simplified_ae2il(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                        const LocalRegion<T>& region);

/// sum_k softmax_k(tau(f_k - f_j)) .* sigma(f_k - f_i)
///   + sum_k softmax_k(tau'(f_k - f_i)) .* sigma'(f_k - f_j).
template <typename T>
Var<T> simplified_sym(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                      const LocalRegion<T>& region);

/// h'_ij = sum_k [xi(f_j)(f_j - f_k) + xi(f_i)(f_k - f_i) + xi(f_k)(f_i - f_j)] + h_ij.
template <typename T>
Var<T> afa_baseline(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                    const LocalRegion<T>& region);

/// Intermediate values of one operator application, for inspection and tests.
template <typename T>
struct OperatorTrace {
  Var<T> relation;
  InteractionTensor<T> inter;
  AttentionResult<T> attn;
  ReverseResult<T> reverse;
  Var<T> combined;       // relation fed to mu
  Var<T> edge_features;  // f_ij before pooling
  Var<T> output;
};

template <typename T>
Var<T> ae2il_forward(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                     const LocalRegion<T>& region, OperatorTrace<T>* trace = nullptr);

template <typename T>
Var<T> sym_ae2il_forward(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                         const LocalRegion<T>& region, OperatorTrace<T>* trace = nullptr);

/// Dispatches on op.kind.
template <typename T>
Var<T> operator_forward(Tape<T>& tape, const ParamSet<T>& params, const OperatorParams& op,
                        const LocalRegion<T>& region, OperatorTrace<T>* trace = nullptr);

/// Tape-free conveniences: sample -> K-NN -> edge K-NN -> operator, values only.
MatrixD ae2il_forward(const ParamSet<double>& params, const OperatorParams& op, const PointCloud& cloud,
                      const IndexList& sample, std::size_t k, std::size_t k_e);
MatrixD sym_ae2il_forward(const ParamSet<double>& params, const OperatorParams& op, const PointCloud& cloud,
                          const IndexList& sample, std::size_t k, std::size_t k_e);

}  // namespace ae2i
