#include "ae2i/gradcheck_suite.hpp"

#include "ae2i/errors.hpp"
#include "ae2i/mlp.hpp"
#include "ae2i/operators.hpp"

namespace ae2i {

namespace {

constexpr std::size_t kPoints = 12;
constexpr std::size_t kInputChannels = 3;
constexpr std::size_t kChannels = 4;
constexpr std::size_t kRelation = 4;
constexpr std::size_t kOut = 5;
constexpr std::size_t kK = 4;
constexpr std::size_t kKe = 2;
constexpr std::size_t kCenters = 6;

MatrixD random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// Biases start at zero, which puts dead ReLU inputs exactly on the kink.
/// Checks run at a generic point instead.
void jitter_biases(ParamSet<double>& params, Rng& rng) {
  for (std::size_t s = 0; s < params.size(); ++s) {
    const std::string& n = params.name(s);
    const auto dot = n.rfind('.');
    if (dot == std::string::npos || n.compare(dot, 2, ".b") != 0) continue;
    MatrixD& b = params.value(s);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] += rng.uniform(-0.1, 0.1);
  }
}

/// Output rows of a component applied to the shared random cloud.
using Body = std::function<Var<double>(Tape<double>&, const ParamSet<double>&, const OperatorParams&,
                                       const LocalRegion<double>&)>;

GradCheckCase operator_case(const std::string& name, std::uint64_t seed, OperatorKind kind, Body body) {
  Rng rng(derive_seed(seed, 0x6763));
  GradCheckCase c;
  c.component = name;
  auto positions = std::make_shared<MatrixD>(random_matrix(rng, kPoints, 3));
  c.input = random_matrix(rng, kPoints, kInputChannels);
  const MlpRef pre = c.own.add_mlp("pre", {kInputChannels, kChannels}, rng);
  const OperatorParams op = declare_operator(c.own, "op", kind, kChannels, kRelation, kOut, rng);
  const IndexList sample = farthest_point_sample(*positions, kCenters);
  const std::size_t k_e = uses_edge_neighbors(kind) ? kKe : 0;
  jitter_biases(c.own, rng);
  // Loss weights are drawn once the output shape is known.
  auto weights = std::make_shared<MatrixD>();
  auto wrng = std::make_shared<Rng>(derive_seed(seed, 0x7767));
  c.loss = [=](Tape<double>& tape, const ParamSet<double>& params, const Var<double>& x) {
    Var<double> features = mlp_forward(tape, params, pre, x);
    LocalRegion<double> region = make_region(*positions, features, sample, kK, k_e);
    Var<double> out = body(tape, params, op, region);
    if (weights->size() == 0) *weights = random_matrix(*wrng, out.rows(), out.cols());
    return weighted_sum(out, *weights);
  };
  return c;
}

GradCheckCase feature_propagation_case(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6670));
  GradCheckCase c;
  c.component = "feature_propagation";
  auto fine = std::make_shared<MatrixD>(random_matrix(rng, kPoints, 3));
  const IndexList coarse_idx = farthest_point_sample(*fine, 4);
  auto coarse = std::make_shared<MatrixD>(gather_positions(*fine, coarse_idx));
  auto coarse_rows = std::make_shared<IndexList>(coarse_idx);
  c.input = random_matrix(rng, kPoints, kInputChannels);
  const MlpRef pre = c.own.add_mlp("pre", {kInputChannels, kChannels}, rng);
  const MlpRef skip = c.own.add_mlp("skip", {kInputChannels, 3}, rng);
  const MlpRef fp = c.own.add_mlp("fp", {kChannels + 3, kOut, kOut}, rng);
  const MatrixD w = random_matrix(rng, kPoints, kOut);
  jitter_biases(c.own, rng);
  c.loss = [=](Tape<double>& tape, const ParamSet<double>& params, const Var<double>& x) {
    Var<double> f = mlp_forward(tape, params, pre, x);
    Var<double> coarse_f = gather_rows(f, std::make_shared<const IndexList>(*coarse_rows));
    Var<double> s = mlp_forward(tape, params, skip, x);
    return weighted_sum(feature_propagation(tape, params, fp, *coarse, coarse_f, *fine, s), w);
  };
  return c;
}

GradCheckCase micro_network_case(const std::string& name, Task task, OperatorKind kind, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6d6e));
  GradCheckCase c;
  c.component = name;
  NetworkConfig cfg;
  cfg.task = task;
  cfg.kind = kind;
  cfg.num_points = 32;
  cfg.num_classes = task == Task::kCls ? 3 : 2;
  cfg.stages = {{32, 6, 2, 6}, {8, 4, 2, 8}};
  cfg.head_hidden = {6};
  c.network = std::make_shared<Network<double>>(build_network<double>(cfg, derive_seed(seed, 1)));
  jitter_biases(c.network->params, rng);
  auto cloud = std::make_shared<PointCloud>();
  cloud->positions = random_matrix(rng, 32, 3);
  std::vector<std::int32_t> labels;
  if (task == Task::kCls) {
    labels.push_back(static_cast<std::int32_t>(rng.index(3)));
  } else {
    for (int i = 0; i < 32; ++i) labels.push_back(static_cast<std::int32_t>(rng.index(2)));
  }
  c.input = MatrixD::Zero(1, 1);
  std::weak_ptr<Network<double>> weak = c.network;
  c.loss = [weak, cloud, labels](Tape<double>& tape, const ParamSet<double>&, const Var<double>&) {
    auto net = weak.lock();
    if (!net) throw StateError("gradcheck: micro-network released");
    return softmax_cross_entropy(forward(tape, *net, *cloud), labels);
  };
  return c;
}

}  // namespace

std::vector<std::string> gradcheck_components() {
  return {"point_relation",   "edge_interaction", "attend_update",     "reverse_update",
          "ae2il_forward",    "sym_ae2il_forward", "baseline_maxpool", "simplified_ae2il",
          "simplified_sym",   "afa_baseline",     "feature_propagation", "micro_network_cls",
          "micro_network_seg"};
}

GradCheckCase make_gradcheck_case(const std::string& component, std::uint64_t seed) {
  using K = OperatorKind;
  auto op_case = [&](K kind, Body body) { return operator_case(component, seed, kind, std::move(body)); };
  if (component == "point_relation") {
    return op_case(K::kAe2il, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      return point_relation(tape, params, op.forward.sigma, r);
    });
  }
  if (component == "edge_interaction") {
    return op_case(K::kAe2il, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      Var<double> h = point_relation(tape, params, op.forward.sigma, r);
      return edge_interaction(tape, params, op.forward, op.mask, h, r).interaction;
    });
  }
  if (component == "attend_update") {
    return op_case(K::kAe2il, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      Var<double> h = point_relation(tape, params, op.forward.sigma, r);
      InteractionTensor<double> inter = edge_interaction(tape, params, op.forward, op.mask, h, r);
      return attend_update(tape, params, op.forward, h, inter, r).updated;
    });
  }
  if (component == "reverse_update") {
    return op_case(K::kSymAe2il, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      return reverse_update(tape, params, op.reverse, op.mask, r).attn.updated;
    });
  }
  if (component == "ae2il_forward") {
    return op_case(K::kAe2il, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      return ae2il_forward(tape, params, op, r);
    });
  }
  if (component == "sym_ae2il_forward") {
    return op_case(K::kSymAe2il, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      return sym_ae2il_forward(tape, params, op, r);
    });
  }
  if (component == "baseline_maxpool") {
    return op_case(K::kBaselineMaxPool, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      return operator_forward(tape, params, op, r);
    });
  }
  if (component == "simplified_ae2il") {
    return op_case(K::kAe2ilStar, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      return simplified_ae2il(tape, params, op, r);
    });
  }
  if (component == "simplified_sym") {
    return op_case(K::kSymAe2ilStar, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      return simplified_sym(tape, params, op, r);
    });
  }
  if (component == "afa_baseline") {
    return op_case(K::kAfaStar, [](Tape<double>& tape, const ParamSet<double>& params, const OperatorParams& op,
                                 const LocalRegion<double>& r) {
      return afa_baseline(tape, params, op, r);
    });
  }
  if (component == "feature_propagation") return feature_propagation_case(seed);
  if (component == "micro_network_cls") return micro_network_case(component, Task::kCls, K::kSymAe2il, seed);
  if (component == "micro_network_seg") return micro_network_case(component, Task::kSeg, K::kSymAe2il, seed);
  throw ArgumentError("unknown gradcheck component '" + component + "'");
}

std::vector<ComponentCheck> run_gradcheck(const std::vector<std::string>& components, std::size_t seeds, double eps,
                                          double tolerance) {
  if (seeds == 0) throw ArgumentError("gradcheck needs at least one seed");
  std::vector<ComponentCheck> out;
  for (const std::string& name : components) {
    ComponentCheck check;
    check.component = name;
    check.seeds = seeds;
    for (std::size_t s = 1; s <= seeds; ++s) {
      GradCheckCase c = make_gradcheck_case(name, s);
      const GradCheckReport r = grad_check_report(c.loss, c.params(), c.input, eps);
      check.entries += r.entries_checked;
      check.kinks += r.kinks;
      if (r.max_error >= check.max_error) {
        check.max_error = r.max_error;
        check.worst = r.worst_param + " seed " + std::to_string(s);
      }
    }
    check.ok = check.max_error <= tolerance;
    out.push_back(std::move(check));
  }
  return out;
}

}  // namespace ae2i
