#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ae2i/errors.hpp"
#include "ae2i/gradcheck.hpp"
#include "ae2i/mlp.hpp"
#include "ae2i/ops.hpp"
#include "support.hpp"

namespace ae2i {
namespace {

using testing::random_matrix;

MatrixD rows(std::initializer_list<std::initializer_list<double>> r) {
  MatrixD m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

MlpRef one_layer(ParamSet<double>& params, const std::string& name, const MatrixD& w, const MatrixD& b) {
  Rng rng(0);
  MlpRef ref = params.add_mlp(name, {static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols())}, rng);
  params.value(ref.weight_slots[0]) = w;
  params.value(ref.bias_slots[0]) = b;
  return ref;
}

TEST(MlpForward, IdentitySingleLayerPassesInputThrough) {
  ParamSet<double> params;
  const MlpRef m = one_layer(params, "id", MatrixD::Identity(3, 3), MatrixD::Zero(1, 3));
  Tape<double> tape;
  const MatrixD out = mlp_forward(tape, params, m, tape.constant(rows({{1, 2, 3}}))).value();
  EXPECT_EQ(out, rows({{1, 2, 3}}));
}

TEST(MlpForward, ZeroWeightsYieldBias) {
  ParamSet<double> params;
  const MlpRef m = one_layer(params, "z", MatrixD::Zero(2, 3), rows({{0.5, -1, 2}}));
  Tape<double> tape;
  const MatrixD out = mlp_forward(tape, params, m, tape.constant(rows({{7, -3}, {1, 1}}))).value();
  EXPECT_EQ(out, rows({{0.5, -1, 2}, {0.5, -1, 2}}));
}

TEST(MlpForward, HiddenReluMatchesHandProduct) {
  // Hidden layer W = [[1,1],[1,-1]] then an identity output layer:
  // (1,2) W = (3,-1), relu -> (3,0).
  ParamSet<double> params;
  Rng rng(0);
  MlpRef m = params.add_mlp("h", {2, 2, 2}, rng);
  params.value(m.weight_slots[0]) = rows({{1, 1}, {1, -1}});
  params.value(m.bias_slots[0]).setZero();
  params.value(m.weight_slots[1]) = MatrixD::Identity(2, 2);
  params.value(m.bias_slots[1]).setZero();
  Tape<double> tape;
  EXPECT_EQ(mlp_forward(tape, params, m, tape.constant(rows({{1, 2}}))).value(), rows({{3, 0}}));
}

TEST(MlpForward, WidthMismatchIsDimensionError) {
  ParamSet<double> params;
  Rng rng(1);
  MlpRef m = params.add_mlp("m", {3, 4}, rng);
  Tape<double> tape;
  EXPECT_THROW(mlp_forward(tape, params, m, tape.constant(MatrixD::Zero(2, 2))), DimensionError);
}

TEST(MlpForward, PairdiffEqualsDifferencesThroughFullMlp) {
  Rng rng(3);
  ParamSet<double> params;
  MlpRef m = params.add_mlp("m", {4, 5, 3}, rng);
  const MatrixD pts = random_matrix(rng, 6, 4);
  IndexList from{0, 1, 2, 5, 4}, to{3, 3, 0, 1, 4};
  Tape<double> tape;
  Var<double> p = tape.constant(pts);
  const MatrixD fast = mlp_forward_pairdiff(tape, params, m, p, share(from), share(to)).value();
  MatrixD diff(5, 4);
  for (int r = 0; r < 5; ++r) diff.row(r) = pts.row(to[r]) - pts.row(from[r]);
  const MatrixD slow = mlp_forward(tape, params, m, tape.constant(diff)).value();
  EXPECT_LT((fast - slow).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SoftmaxRows, EqualLogitsAreUniform) {
  const MatrixD s = softmax_rows<double>(MatrixD::Zero(1, 3));
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(s(0, j), 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxRows, SingletonIsOne) { EXPECT_EQ(softmax_rows<double>(rows({{-42.0}}))(0, 0), 1.0); }

TEST(SoftmaxRows, LogsOfOneTwoThree) {
  const MatrixD s = softmax_rows<double>(rows({{std::log(1.0), std::log(2.0), std::log(3.0)}}));
  EXPECT_NEAR(s(0, 0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(s(0, 1), 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(s(0, 2), 3.0 / 6.0, 1e-15);
}

TEST(SoftmaxRows, EmptyRowIsDimensionError) {
  EXPECT_THROW(softmax_rows<double>(MatrixD(2, 0)), DimensionError);
}

TEST(SoftmaxRows, RowsSumToOneForRandomFiniteLogits) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const double spread = std::pow(10.0, rng.uniform(-3, 3));
    const MatrixD logits = random_matrix(rng, 1 + rng.index(8), 1 + rng.index(16), -spread, spread);
    const MatrixD s = softmax_rows<double>(logits);
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      EXPECT_NEAR(s.row(r).sum(), 1.0, 1e-12) << "seed " << seed;
      EXPECT_GE(s.row(r).minCoeff(), 0.0);
    }
  }
}

TEST(GroupSoftmax, ColumnsOfEachGroupSumToOne) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t group = 1 + rng.index(5);
    Tape<double> tape;
    const MatrixD s = group_softmax(tape.constant(random_matrix(rng, group * 4, 3, -30, 30)), group).value();
    for (Eigen::Index g = 0; g < 4; ++g) {
      const MatrixD sums = s.middleRows(g * static_cast<Eigen::Index>(group), static_cast<Eigen::Index>(group))
                               .colwise()
                               .sum();
      for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(sums(0, c), 1.0, 1e-12);
    }
  }
}

TEST(ChannelMaxPool, ElementwiseMaxWithArgmax) {
  const auto r = channel_max_pool<double>(rows({{1, 5}, {3, 2}}));
  EXPECT_EQ(r.pooled(0), 3);
  EXPECT_EQ(r.pooled(1), 5);
  EXPECT_EQ(r.argmax, (std::vector<std::int32_t>{1, 0}));
}

TEST(ChannelMaxPool, SingleRowIsItself) {
  const auto r = channel_max_pool<double>(rows({{4, -2, 7}}));
  EXPECT_EQ(MatrixD(r.pooled), rows({{4, -2, 7}}));
}

TEST(ChannelMaxPool, EmptyStackIsDimensionError) {
  EXPECT_THROW(channel_max_pool<double>(MatrixD(0, 3)), DimensionError);
}

TEST(ChannelMaxPool, TiesGoToLowestRow) {
  const auto r = channel_max_pool<double>(rows({{1, 2}, {9, 2}, {9, 0}}));
  EXPECT_EQ(r.argmax, (std::vector<std::int32_t>{1, 0}));
}

TEST(ChannelMaxPool, PermutationInvariantBitwise) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const MatrixD stack = random_matrix(rng, 1 + rng.index(10), 1 + rng.index(6));
    std::vector<int> perm(static_cast<std::size_t>(stack.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    MatrixD shuffled(stack.rows(), stack.cols());
    for (Eigen::Index r = 0; r < stack.rows(); ++r) shuffled.row(r) = stack.row(perm[static_cast<std::size_t>(r)]);
    EXPECT_EQ(MatrixD(channel_max_pool(stack).pooled), MatrixD(channel_max_pool(shuffled).pooled));
  }
}

TEST(GroupMax, BackwardRoutesOnlyToArgmaxRow) {
  Tape<double> tape;
  Var<double> x = tape.input(rows({{1, 5}, {3, 5}, {2, 0}}));
  Var<double> y = group_max(x, 3);
  tape.backward(y, rows({{10, 20}}));
  EXPECT_EQ(x.grad(), rows({{0, 20}, {10, 0}, {0, 0}}));
}

TEST(Backward, IdentityLayerSumGivesOnes) {
  ParamSet<double> params;
  const MlpRef m = one_layer(params, "id", MatrixD::Identity(3, 3), MatrixD::Zero(1, 3));
  Tape<double> tape;
  Var<double> x = tape.input(rows({{1, 2, 3}, {4, 5, 6}}));
  Var<double> y = mlp_forward(tape, params, m, x);
  tape.backward(y, MatrixD::Ones(2, 3));
  EXPECT_EQ(x.grad(), MatrixD::Ones(2, 3));
}

TEST(Backward, ZeroSeedGivesZeroGradients) {
  Rng rng(5);
  ParamSet<double> params;
  MlpRef m = params.add_mlp("m", {3, 4, 2}, rng);
  Tape<double> tape;
  Var<double> y = mlp_forward(tape, params, m, tape.constant(random_matrix(rng, 5, 3)));
  tape.backward(y, MatrixD::Zero(5, 2));
  auto grads = params.zeros_like();
  tape.collect_param_grads(grads);
  for (const auto& g : grads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, UnreachableParametersStayZero) {
  Rng rng(6);
  ParamSet<double> params;
  MlpRef used = params.add_mlp("used", {2, 2}, rng);
  MlpRef unused = params.add_mlp("unused", {2, 2}, rng);
  Tape<double> tape;
  Var<double> y = mlp_forward(tape, params, used, tape.constant(random_matrix(rng, 3, 2)));
  mlp_forward(tape, params, unused, tape.constant(random_matrix(rng, 3, 2)));
  tape.backward(y, MatrixD::Ones(3, 2));
  auto grads = params.zeros_like();
  tape.collect_param_grads(grads);
  EXPECT_GT(grads[used.weight_slots[0]].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grads[unused.weight_slots[0]].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grads[unused.bias_slots[0]].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, SecondPassIsStateError) {
  Tape<double> tape;
  Var<double> x = tape.input(MatrixD::Ones(1, 1));
  Var<double> y = scale(x, 2.0);
  tape.backward(y, MatrixD::Ones(1, 1));
  EXPECT_THROW(tape.backward(y, MatrixD::Ones(1, 1)), StateError);
}

TEST(Backward, SeedShapeMismatchIsDimensionError) {
  Tape<double> tape;
  Var<double> y = scale(tape.input(MatrixD::Ones(2, 2)), 2.0);
  EXPECT_THROW(tape.backward(y, MatrixD::Ones(1, 2)), DimensionError);
}

TEST(Backward, GradientsAccumulateAcrossUses) {
  // y = x + x + 3x -> dy/dx = 5
  Tape<double> tape;
  Var<double> x = tape.input(rows({{2.0}}));
  Var<double> y = add(add(x, x), scale(x, 3.0));
  tape.backward(y, MatrixD::Ones(1, 1));
  EXPECT_EQ(x.grad()(0, 0), 5.0);
}

TEST(GradCheck, QuadraticLossOnLinearLayerIsTight) {
  Rng rng(9);
  ParamSet<double> params;
  MlpRef m = params.add_mlp("lin", {3, 2}, rng);
  LossFn loss = [m](Tape<double>& tape, const ParamSet<double>& p, const Var<double>& x) {
    Var<double> y = mlp_forward(tape, p, m, x);
    return weighted_sum(mul(y, y), MatrixD(MatrixD::Ones(y.rows(), y.cols())));
  };
  EXPECT_LT(grad_check(loss, params, random_matrix(rng, 4, 3), 1e-5), 1e-7);
}

TEST(GradCheck, FrozenParameterContributesZero) {
  Rng rng(10);
  ParamSet<double> params;
  MlpRef used = params.add_mlp("used", {3, 2}, rng);
  params.add_mlp("frozen", {3, 2}, rng);
  LossFn loss = [used](Tape<double>& tape, const ParamSet<double>& p, const Var<double>& x) {
    Var<double> y = mlp_forward(tape, p, used, x);
    return weighted_sum(mul(y, y), MatrixD(MatrixD::Ones(y.rows(), y.cols())));
  };
  const GradCheckReport r = grad_check_report(loss, params, random_matrix(rng, 4, 3), 1e-5);
  EXPECT_LT(r.max_error, 1e-7);
  EXPECT_EQ(r.entries_checked, params.scalar_count());
}

TEST(GradCheck, RejectsBadEps) {
  ParamSet<double> params;
  LossFn loss = [](Tape<double>&, const ParamSet<double>&, const Var<double>& x) { return x; };
  EXPECT_THROW(grad_check(loss, params, MatrixD::Ones(1, 1), 0.0), ArgumentError);
  EXPECT_THROW(grad_check(loss, params, MatrixD::Ones(1, 1), 0.1), ArgumentError);
}

TEST(GradCheck, NonFiniteLossIsNumericError) {
  Rng rng(2);
  ParamSet<double> params;
  params.add_tensor("w", MatrixD::Ones(1, 1));
  LossFn loss = [](Tape<double>& tape, const ParamSet<double>& p, const Var<double>& x) {
    return scale(mul(tape.parameter(0, p.value(0)), x), std::numeric_limits<double>::infinity());
  };
  EXPECT_THROW(grad_check(loss, params, MatrixD::Ones(1, 1), 1e-5), NumericError);
}

TEST(GradCheck, DetectsCorruptedLinearGradient) {
  Rng rng(11);
  ParamSet<double> params;
  MlpRef m = params.add_mlp("lin", {3, 2}, rng);
  LossFn loss = [m](Tape<double>& tape, const ParamSet<double>& p, const Var<double>& x) {
    Var<double> y = mlp_forward(tape, p, m, x);
    return weighted_sum(mul(y, y), MatrixD(MatrixD::Ones(y.rows(), y.cols())));
  };
  fault::set_sign_flip(true);
  const double err = grad_check(loss, params, random_matrix(rng, 4, 3), 1e-5);
  fault::set_sign_flip(false);
  EXPECT_GT(err, 1e-2);
}

// Every differentiable op against central differences. Op inputs are
// parameters so the checker perturbs them directly.
struct OpCase {
  const char* name;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  std::function<Var<double>(std::vector<Var<double>>&, Rng&)> op;
};

std::vector<OpCase> op_cases() {
  return {
      {"linear", {{4, 3}, {3, 5}, {1, 5}}, [](auto& v, Rng&) { return linear(v[0], v[1], v[2]); }},
      {"linear_nobias", {{4, 3}, {3, 5}}, [](auto& v, Rng&) { return linear(v[0], v[1], Var<double>()); }},
      {"add_bias", {{4, 3}, {1, 3}}, [](auto& v, Rng&) { return add_bias(v[0], v[1]); }},
      {"add", {{4, 3}, {4, 3}}, [](auto& v, Rng&) { return add(v[0], v[1]); }},
      {"sub", {{4, 3}, {4, 3}}, [](auto& v, Rng&) { return sub(v[0], v[1]); }},
      {"mul", {{4, 3}, {4, 3}}, [](auto& v, Rng&) { return mul(v[0], v[1]); }},
      {"scale", {{4, 3}}, [](auto& v, Rng&) { return scale(v[0], -1.7); }},
      {"relu", {{6, 3}}, [](auto& v, Rng&) { return relu(v[0]); }},
      {"concat_cols", {{4, 3}, {4, 2}}, [](auto& v, Rng&) { return concat_cols(v[0], v[1]); }},
      {"gather_rows", {{5, 3}},
       [](auto& v, Rng& rng) {
         IndexList idx;
         for (int i = 0; i < 9; ++i) idx.push_back(static_cast<std::int32_t>(rng.index(5)));
         return gather_rows(v[0], share(idx));
       }},
      {"group_softmax", {{12, 3}}, [](auto& v, Rng&) { return group_softmax(v[0], 4); }},
      {"group_sum", {{12, 3}}, [](auto& v, Rng&) { return group_sum(v[0], 3); }},
      {"group_max", {{12, 3}}, [](auto& v, Rng&) { return group_max(v[0], 4); }},
      {"weighted_gather", {{5, 3}},
       [](auto& v, Rng& rng) {
         IndexList idx;
         for (int i = 0; i < 8; ++i) idx.push_back(static_cast<std::int32_t>(rng.index(5)));
         return weighted_gather(v[0], share(idx), random_matrix(rng, 4, 2));
       }},
      {"softmax_cross_entropy", {{5, 4}},
       [](auto& v, Rng& rng) {
         std::vector<std::int32_t> labels;
         for (int i = 0; i < 5; ++i) labels.push_back(static_cast<std::int32_t>(rng.index(4)));
         return softmax_cross_entropy(v[0], labels);
       }},
  };
}

TEST(GradCheck, EveryDifferentiableOpOnHundredSeeds) {
  for (const OpCase& c : op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      ParamSet<double> params;
      for (std::size_t i = 0; i < c.shapes.size(); ++i) {
        params.add_tensor("x" + std::to_string(i),
                          random_matrix(rng, static_cast<std::size_t>(c.shapes[i].first),
                                        static_cast<std::size_t>(c.shapes[i].second)));
      }
      const std::uint64_t op_seed = rng.next();
      LossFn loss = [&c, op_seed](Tape<double>& tape, const ParamSet<double>& p, const Var<double>&) {
        std::vector<Var<double>> vars;
        for (std::size_t i = 0; i < p.size(); ++i) vars.push_back(tape.parameter(i, p.value(i)));
        Rng op_rng(op_seed);
        Var<double> y = c.op(vars, op_rng);
        Rng w_rng(op_seed + 1);
        return weighted_sum(y, random_matrix(w_rng, static_cast<std::size_t>(y.rows()),
                                             static_cast<std::size_t>(y.cols())));
      };
      worst = std::max(worst, grad_check(loss, params, MatrixD::Zero(1, 1), 1e-5));
    }
    EXPECT_LE(worst, 1e-4) << c.name;
  }
}

TEST(ParamSet, GradientBuffersMatchParameterShapes) {
  Rng rng(1);
  ParamSet<double> params;
  params.add_mlp("a", {3, 4, 5}, rng);
  params.add_mlp("b", {2, 2}, rng);
  ASSERT_EQ(params.size(), 6u);
  for (std::size_t s = 0; s < params.size(); ++s) {
    EXPECT_EQ(params.grad(s).rows(), params.value(s).rows());
    EXPECT_EQ(params.grad(s).cols(), params.value(s).cols());
  }
  EXPECT_EQ(params.scalar_count(), 3u * 4 + 4 + 4 * 5 + 5 + 2 * 2 + 2);
}

TEST(ParamSet, DuplicateNamesAreRejected) {
  Rng rng(1);
  ParamSet<double> params;
  params.add_mlp("a", {3, 4}, rng);
  EXPECT_THROW(params.add_mlp("a", {3, 4}, rng), ConfigError);
  EXPECT_THROW(params.add_tensor("a.w0", MatrixD::Zero(1, 1)), ConfigError);
}

TEST(ParamSet, InitIsSeededAndBounded) {
  Rng r1(42), r2(42);
  ParamSet<double> a, b;
  a.add_mlp("m", {10, 6}, r1);
  b.add_mlp("m", {10, 6}, r2);
  EXPECT_EQ(a.value(0), b.value(0));
  EXPECT_LE(a.value(0).cwiseAbs().maxCoeff(), std::sqrt(6.0 / 16.0));
  EXPECT_EQ(a.value(1), MatrixD::Zero(1, 6));
}

}  // namespace
}  // namespace ae2i
