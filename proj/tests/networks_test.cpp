#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include <Eigen/Geometry>

#include "ae2i/errors.hpp"
#include "ae2i/gradcheck_suite.hpp"
#include "ae2i/networks.hpp"
#include "support.hpp"

namespace ae2i {
namespace {

using testing::random_cloud;

constexpr OperatorKind kAllKinds[] = {OperatorKind::kBaselineMaxPool, OperatorKind::kAe2il,
                                      OperatorKind::kSymAe2il,        OperatorKind::kAfaStar,
                                      OperatorKind::kAe2ilStar,       OperatorKind::kSymAe2ilStar};

NetworkConfig small_config(Task task, OperatorKind kind) {
  NetworkConfig c;
  c.task = task;
  c.kind = kind;
  c.num_points = 64;
  c.num_classes = task == Task::kCls ? 5 : 3;
  c.stages = {{64, 8, 2, 8}, {16, 6, 2, 12}, {4, 3, 2, 16}};
  c.head_hidden = {12};
  return c;
}

PointCloud cloud_for(const NetworkConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  return random_cloud(rng, c.num_points, c.in_channels);
}

std::vector<MatrixD> values_of(const ParamSet<double>& p) {
  return {p.values().begin(), p.values().end()};
}

TEST(BuildNetwork, SameSeedSameParameters) {
  const NetworkConfig c = small_config(Task::kSeg, OperatorKind::kSymAe2il);
  EXPECT_EQ(values_of(build_network<double>(c, 9).params), values_of(build_network<double>(c, 9).params));
  EXPECT_NE(values_of(build_network<double>(c, 9).params), values_of(build_network<double>(c, 10).params));
}

TEST(BuildNetwork, BaselineHasNoEdgeInteractionParameters) {
  const Network<double> net = build_network<double>(small_config(Task::kCls, OperatorKind::kBaselineMaxPool), 1);
  for (std::size_t s = 0; s < net.params.size(); ++s) {
    for (const char* edge : {".phi", ".psi", ".gamma", ".alpha", ".beta"}) {
      EXPECT_EQ(net.params.name(s).find(edge), std::string::npos) << net.params.name(s);
    }
  }
}

TEST(BuildNetwork, ParameterCountGrowsWithOperatorKind) {
  for (Task task : {Task::kCls, Task::kSeg}) {
    const auto count = [&](OperatorKind k) { return build_network<double>(small_config(task, k), 1).params.scalar_count(); };
    EXPECT_GT(count(OperatorKind::kSymAe2il), count(OperatorKind::kAe2il));
    EXPECT_GT(count(OperatorKind::kAe2il), count(OperatorKind::kBaselineMaxPool));
  }
}

TEST(BuildNetwork, RejectsBadStageArithmetic) {
  NetworkConfig c = small_config(Task::kCls, OperatorKind::kSymAe2il);
  c.stages[1].points_out = 64;
  EXPECT_THROW(build_network<double>(c, 1), ConfigError);
  c = small_config(Task::kCls, OperatorKind::kSymAe2il);
  c.stages[0].points_out = 65;
  EXPECT_THROW(build_network<double>(c, 1), ConfigError);
  c = small_config(Task::kCls, OperatorKind::kSymAe2il);
  c.stages[2].k = 16;
  EXPECT_THROW(build_network<double>(c, 1), ConfigError);
  c = small_config(Task::kCls, OperatorKind::kSymAe2il);
  c.stages[0].k_e = 8;
  EXPECT_THROW(build_network<double>(c, 1), ConfigError);
  c.kind = OperatorKind::kBaselineMaxPool;
  EXPECT_NO_THROW(build_network<double>(c, 1));
  c = small_config(Task::kCls, OperatorKind::kSymAe2il);
  c.stages.clear();
  EXPECT_THROW(build_network<double>(c, 1), ConfigError);
  c = small_config(Task::kCls, OperatorKind::kSymAe2il);
  c.num_classes = 1;
  EXPECT_THROW(build_network<double>(c, 1), ConfigError);
}

TEST(Forward, DefaultClsConfigGivesEightLogits) {
  NetworkConfig c;
  ASSERT_EQ(c.num_points, 512u);
  ASSERT_EQ(c.num_classes, 8u);
  const Network<float> net = build_network<float>(c, 3);
  const Matrix<float> logits = forward_cls(net, cloud_for(c, 4));
  EXPECT_EQ(logits.rows(), 1);
  EXPECT_EQ(logits.cols(), 8);
  EXPECT_TRUE(logits.allFinite());
}

TEST(Forward, ShapesMatchStageArithmeticForEveryKind) {
  for (Task task : {Task::kCls, Task::kSeg}) {
    for (OperatorKind kind : kAllKinds) {
      NetworkConfig c = small_config(task, kind);
      c.in_channels = 2;
      const Network<double> net = build_network<double>(c, 5);
      Tape<double> tape;
      const MatrixD out = forward(tape, net, cloud_for(c, 6)).value();
      EXPECT_EQ(out.rows(), task == Task::kCls ? 1 : 64) << to_string(kind);
      EXPECT_EQ(out.cols(), static_cast<Eigen::Index>(c.num_classes)) << to_string(kind);
      EXPECT_TRUE(out.allFinite());
    }
  }
}

TEST(Forward, SegStageThatSubsamplesFirstStillCoversEveryPoint) {
  NetworkConfig c = small_config(Task::kSeg, OperatorKind::kAe2il);
  c.stages = {{32, 8, 2, 8}, {8, 4, 2, 16}};
  const Network<double> net = build_network<double>(c, 5);
  EXPECT_EQ(forward_seg(net, cloud_for(c, 2)).rows(), 64);
}

TEST(Forward, IdenticalInputGivesIdenticalOutput) {
  for (Task task : {Task::kCls, Task::kSeg}) {
    const NetworkConfig c = small_config(task, OperatorKind::kSymAe2il);
    const Network<double> net = build_network<double>(c, 7);
    const PointCloud cloud = cloud_for(c, 8);
    Tape<double> t1, t2;
    EXPECT_EQ(forward(t1, net, cloud).value(), forward(t2, net, cloud).value());
  }
}

TEST(Forward, RotatedInputStaysFinite) {
  const NetworkConfig c = small_config(Task::kCls, OperatorKind::kSymAe2il);
  const Network<double> net = build_network<double>(c, 7);
  PointCloud cloud = cloud_for(c, 8);
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(1.1, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  cloud.positions = (cloud.positions * rz.transpose()).eval();
  const MatrixD logits = forward_cls(net, cloud);
  EXPECT_EQ(logits.cols(), 5);
  EXPECT_TRUE(logits.allFinite());
}

TEST(Forward, ZeroedSkipChangesSegOutput) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    NetworkConfig c = small_config(Task::kSeg, OperatorKind::kSymAe2il);
    Network<double> net = build_network<double>(c, seed);
    const PointCloud cloud = cloud_for(c, seed + 50);
    const MatrixD with = forward_seg(net, cloud);
    net.config.use_skip = false;
    EXPECT_GT((forward_seg(net, cloud) - with).cwiseAbs().maxCoeff(), 0.0) << "seed " << seed;
  }
}

TEST(Forward, WrongTaskOrChannelsIsRejected) {
  const Network<double> cls = build_network<double>(small_config(Task::kCls, OperatorKind::kAe2il), 1);
  const Network<double> seg = build_network<double>(small_config(Task::kSeg, OperatorKind::kAe2il), 1);
  Rng rng(1);
  EXPECT_THROW(forward_seg(cls, random_cloud(rng, 64)), ArgumentError);
  EXPECT_THROW(forward_cls(seg, random_cloud(rng, 64)), ArgumentError);
  EXPECT_THROW(forward_cls(cls, random_cloud(rng, 64, 2)), DimensionError);
  EXPECT_THROW(forward_cls(cls, random_cloud(rng, 10)), Error);
}

TEST(Forward, FloatTracksDouble) {
  const NetworkConfig c = small_config(Task::kSeg, OperatorKind::kSymAe2il);
  const Network<double> net = build_network<double>(c, 3);
  const PointCloud cloud = cloud_for(c, 4);
  const MatrixD d = forward_seg(net, cloud);
  const MatrixD f = forward_seg(net.cast<float>(), cloud).cast<double>();
  EXPECT_LT((d - f).cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, d.cwiseAbs().maxCoeff()));
}

TEST(Hierarchy, FullStageIsIdentityThenFps) {
  const NetworkConfig c = small_config(Task::kSeg, OperatorKind::kAe2il);
  Rng rng(2);
  const MatrixD pos = random_cloud(rng, 64).positions;
  const Hierarchy h = build_hierarchy(c, pos);
  ASSERT_EQ(h.positions.size(), 4u);
  EXPECT_EQ(h.positions[1], pos);
  EXPECT_EQ(h.samples[1], farthest_point_sample(pos, 16, 0));
  EXPECT_EQ(h.positions[3].rows(), 4);
}

TEST(FeaturePropagation, CoincidentPointTakesThatFeature) {
  MatrixD coarse(2, 3), fine(1, 3), feat(2, 2);
  coarse << 0, 0, 0, 5, 0, 0;
  fine << 5, 0, 0;
  feat << 1, 2, 3, 4;
  Tape<double> tape;
  const MatrixD out = interpolate(coarse, tape.constant(feat), fine, 2).value();
  EXPECT_NEAR(out(0, 0), 3.0, 1e-8);
  EXPECT_NEAR(out(0, 1), 4.0, 1e-8);
}

TEST(FeaturePropagation, EquidistantPairGivesMean) {
  MatrixD coarse(2, 3), fine(1, 3), feat(2, 1);
  coarse << -1, 0, 0, 1, 0, 0;
  fine << 0, 2, 0;
  feat << 2, 6;
  Tape<double> tape;
  EXPECT_NEAR(interpolate(coarse, tape.constant(feat), fine, 2).value()(0, 0), 4.0, 1e-14);
}

TEST(FeaturePropagation, DistancesOneAndThreeWeighThreeToOne) {
  MatrixD coarse(2, 3), fine(1, 3), feat(2, 1);
  coarse << 1, 0, 0, -3, 0, 0;
  fine << 0, 0, 0;
  feat << 1, 0;
  Tape<double> tape;
  // Weights 1/1 and 1/3 normalize to 0.75 and 0.25 (up to the 1e-8 offset).
  EXPECT_NEAR(interpolate(coarse, tape.constant(feat), fine, 2).value()(0, 0), 0.75, 1e-8);
}

TEST(FeaturePropagation, EmptyCoarseSetIsDimensionError) {
  Tape<double> tape;
  EXPECT_THROW(interpolate(MatrixD(0, 3), tape.constant(MatrixD(0, 2)), MatrixD::Zero(1, 3), 3), DimensionError);
}

TEST(FeaturePropagation, SkipIsConcatenatedBeforeMlp) {
  Rng rng(1);
  ParamSet<double> p;
  const MlpRef m = p.add_mlp("fp", {3, 3}, rng);
  p.value(m.weight_slots[0]) = MatrixD::Identity(3, 3);
  MatrixD coarse(1, 3), fine(2, 3), feat(1, 1), skip(2, 2);
  coarse << 0, 0, 0;
  fine << 1, 0, 0, 0, 1, 0;
  feat << 7;
  skip << 1, 2, 3, 4;
  Tape<double> tape;
  const MatrixD out =
      feature_propagation(tape, p, m, coarse, tape.constant(feat), fine, tape.constant(skip), 1).value();
  MatrixD expected(2, 3);
  expected << 7, 1, 2, 7, 3, 4;
  EXPECT_EQ(out, expected);
}

TEST(MicroNetworkGradients, PassCentralDifferences) {
  for (const ComponentCheck& r :
       run_gradcheck({"micro_network_cls", "micro_network_seg", "feature_propagation"}, 2, 1e-6)) {
    EXPECT_TRUE(r.ok) << r.component << " " << r.max_error << " at " << r.worst;
    EXPECT_LE(r.max_error, 1e-4) << r.component;
  }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdenticalAndForwardBitwise) {
  const NetworkConfig c = small_config(Task::kCls, OperatorKind::kSymAe2il);
  const Network<double> net = build_network<double>(c, 11);
  Checkpoint ck;
  ck.config_text = "task = cls\n";
  store_params(net.params, ck);
  ck.optimizer.momentum = net.params.zeros_like();
  ck.optimizer.momentum[0](0, 0) = 0.125;
  ck.optimizer.step = 42;
  ck.epoch = 3;
  ck.rng_state = Rng(5).state();
  const std::filesystem::path path = std::filesystem::temp_directory_path() / "ae2i_networks_test.ae2i";
  save_checkpoint(path.string(), ck);
  const Checkpoint loaded = load_checkpoint(path.string());
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(ck));
  EXPECT_EQ(loaded.optimizer, ck.optimizer);
  EXPECT_EQ(loaded.epoch, 3u);
  EXPECT_EQ(loaded.rng_state, ck.rng_state);

  Network<double> fresh = build_network<double>(c, 999);
  restore_params(loaded, fresh.params);
  const PointCloud cloud = cloud_for(c, 12);
  EXPECT_EQ(forward_cls(fresh, cloud), forward_cls(net, cloud));
  std::filesystem::remove(path);
}

TEST(Checkpoint, FloatParametersSurviveTheDoubleRoundTrip) {
  const NetworkConfig c = small_config(Task::kSeg, OperatorKind::kAe2il);
  const Network<float> net = build_network<float>(c, 11);
  Checkpoint ck;
  store_params(net.params, ck);
  Network<float> fresh = build_network<float>(c, 12);
  restore_params(deserialize_checkpoint(serialize_checkpoint(ck)), fresh.params);
  for (std::size_t s = 0; s < net.params.size(); ++s) EXPECT_EQ(fresh.params.value(s), net.params.value(s));
}

TEST(Checkpoint, MalformedBytesAreFormatErrors) {
  Checkpoint ck;
  ck.names = {"a"};
  ck.tensors = {MatrixD::Ones(2, 2)};
  const std::string good = serialize_checkpoint(ck);
  EXPECT_THROW(deserialize_checkpoint(""), FormatError);
  EXPECT_THROW(deserialize_checkpoint("XXXX" + good.substr(4)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(good + "x"), FormatError);
  for (std::size_t cut = 0; cut < good.size(); ++cut) {
    EXPECT_THROW(deserialize_checkpoint(good.substr(0, cut)), FormatError) << "cut " << cut;
  }
  std::string bad_version = good;
  bad_version[4] = static_cast<char>(bad_version[4] + 1);
  EXPECT_THROW(deserialize_checkpoint(bad_version), FormatError);
}

TEST(Checkpoint, ShapeOrNameMismatchIsFormatError) {
  const Network<double> a = build_network<double>(small_config(Task::kCls, OperatorKind::kAe2il), 1);
  Network<double> b = build_network<double>(small_config(Task::kCls, OperatorKind::kSymAe2il), 1);
  Checkpoint ck;
  store_params(a.params, ck);
  EXPECT_THROW(restore_params(ck, b.params), FormatError);
}

TEST(Checkpoint, MissingFileIsDataError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ae2i"), DataError);
}

}  // namespace
}  // namespace ae2i
