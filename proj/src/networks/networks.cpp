#include "ae2i/networks.hpp"

#include <algorithm>

#include "ae2i/binary_io.hpp"
#include "ae2i/errors.hpp"
#include "ae2i/mlp.hpp"
#include "ae2i/ops.hpp"
#include "ae2i/rng.hpp"

namespace ae2i {

std::string to_string(Task task) { return task == Task::kCls ? "cls" : "seg"; }

Task parse_task(const std::string& text) {
  if (text == "cls") return Task::kCls;
  if (text == "seg") return Task::kSeg;
  throw ConfigError("unknown task '" + text + "' (expected cls or seg)");
}

std::vector<StageConfig> NetworkConfig::default_stages() {
  return {{512, 16, 4, 32}, {128, 16, 4, 64}, {32, 16, 4, 128}};
}

void NetworkConfig::validate() const {
  if (stages.empty()) throw ConfigError("network needs at least one encoder stage");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (num_points < 2) throw ConfigError("num_points must be at least 2");
  std::size_t available = num_points;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageConfig& st = stages[s];
    const std::string where = "stage " + std::to_string(s + 1) + ": ";
    if (st.points_out == 0) throw ConfigError(where + "points_out must be positive");
    if (st.points_out > available) {
      throw ConfigError(where + "points_out " + std::to_string(st.points_out) + " exceeds the " +
                        std::to_string(available) + " points available");
    }
    if (s > 0 && st.points_out >= stages[s - 1].points_out) {
      throw ConfigError(where + "points_out must decrease strictly across stages");
    }
    if (st.k == 0 || st.k >= available) {
      throw ConfigError(where + "K must be in [1, " + std::to_string(available - 1) + "]");
    }
    if (uses_edge_neighbors(kind) && (st.k_e == 0 || st.k_e + 1 > st.k)) {
      throw ConfigError(where + "K_e must be in [1, K - 1]");
    }
    if (st.channels == 0) throw ConfigError(where + "channels must be positive");
    available = st.points_out;
  }
  for (std::size_t w : head_hidden) {
    if (w == 0) throw ConfigError("head widths must be positive");
  }
}

template <typename T>
Network<T> build_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Network<T> net;
  net.config = config;
  Rng rng(seed);
  std::vector<std::size_t> level_channels = {3 + config.in_channels};
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageConfig& st = config.stages[s];
    net.stages.push_back(declare_operator(net.params, "stage" + std::to_string(s + 1), config.kind,
                                          level_channels.back(), st.channels, st.channels, rng, config.mask,
                                          config.share_reverse));
    level_channels.push_back(st.channels);
  }
  std::size_t head_in = level_channels.back();
  if (config.task == Task::kSeg) {
    const std::size_t levels = config.stages.size();
    std::size_t coarse_channels = level_channels.back();
    const std::size_t last_fine = config.stages.front().points_out < config.num_points ? 0 : 1;
    for (std::size_t fine = levels - 1; levels - 1 >= last_fine; --fine) {
      DecoderStage d;
      d.coarse_level = fine + 1;
      d.fine_level = fine;
      const std::size_t out = fine == 0 ? level_channels[1] : level_channels[fine];
      d.mlp = net.params.add_mlp("fp" + std::to_string(fine), {coarse_channels + level_channels[fine], out, out},
                                 rng);
      net.decoder.push_back(d);
      coarse_channels = out;
      if (fine == last_fine) break;
    }
    head_in = coarse_channels;
  }
  std::vector<std::size_t> widths = {head_in};
  widths.insert(widths.end(), config.head_hidden.begin(), config.head_hidden.end());
  widths.push_back(config.num_classes);
  net.head = net.params.add_mlp("head", widths, rng);
  return net;
}

Hierarchy build_hierarchy(const NetworkConfig& config, const MatrixD& positions) {
  Hierarchy h;
  h.positions.push_back(positions);
  for (const StageConfig& st : config.stages) {
    const MatrixD& level = h.positions.back();
    const auto n = static_cast<std::size_t>(level.rows());
    if (st.points_out > n) {
      throw DimensionError("stage keeps " + std::to_string(st.points_out) + " points but only " +
                           std::to_string(n) + " are available");
    }
    IndexList sample;
    if (st.points_out == n) {
      sample.resize(n);
      for (std::size_t i = 0; i < n; ++i) sample[i] = static_cast<std::int32_t>(i);
    } else {
      sample = farthest_point_sample(level, st.points_out, 0);
    }
    h.neighbors.push_back(knn_points(level, sample, st.k));
    h.positions.push_back(gather_positions(level, sample));
    h.samples.push_back(std::move(sample));
  }
  return h;
}

template <typename T>
Var<T> interpolate(const MatrixD& coarse_positions, const Var<T>& coarse_features, const MatrixD& fine_positions,
                   std::size_t k) {
  if (coarse_positions.rows() == 0) throw DimensionError("feature_propagation: empty coarse set");
  if (coarse_features.rows() != coarse_positions.rows()) {
    throw DimensionError("feature_propagation: coarse features do not match coarse positions");
  }
  if (k == 0) throw ArgumentError("feature_propagation: k must be positive");
  QueryNeighbors q = knn_query(coarse_positions, fine_positions, k);
  const auto rows = fine_positions.rows();
  const auto kk = static_cast<Eigen::Index>(q.k);
  Matrix<T> weights(rows, kk);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < kk; ++j) {
      const double w = 1.0 / (q.distances[static_cast<std::size_t>(r * kk + j)] + 1e-8);
      weights(r, j) = static_cast<T>(w);
      total += w;
    }
    for (Eigen::Index j = 0; j < kk; ++j) {
      weights(r, j) = static_cast<T>(1.0 / (q.distances[static_cast<std::size_t>(r * kk + j)] + 1e-8) / total);
    }
  }
  return weighted_gather(coarse_features, share(std::move(q.indices)), std::move(weights));
}

template <typename T>
Var<T> feature_propagation(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mlp,
                           const MatrixD& coarse_positions, const Var<T>& coarse_features,
                           const MatrixD& fine_positions, const Var<T>& skip, std::size_t k) {
  Var<T> x = interpolate(coarse_positions, coarse_features, fine_positions, k);
  if (skip.valid()) x = concat_cols(x, skip);
  return mlp_forward(tape, params, mlp, x);
}

template <typename T>
Var<T> forward(Tape<T>& tape, const Network<T>& net, const PointCloud& cloud) {
  cloud.validate();
  const NetworkConfig& cfg = net.config;
  if (cloud.channels() != cfg.in_channels) {
    throw DimensionError("network expects " + std::to_string(cfg.in_channels) + " feature channels, cloud has " +
                         std::to_string(cloud.channels()));
  }
  Hierarchy h = build_hierarchy(cfg, cloud.positions);

  Matrix<T> f0(static_cast<Eigen::Index>(cloud.size()), static_cast<Eigen::Index>(3 + cfg.in_channels));
  f0.leftCols(3) = cloud.positions.cast<T>();
  if (cfg.in_channels > 0) f0.rightCols(static_cast<Eigen::Index>(cfg.in_channels)) = cloud.features.cast<T>();
  std::vector<Var<T>> levels = {tape.constant(std::move(f0))};

  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    const StageConfig& st = cfg.stages[s];
    const std::size_t k_e = uses_edge_neighbors(cfg.kind) ? st.k_e : 0;
    LocalRegion<T> region = make_region(h.positions[s], levels.back(), h.neighbors[s], k_e);
    levels.push_back(operator_forward(tape, net.params, net.stages[s], region));
  }

  if (cfg.task == Task::kCls) {
    Var<T> pooled = group_max(levels.back(), static_cast<std::size_t>(levels.back().rows()));
    return mlp_forward(tape, net.params, net.head, pooled);
  }

  Var<T> x = levels.back();
  for (const DecoderStage& d : net.decoder) {
    Var<T> skip = levels[d.fine_level];
    if (!cfg.use_skip) skip = tape.constant(Matrix<T>::Zero(skip.rows(), skip.cols()));
    x = feature_propagation(tape, net.params, d.mlp, h.positions[d.coarse_level], x, h.positions[d.fine_level],
                            skip);
  }
  // Without a final decoder step to level 0, level 1 keeps every input point in order.
  return mlp_forward(tape, net.params, net.head, x);
}

template <typename T>
Matrix<T> forward_cls(const Network<T>& net, const PointCloud& cloud) {
  if (net.config.task != Task::kCls) throw ArgumentError("forward_cls on a segmentation network");
  Tape<T> tape;
  return forward(tape, net, cloud).value();
}

template <typename T>
Matrix<T> forward_seg(const Network<T>& net, const PointCloud& cloud) {
  if (net.config.task != Task::kSeg) throw ArgumentError("forward_seg on a classification network");
  Tape<T> tape;
  return forward(tape, net, cloud).value();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[] = "AE2I";

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.names.size() != ckpt.tensors.size()) throw StateError("checkpoint names and tensors differ in count");
  ByteWriter w;
  w.raw(std::string(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.text(ckpt.config_text);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    w.text(ckpt.names[i]);
    w.matrix(ckpt.tensors[i]);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.optimizer.momentum.size()));
  for (const MatrixD& m : ckpt.optimizer.momentum) w.matrix(m);
  w.u64(ckpt.optimizer.step);
  w.u32(ckpt.epoch);
  w.text(ckpt.rng_state);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.raw(std::min<std::size_t>(4, bytes.size())) != std::string(kMagic, 4)) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_text = r.text();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    c.names.push_back(r.text());
    c.tensors.push_back(r.matrix());
  }
  const std::uint32_t momenta = r.u32();
  for (std::uint32_t i = 0; i < momenta; ++i) c.optimizer.momentum.push_back(r.matrix());
  c.optimizer.step = r.u64();
  c.epoch = r.u32();
  c.rng_state = r.text();
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file(path, serialize_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

template <typename T>
void store_params(const ParamSet<T>& params, Checkpoint& ckpt) {
  ckpt.names.clear();
  ckpt.tensors.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.names.push_back(params.name(i));
    ckpt.tensors.push_back(params.value(i).template cast<double>());
  }
}

template <typename T>
void restore_params(const Checkpoint& ckpt, ParamSet<T>& params) {
  if (ckpt.tensors.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, network has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const MatrixD& t = ckpt.tensors[i];
    if (ckpt.names[i] != params.name(i) || t.rows() != params.value(i).rows() ||
        t.cols() != params.value(i).cols()) {
      throw FormatError("checkpoint tensor '" + ckpt.names[i] + "' does not match parameter '" + params.name(i) +
                        "'");
    }
    params.value(i) = t.cast<T>();
  }
}

#define AE2I_INSTANTIATE_NETWORKS(T)                                                                          \
  template Network<T> build_network<T>(const NetworkConfig&, std::uint64_t);                                 \
  template Var<T> interpolate<T>(const MatrixD&, const Var<T>&, const MatrixD&, std::size_t);                \
  template Var<T> feature_propagation<T>(Tape<T>&, const ParamSet<T>&, const MlpRef&, const MatrixD&,       \
                                         const Var<T>&, const MatrixD&, const Var<T>&, std::size_t);         \
  template Var<T> forward<T>(Tape<T>&, const Network<T>&, const PointCloud&);                                \
  template Matrix<T> forward_cls<T>(const Network<T>&, const PointCloud&);                                   \
  template Matrix<T> forward_seg<T>(const Network<T>&, const PointCloud&);                                   \
  template void store_params<T>(const ParamSet<T>&, Checkpoint&);                                            \
  template void restore_params<T>(const Checkpoint&, ParamSet<T>&);

AE2I_INSTANTIATE_NETWORKS(float)
AE2I_INSTANTIATE_NETWORKS(double)

}  // namespace ae2i
