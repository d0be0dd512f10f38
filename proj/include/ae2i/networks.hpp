#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ae2i/geometry.hpp"
#include "ae2i/operators.hpp"
#include "ae2i/params.hpp"
#include "ae2i/tape.hpp"

namespace ae2i {

enum class Task { kCls, kSeg };

std::string to_string(Task task);
Task parse_task(const std::string& text);

struct StageConfig {
  std::size_t points_out = 0;
  std::size_t k = 16;
  std::size_t k_e = 4;
  std::size_t channels = 32;

  bool operator==(const StageConfig&) const = default;
};

struct NetworkConfig {
  Task task = Task::kCls;
  OperatorKind kind = OperatorKind::kSymAe2il;
  std::size_t num_points = 512;     // input points per sample
  std::size_t in_channels = 0;      // per-point features besides positions
  std::size_t num_classes = 8;
  std::vector<StageConfig> stages = default_stages();
  std::vector<std::size_t> head_hidden = {64};  // cls: 128 -> 64 -> classes
  RelationMask mask;
  bool share_reverse = false;
  bool use_skip = true;  // seg decoder; false feeds zeros in place of skip features

  /// 512 -> 128 -> 32 points, K = 16, K_e = 4, channels 32 -> 64 -> 128.
  static std::vector<StageConfig> default_stages();

  /// Throws ConfigError on bad stage arithmetic.
  void validate() const;

  bool operator==(const NetworkConfig&) const = default;
};

/// One feature-propagation step of the segmentation decoder.
struct DecoderStage {
  std::size_t coarse_level = 0;  // encoder level interpolated from
  std::size_t fine_level = 0;    // encoder level interpolated to (0 = input points)
  MlpRef mlp;
};

template <typename T>
struct Network {
  NetworkConfig config;
  ParamSet<T> params;
  std::vector<OperatorParams> stages;
  std::vector<DecoderStage> decoder;  // coarse to fine
  MlpRef head;

  /// Same network with parameters converted to U.
  template <typename U>
  Network<U> cast() const {
    Network<U> out;
    out.config = config;
    out.params = params.template cast<U>();
    out.stages = stages;
    out.decoder = decoder;
    out.head = head;
    return out;
  }
};

/// Deterministic in (config, seed).
template <typename T>
Network<T> build_network(const NetworkConfig& config, std::uint64_t seed);

/// Positions of every encoder level (level 0 = input) and the sampled indices
/// that produced each level from the one before it.
struct Hierarchy {
  std::vector<MatrixD> positions;
  std::vector<IndexList> samples;         // samples[s] indexes level s, yields level s + 1
  std::vector<NeighborIndex> neighbors;   // K-NN of samples[s] within level s
};

/// FPS (start 0) per stage, identity when a stage keeps every point.
Hierarchy build_hierarchy(const NetworkConfig& config, const MatrixD& positions);

/// Inverse-distance interpolation of coarse features onto fine positions over
/// the k nearest coarse points (weights 1/(d + 1e-8), normalized).
template <typename T>
Var<T> interpolate(const MatrixD& coarse_positions, const Var<T>& coarse_features, const MatrixD& fine_positions,
                   std::size_t k = 3);

/// interpolate, concatenate `skip` (may be invalid for none), then the shared MLP.
template <typename T>
Var<T> feature_propagation(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mlp,
                           const MatrixD& coarse_positions, const Var<T>& coarse_features,
                           const MatrixD& fine_positions, const Var<T>& skip, std::size_t k = 3);

/// Cls: 1 x num_classes logits. Seg: N x num_classes.
template <typename T>
Var<T> forward(Tape<T>& tape, const Network<T>& net, const PointCloud& cloud);

/// Value-only wrappers.
template <typename T>
Matrix<T> forward_cls(const Network<T>& net, const PointCloud& cloud);
template <typename T>
Matrix<T> forward_seg(const Network<T>& net, const PointCloud& cloud);

// ---------------------------------------------------------------------------
// Checkpoints

struct OptimizerState {
  std::vector<MatrixD> momentum;  // per parameter slot; empty before the first step
  std::uint64_t step = 0;

  bool operator==(const OptimizerState&) const = default;
};

struct Checkpoint {
  std::string config_text;
  std::vector<std::string> names;
  std::vector<MatrixD> tensors;
  OptimizerState optimizer;
  std::uint32_t epoch = 0;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, unknown version, truncation or trailing bytes.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws DataError when the file cannot be read, FormatError when it is malformed.
Checkpoint load_checkpoint(const std::string& path);

/// Copies parameters into a checkpoint (names + f64 values).
template <typename T>
void store_params(const ParamSet<T>& params, Checkpoint& ckpt);
/// Loads checkpoint tensors into `params`; names and shapes must match exactly.
template <typename T>
void restore_params(const Checkpoint& ckpt, ParamSet<T>& params);

}  // namespace ae2i
