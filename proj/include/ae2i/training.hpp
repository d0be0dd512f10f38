#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ae2i/config.hpp"
#include "ae2i/data.hpp"
#include "ae2i/metrics.hpp"
#include "ae2i/networks.hpp"

namespace ae2i {

/// Worker count: `requested` if nonzero, else AE2IL_THREADS if set and
/// nonzero, else the hardware concurrency.
std::size_t resolve_threads(std::size_t requested = 0);

/// Runs fn(0..n-1) on up to `threads` workers. Rethrows the exception of the
/// lowest failing index.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Learning rate for a 0-based epoch. Cosine decays from lr to lr_min over
/// the run; step multiplies by 0.1 at 60% and again at 80% of the epochs.
double learning_rate(const TrainConfig& config, std::size_t epoch);

struct Evaluation {
  Metrics metrics;
  double loss = 0.0;  // mean cross-entropy per sample
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;      // mean training loss over the epoch
  Metrics train;          // running metrics on the augmented training batches
  bool has_test = false;
  Evaluation test;
  double wall_seconds = 0.0;  // since training started
};

/// Per-sample logits -> predicted class ids (cls: one per sample, seg: one per point).
template <typename T>
std::vector<std::int32_t> predict(const Network<T>& net, const PointCloud& cloud);

/// Confusion matrix over every sample; evaluation is parallel per sample and
/// reduced in sample order.
template <typename T>
Evaluation evaluate(const Network<T>& net, const Dataset& data, std::size_t threads = 0);

/// SGD with momentum and L2 weight decay:
///   v = m v + (g + wd theta), theta -= lr v,
/// where g is the batch-mean gradient rescaled to norm grad_clip when larger.
/// Samples of a batch get independent tapes; gradients are summed in batch order.
template <typename T>
class Trainer {
 public:
  Trainer(Network<T>& net, TrainConfig config, std::uint64_t seed, std::size_t threads = 0);

  /// One pass over the training set in seeded shuffled order.
  EpochRecord train_epoch(const Dataset& train);

  /// One optimizer step on data[batch]; returns the mean loss. Predictions
  /// are added to `cm` when given.
  double step(const Dataset& data, std::span<const std::size_t> batch, double lr, ConfusionMatrix* cm = nullptr);

  std::size_t epoch() const { return epoch_; }
  std::uint64_t steps() const { return steps_; }

  /// Optimizer state, epoch and shuffling RNG; parameters are stored separately.
  void store(Checkpoint& ckpt) const;
  void restore(const Checkpoint& ckpt);

 private:
  Network<T>& net_;
  TrainConfig config_;
  std::uint64_t seed_;
  std::size_t threads_;
  Rng rng_;
  std::vector<Matrix<T>> velocity_;
  std::size_t epoch_ = 0;
  std::uint64_t steps_ = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training run. The test set (optional) is evaluated every
/// config.eval_every epochs and after the last one.
template <typename T>
std::vector<EpochRecord> train(Network<T>& net, const Dataset& train, const Dataset* test, const TrainConfig& config,
                               std::uint64_t seed, std::size_t threads = 0, const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Experiments

struct RunResult {
  std::vector<EpochRecord> history;
  Evaluation train_clean;  // final model on the un-augmented training set
  Evaluation test;
  Checkpoint checkpoint;   // final parameters, optimizer state, config text
  std::size_t param_count = 0;
  double seconds = 0.0;
};

/// Generates the data (unless given), builds the network at the configured
/// precision, trains and evaluates.
RunResult run_experiment(const ExperimentConfig& config, const DatasetPair* data = nullptr, std::size_t threads = 0,
                         const EpochCallback& on_epoch = {});

/// Rebuilds a network from a checkpoint (config text + parameters).
template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt, ExperimentConfig* config_out = nullptr);

// ---------------------------------------------------------------------------
// Robustness

enum class Perturbation { kNone, kRotate90, kRotate180, kRotate270, kScale08, kScale12, kNoiseHalfPercent, kNoiseOnePercent };

/// Clean run first, then rotations, scalings and point noise.
std::vector<Perturbation> all_perturbations();
std::string to_string(Perturbation p);

inline constexpr double kRobustNoiseSigma = 0.05;

/// Applies `p` to every sample. Noise draws use a stream derived from (seed, sample index).
Dataset perturb(const Dataset& data, Perturbation p, std::uint64_t seed, double noise_sigma = kRobustNoiseSigma);

struct RobustRow {
  Perturbation perturbation;
  Evaluation eval;
};

template <typename T>
std::vector<RobustRow> robustness_eval(const Network<T>& net, const Dataset& data, std::uint64_t seed,
                                       std::size_t threads = 0);

// ---------------------------------------------------------------------------
// Ablation

enum class AblationAxis { kKe, kModule, kRelation, kOperator };

AblationAxis parse_ablation_axis(const std::string& text);
std::string to_string(AblationAxis axis);

struct AblationVariant {
  std::string label;
  ExperimentConfig config;
};

/// K_e in {2,3,4,5}; module in {afa_star, ae2il_star, sym_ae2il_star};
/// relation in {df, df+ds, df+dc, df+ds+dc}; operator in {baseline-maxpool, ae2il, sym_ae2il}.
std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base, AblationAxis axis);

struct AblationRow {
  std::string label;
  std::uint64_t seed = 0;
  std::size_t param_count = 0;
  Evaluation train_clean;
  Evaluation test;
  double seconds = 0.0;
};

using AblationCallback = std::function<void(const AblationRow&)>;

/// One run per (variant, seed) with seeds base.seed .. base.seed + seeds - 1.
/// Every variant of a seed trains on the same dataset.
std::vector<AblationRow> ablation_sweep(const ExperimentConfig& base, AblationAxis axis, std::size_t seeds = 1,
                                        std::size_t threads = 0, const AblationCallback& on_row = {});

// ---------------------------------------------------------------------------
// CSV

struct MetricsRow {
  std::string run_id;
  std::string config_hash;
  std::size_t epoch = 0;
  std::string split;
  double oa = 0.0, macc = 0.0, miou = 0.0, loss = 0.0, wall_seconds = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

/// "run_id,config_hash,epoch,split,oA,mAcc,mIoU,loss,wall_seconds". Reals use
/// 17 significant digits so rows parse back exactly.
std::string metrics_csv(const std::vector<MetricsRow>& rows);
/// Throws FormatError on a bad header or row.
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

/// Train (and test, where evaluated) rows for every epoch.
std::vector<MetricsRow> history_rows(const std::string& run_id, const std::string& hash,
                                     const std::vector<EpochRecord>& history);

/// Mean test metrics per variant label, in first-seen order, then per-seed rows.
std::string ablation_table(const std::vector<AblationRow>& rows);
std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows);

}  // namespace ae2i
