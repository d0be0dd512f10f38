#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "ae2i/data.hpp"
#include "ae2i/networks.hpp"

namespace ae2i {

enum class Schedule { kCosine, kStep };
enum class Precision { kF32, kF64 };

std::string to_string(Schedule s);
std::string to_string(Precision p);
Schedule parse_schedule(const std::string& text);
Precision parse_precision(const std::string& text);

struct TrainConfig {
  double lr = 0.1;
  double lr_min = 1e-3;  // cosine floor
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;  // global gradient-norm ceiling per step; 0 disables
  Schedule schedule = Schedule::kCosine;
  std::size_t epochs = 12;
  std::size_t batch_size = 16;
  bool augment = true;
  Precision precision = Precision::kF32;
  std::size_t eval_every = 0;  // test-set evaluation interval in epochs; 0 = final epoch only

  void validate() const;
};

/// Everything a run depends on. network.task, num_points and num_classes
/// follow the data section.
struct ExperimentConfig {
  std::string run_id = "run";
  std::uint64_t seed = 7;
  DataConfig data;
  NetworkConfig network;
  TrainConfig train;

  /// Copies data-derived fields into `network` and validates every section.
  void resolve();
};

/// INI text with [experiment], [data], [network] and [train] sections.
/// Missing keys keep their defaults; unknown sections or keys are errors.
ExperimentConfig parse_config(const std::string& text);
/// Throws ConfigError when the file is missing or invalid.
ExperimentConfig load_config(const std::string& path);

/// Canonical INI text: sections and keys sorted, every key present.
/// parse_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& config);

/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Stage list text "points:K:K_e:channels,..." and back.
std::string stages_to_text(const std::vector<StageConfig>& stages);
std::vector<StageConfig> parse_stages(const std::string& text);

}  // namespace ae2i
