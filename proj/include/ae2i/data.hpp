#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ae2i/geometry.hpp"
#include "ae2i/networks.hpp"
#include "ae2i/rng.hpp"

namespace ae2i {

enum class ShapeFamily { kSphere, kCube, kCylinder, kTorus, kCone, kSphereRod, kBoxLid, kConeCylinder };

std::string to_string(ShapeFamily family);
/// Throws ConfigError for unknown names.
ShapeFamily parse_shape_family(const std::string& name);
/// Composite families carry two part labels (0 = body, 1 = attachment).
bool is_composite(ShapeFamily family);
/// The eight families in declaration order.
std::vector<ShapeFamily> all_shape_families();

struct ShapeSpec {
  ShapeFamily family = ShapeFamily::kSphere;
  std::size_t points = 512;
  double noise = 0.0;  // Gaussian sigma added before normalization
};

/// Uniform surface sample with per-point part labels, centered at the
/// centroid and scaled so the farthest point has norm 1. Shape proportions
/// vary per sample.
PointCloud generate_shape(const ShapeSpec& spec, Rng& rng);

/// Subtracts the centroid and divides by the largest norm.
void normalize_unit_sphere(MatrixD& positions);

struct DataConfig {
  Task task = Task::kCls;
  std::vector<ShapeFamily> families = all_shape_families();
  std::size_t points = 512;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 40;
  double noise = 0.0;

  /// Classes: one per family for cls, two parts for seg.
  std::size_t num_classes() const;
  void validate() const;
};

struct Dataset {
  Task task = Task::kCls;
  std::size_t num_classes = 0;
  std::vector<PointCloud> samples;
  std::vector<std::int32_t> targets;  // cls: class per sample; seg: unused (labels live in the clouds)

  std::size_t size() const { return samples.size(); }
};

struct DatasetPair {
  DataConfig config;
  std::uint64_t seed = 0;
  Dataset train;
  Dataset test;
};

/// Deterministic in (config, seed); train and test use disjoint sub-seeds.
DatasetPair generate_dataset(const DataConfig& config, std::uint64_t seed);

/// Cache file: "AE2D", version, seed, task, feature channels, family names with
/// per-split counts, then one record per sample (train first, family order):
/// u32 N, f32 positions 3N, f32 features CN, u16 labels N.
void save_dataset(const std::string& path, const DatasetPair& data);
/// Positions come back rounded to f32. Throws FormatError on malformed files.
DatasetPair load_dataset(const std::string& path);

// ---------------------------------------------------------------------------
// Augmentation and inference-time perturbations

struct AugmentConfig {
  bool anisotropic_scale = false;
  bool translate = false;
  bool rotate = false;
  bool iso_scale = false;
  bool jitter = false;
  double scale_lo = 0.66, scale_hi = 1.5;
  double shift = 0.2;
  double angle_lo = 0.0, angle_hi = 6.283185307179586;
  double iso_lo = 0.8, iso_hi = 1.1;
  double jitter_sigma = 0.01, jitter_clip = 0.05;

  /// cls: per-axis scale and translation; seg: vertical rotation, isotropic scale, jitter.
  static AugmentConfig for_task(Task task);
};

/// Labels and features are passed through untouched.
PointCloud augment(const PointCloud& cloud, const AugmentConfig& config, Rng& rng);

/// Rotation about the vertical (z) axis. Multiples of 90 degrees use exact
/// integer matrices.
PointCloud rotate_vertical(const PointCloud& cloud, double degrees);
PointCloud scale_cloud(const PointCloud& cloud, double factor);
/// Adds N(0, sigma^2) per coordinate to round(fraction * N) distinct points.
PointCloud add_point_noise(const PointCloud& cloud, double fraction, double sigma, Rng& rng);

}  // namespace ae2i
