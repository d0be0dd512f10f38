#include "ae2i/data.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

#include "ae2i/binary_io.hpp"
#include "ae2i/errors.hpp"

namespace ae2i {

namespace {

constexpr double kPi = std::numbers::pi;

struct Piece {
  double area;
  std::int32_t label;
  std::function<Vec3(Rng&)> sample;
};

Vec3 unit_direction(Rng& rng) {
  for (;;) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

Piece sphere_piece(Vec3 center, double r, std::int32_t label) {
  return {4.0 * kPi * r * r, label, [=](Rng& rng) { return Vec3(center + r * unit_direction(rng)); }};
}

Piece tube_piece(double r, double z0, double z1, std::int32_t label) {
  return {2.0 * kPi * r * (z1 - z0), label, [=](Rng& rng) {
            const double t = rng.uniform(0.0, 2.0 * kPi);
            return Vec3(r * std::cos(t), r * std::sin(t), rng.uniform(z0, z1));
          }};
}

Piece disk_piece(double r, double z, std::int32_t label) {
  return {kPi * r * r, label, [=](Rng& rng) {
            const double rho = r * std::sqrt(rng.uniform(0.0, 1.0));
            const double t = rng.uniform(0.0, 2.0 * kPi);
            return Vec3(rho * std::cos(t), rho * std::sin(t), z);
          }};
}

// Lateral surface of a cone with base radius r at z_base and apex at z_base + h.
Piece cone_piece(double r, double z_base, double h, std::int32_t label) {
  return {kPi * r * std::sqrt(r * r + h * h), label, [=](Rng& rng) {
            const double s = std::sqrt(rng.uniform(0.0, 1.0));  // distance fraction from the apex
            const double t = rng.uniform(0.0, 2.0 * kPi);
            return Vec3(r * s * std::cos(t), r * s * std::sin(t), z_base + h * (1.0 - s));
          }};
}

// Axis-aligned box [-a, a] x [-b, b] x [z0, z1]; `top` toggles the upper face.
void box_pieces(std::vector<Piece>& out, double a, double b, double z0, double z1, bool top, std::int32_t label) {
  const double h = z1 - z0;
  auto face = [&](double area, std::function<Vec3(Rng&)> f) { out.push_back({area, label, std::move(f)}); };
  face(4 * a * b, [=](Rng& rng) { return Vec3(rng.uniform(-a, a), rng.uniform(-b, b), z0); });
  if (top) face(4 * a * b, [=](Rng& rng) { return Vec3(rng.uniform(-a, a), rng.uniform(-b, b), z1); });
  face(2 * b * h, [=](Rng& rng) { return Vec3(-a, rng.uniform(-b, b), rng.uniform(z0, z1)); });
  face(2 * b * h, [=](Rng& rng) { return Vec3(a, rng.uniform(-b, b), rng.uniform(z0, z1)); });
  face(2 * a * h, [=](Rng& rng) { return Vec3(rng.uniform(-a, a), -b, rng.uniform(z0, z1)); });
  face(2 * a * h, [=](Rng& rng) { return Vec3(rng.uniform(-a, a), b, rng.uniform(z0, z1)); });
}

Piece torus_piece(double big_r, double small_r, std::int32_t label) {
  return {4.0 * kPi * kPi * big_r * small_r, label, [=](Rng& rng) {
            // Rejection on the tube angle makes the density uniform in area.
            for (;;) {
              const double u = rng.uniform(0.0, 2.0 * kPi);
              const double v = rng.uniform(0.0, 2.0 * kPi);
              const double accept = (big_r + small_r * std::cos(v)) / (big_r + small_r);
              if (rng.uniform(0.0, 1.0) <= accept) {
                const double ring = big_r + small_r * std::cos(v);
                return Vec3(ring * std::cos(u), ring * std::sin(u), small_r * std::sin(v));
              }
            }
          }};
}

std::vector<Piece> family_pieces(ShapeFamily family, Rng& rng) {
  std::vector<Piece> p;
  switch (family) {
    case ShapeFamily::kSphere:
      p.push_back(sphere_piece(Vec3::Zero(), 1.0, 0));
      break;
    case ShapeFamily::kCube: {
      const double a = rng.uniform(0.85, 1.15), b = rng.uniform(0.85, 1.15), c = rng.uniform(0.85, 1.15);
      box_pieces(p, a, b, -c, c, true, 0);
      break;
    }
    case ShapeFamily::kCylinder: {
      const double h = rng.uniform(0.8, 1.2);
      p.push_back(tube_piece(1.0, -h, h, 0));
      p.push_back(disk_piece(1.0, -h, 0));
      p.push_back(disk_piece(1.0, h, 0));
      break;
    }
    case ShapeFamily::kTorus:
      p.push_back(torus_piece(1.0, rng.uniform(0.25, 0.45), 0));
      break;
    case ShapeFamily::kCone: {
      const double h = rng.uniform(1.5, 2.5);
      p.push_back(cone_piece(1.0, -0.5 * h, h, 0));
      p.push_back(disk_piece(1.0, -0.5 * h, 0));
      break;
    }
    case ShapeFamily::kSphereRod: {
      const double r = rng.uniform(0.5, 0.7), rod = rng.uniform(0.1, 0.15), len = rng.uniform(1.0, 1.4);
      p.push_back(sphere_piece(Vec3::Zero(), r, 0));
      p.push_back(tube_piece(rod, r, r + len, 1));
      p.push_back(disk_piece(rod, r + len, 1));
      break;
    }
    case ShapeFamily::kBoxLid: {
      const double a = rng.uniform(0.8, 1.1), b = rng.uniform(0.8, 1.1), h = rng.uniform(0.5, 0.7);
      const double lid = rng.uniform(0.12, 0.2);
      box_pieces(p, a, b, -h, h, false, 0);
      box_pieces(p, a + 0.1, b + 0.1, h, h + lid, true, 1);
      break;
    }
    case ShapeFamily::kConeCylinder: {
      const double r = rng.uniform(0.5, 0.7), h = rng.uniform(1.0, 1.4), tip = rng.uniform(0.7, 1.1);
      p.push_back(tube_piece(r, -h, 0.0, 0));
      p.push_back(disk_piece(r, -h, 0));
      p.push_back(cone_piece(r, 0.0, tip, 1));
      break;
    }
  }
  return p;
}

// Picks a piece with probability proportional to its area.
const Piece& pick(const std::vector<const Piece*>& pieces, double total, Rng& rng) {
  double u = rng.uniform(0.0, total);
  for (const Piece* p : pieces) {
    if (u < p->area) return *p;
    u -= p->area;
  }
  return *pieces.back();
}

}  // namespace

std::string to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::kSphere: return "sphere";
    case ShapeFamily::kCube: return "cube";
    case ShapeFamily::kCylinder: return "cylinder";
    case ShapeFamily::kTorus: return "torus";
    case ShapeFamily::kCone: return "cone";
    case ShapeFamily::kSphereRod: return "sphere_rod";
    case ShapeFamily::kBoxLid: return "box_lid";
    case ShapeFamily::kConeCylinder: return "cone_cylinder";
  }
  return "unknown";
}

ShapeFamily parse_shape_family(const std::string& name) {
  for (ShapeFamily f : all_shape_families()) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown shape family '" + name + "'");
}

bool is_composite(ShapeFamily family) {
  return family == ShapeFamily::kSphereRod || family == ShapeFamily::kBoxLid || family == ShapeFamily::kConeCylinder;
}

std::vector<ShapeFamily> all_shape_families() {
  return {ShapeFamily::kSphere, ShapeFamily::kCube,      ShapeFamily::kCylinder, ShapeFamily::kTorus,
          ShapeFamily::kCone,   ShapeFamily::kSphereRod, ShapeFamily::kBoxLid,   ShapeFamily::kConeCylinder};
}

void normalize_unit_sphere(MatrixD& positions) {
  if (positions.rows() == 0) return;
  Vec3 centroid = Vec3::Zero();
  for (Eigen::Index i = 0; i < positions.rows(); ++i) centroid += positions.row(i).transpose();
  centroid /= static_cast<double>(positions.rows());
  double max_norm = 0.0;
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    positions.row(i) -= centroid.transpose();
    max_norm = std::max(max_norm, positions.row(i).norm());
  }
  if (max_norm > 0.0) positions /= max_norm;
}

PointCloud generate_shape(const ShapeSpec& spec, Rng& rng) {
  if (spec.points == 0) throw ConfigError("shape needs at least one point");
  const std::size_t n = spec.points;
  PointCloud cloud;
  cloud.positions.resize(static_cast<Eigen::Index>(n), 3);
  cloud.features.resize(static_cast<Eigen::Index>(n), 0);
  cloud.labels.assign(n, 0);

  if (spec.family == ShapeFamily::kSphere) {
    // Antipodal pairs put the centroid exactly at the origin.
    for (std::size_t i = 0; i + 1 < n; i += 2) {
      const Vec3 d = unit_direction(rng);
      cloud.positions.row(static_cast<Eigen::Index>(i)) = d.transpose();
      cloud.positions.row(static_cast<Eigen::Index>(i + 1)) = -d.transpose();
    }
    if (n % 2 == 1) cloud.positions.row(static_cast<Eigen::Index>(n - 1)) = unit_direction(rng).transpose();
  } else {
    const std::vector<Piece> pieces = family_pieces(spec.family, rng);
    // Points per part follow the part areas, with at least one point per part.
    std::int32_t parts = 0;
    for (const Piece& p : pieces) parts = std::max(parts, p.label + 1);
    std::vector<double> part_area(static_cast<std::size_t>(parts), 0.0);
    for (const Piece& p : pieces) part_area[static_cast<std::size_t>(p.label)] += p.area;
    const double total = std::accumulate(part_area.begin(), part_area.end(), 0.0);
    std::vector<std::size_t> part_count(static_cast<std::size_t>(parts), 0);
    std::size_t assigned = 0;
    for (std::size_t l = 1; l < part_count.size(); ++l) {
      const double expected = std::round(static_cast<double>(n) * part_area[l] / total);
      part_count[l] = std::clamp<std::size_t>(static_cast<std::size_t>(expected), 1, n > 1 ? n - 1 : 1);
      assigned += part_count[l];
    }
    if (assigned >= n) throw ConfigError("too few points for a composite shape");
    part_count[0] = n - assigned;
    std::size_t row = 0;
    for (std::int32_t l = 0; l < parts; ++l) {
      std::vector<const Piece*> own;
      double own_area = 0.0;
      for (const Piece& p : pieces) {
        if (p.label == l) {
          own.push_back(&p);
          own_area += p.area;
        }
      }
      for (std::size_t c = 0; c < part_count[static_cast<std::size_t>(l)]; ++c, ++row) {
        cloud.positions.row(static_cast<Eigen::Index>(row)) = pick(own, own_area, rng).sample(rng).transpose();
        cloud.labels[row] = l;
      }
    }
  }

  if (spec.noise > 0.0) {
    for (Eigen::Index i = 0; i < cloud.positions.size(); ++i) cloud.positions.data()[i] += spec.noise * rng.normal();
  }
  normalize_unit_sphere(cloud.positions);
  return cloud;
}

std::size_t DataConfig::num_classes() const { return task == Task::kCls ? families.size() : 2; }

void DataConfig::validate() const {
  if (families.empty()) throw ConfigError("data needs at least one shape family");
  if (points < 2) throw ConfigError("data points must be at least 2");
  if (train_per_class == 0 || test_per_class == 0) throw ConfigError("per-class sample counts must be at least 1");
  if (noise < 0.0) throw ConfigError("noise must be non-negative");
  if (task == Task::kCls && families.size() < 2) throw ConfigError("classification needs at least two families");
  if (task == Task::kSeg) {
    for (ShapeFamily f : families) {
      if (!is_composite(f)) throw ConfigError("segmentation needs part-labeled families, got '" + to_string(f) + "'");
    }
  }
}

namespace {

Dataset generate_split(const DataConfig& config, std::size_t per_class, std::uint64_t seed) {
  Dataset d;
  d.task = config.task;
  d.num_classes = config.num_classes();
  Rng rng(seed);
  for (std::size_t c = 0; c < config.families.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      d.samples.push_back(generate_shape({config.families[c], config.points, config.noise}, rng));
      d.targets.push_back(static_cast<std::int32_t>(c));
    }
  }
  return d;
}

constexpr char kDataMagic[] = "AE2D";
constexpr std::uint32_t kDataVersion = 1;

}  // namespace

DatasetPair generate_dataset(const DataConfig& config, std::uint64_t seed) {
  config.validate();
  DatasetPair out;
  out.config = config;
  out.seed = seed;
  out.train = generate_split(config, config.train_per_class, derive_seed(seed, 1));
  out.test = generate_split(config, config.test_per_class, derive_seed(seed, 2));
  return out;
}

void save_dataset(const std::string& path, const DatasetPair& data) {
  const DataConfig& cfg = data.config;
  ByteWriter w;
  w.raw(std::string(kDataMagic, 4));
  w.u32(kDataVersion);
  w.u64(data.seed);
  w.text(to_string(cfg.task));
  const std::size_t channels = data.train.size() > 0 ? data.train.samples.front().channels() : 0;
  w.u32(static_cast<std::uint32_t>(channels));
  w.u32(static_cast<std::uint32_t>(cfg.families.size()));
  for (ShapeFamily f : cfg.families) {
    w.text(to_string(f));
    w.u32(static_cast<std::uint32_t>(cfg.train_per_class));
    w.u32(static_cast<std::uint32_t>(cfg.test_per_class));
  }
  for (const Dataset* split : {&data.train, &data.test}) {
    for (const PointCloud& c : split->samples) {
      if (c.channels() != channels) throw DataError("samples differ in feature channel count");
      w.u32(static_cast<std::uint32_t>(c.size()));
      for (Eigen::Index i = 0; i < c.positions.size(); ++i) w.f32(static_cast<float>(c.positions.data()[i]));
      for (Eigen::Index i = 0; i < c.features.size(); ++i) w.f32(static_cast<float>(c.features.data()[i]));
      for (std::size_t i = 0; i < c.size(); ++i) w.u16(static_cast<std::uint16_t>(c.labels.empty() ? 0 : c.labels[i]));
    }
  }
  write_file(path, w.take());
}

DatasetPair load_dataset(const std::string& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes);
  if (r.raw(std::min<std::size_t>(4, bytes.size())) != std::string(kDataMagic, 4)) {
    throw FormatError("'" + path + "' is not a dataset cache (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kDataVersion) throw FormatError("unsupported dataset cache version " + std::to_string(version));
  DatasetPair out;
  out.seed = r.u64();
  DataConfig& cfg = out.config;
  try {
    cfg.task = parse_task(r.text());
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  const std::uint32_t channels = r.u32();
  const std::uint32_t families = r.u32();
  cfg.families.clear();
  std::vector<std::uint32_t> train_counts, test_counts;
  for (std::uint32_t i = 0; i < families; ++i) {
    try {
      cfg.families.push_back(parse_shape_family(r.text()));
    } catch (const ConfigError& e) {
      throw FormatError(e.what());
    }
    train_counts.push_back(r.u32());
    test_counts.push_back(r.u32());
  }
  if (!train_counts.empty()) {
    cfg.train_per_class = train_counts.front();
    cfg.test_per_class = test_counts.front();
  }
  auto read_split = [&](Dataset& d, const std::vector<std::uint32_t>& counts) {
    d.task = cfg.task;
    d.num_classes = cfg.num_classes();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      for (std::uint32_t i = 0; i < counts[c]; ++i) {
        const std::uint32_t n = r.u32();
        r.need(static_cast<std::uint64_t>(n) * (12 + 4 * channels + 2));
        PointCloud cloud;
        cloud.positions.resize(n, 3);
        cloud.features.resize(n, channels);
        for (Eigen::Index k = 0; k < cloud.positions.size(); ++k) cloud.positions.data()[k] = r.f32();
        for (Eigen::Index k = 0; k < cloud.features.size(); ++k) cloud.features.data()[k] = r.f32();
        cloud.labels.resize(n);
        for (std::uint32_t k = 0; k < n; ++k) cloud.labels[k] = r.u16();
        cfg.points = n;
        d.samples.push_back(std::move(cloud));
        d.targets.push_back(static_cast<std::int32_t>(c));
      }
    }
  };
  read_split(out.train, train_counts);
  read_split(out.test, test_counts);
  if (!r.done()) throw FormatError("trailing bytes in dataset cache");
  return out;
}

AugmentConfig AugmentConfig::for_task(Task task) {
  AugmentConfig c;
  if (task == Task::kCls) {
    c.anisotropic_scale = true;
    c.translate = true;
  } else {
    c.rotate = true;
    c.iso_scale = true;
    c.jitter = true;
  }
  return c;
}

PointCloud augment(const PointCloud& cloud, const AugmentConfig& config, Rng& rng) {
  PointCloud out = cloud;
  MatrixD& p = out.positions;
  if (config.rotate) {
    const double a = rng.uniform(config.angle_lo, config.angle_hi);
    const double c = std::cos(a), s = std::sin(a);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double x = p(i, 0), y = p(i, 1);
      p(i, 0) = c * x - s * y;
      p(i, 1) = s * x + c * y;
    }
  }
  if (config.anisotropic_scale) {
    for (int d = 0; d < 3; ++d) p.col(d) *= rng.uniform(config.scale_lo, config.scale_hi);
  }
  if (config.iso_scale) p *= rng.uniform(config.iso_lo, config.iso_hi);
  if (config.translate) {
    for (int d = 0; d < 3; ++d) p.col(d).array() += rng.uniform(-config.shift, config.shift);
  }
  if (config.jitter && config.jitter_sigma > 0.0) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p.data()[i] += std::clamp(config.jitter_sigma * rng.normal(), -config.jitter_clip, config.jitter_clip);
    }
  }
  return out;
}

PointCloud rotate_vertical(const PointCloud& cloud, double degrees) {
  double c, s;
  const double turns = degrees / 90.0;
  if (turns == std::floor(turns)) {
    const long q = ((static_cast<long>(turns) % 4) + 4) % 4;
    constexpr double cq[4] = {1, 0, -1, 0};
    constexpr double sq[4] = {0, 1, 0, -1};
    c = cq[q];
    s = sq[q];
  } else {
    c = std::cos(degrees * kPi / 180.0);
    s = std::sin(degrees * kPi / 180.0);
  }
  PointCloud out = cloud;
  for (Eigen::Index i = 0; i < out.positions.rows(); ++i) {
    const double x = cloud.positions(i, 0), y = cloud.positions(i, 1);
    out.positions(i, 0) = c * x - s * y;
    out.positions(i, 1) = s * x + c * y;
  }
  return out;
}

PointCloud scale_cloud(const PointCloud& cloud, double factor) {
  PointCloud out = cloud;
  out.positions *= factor;
  return out;
}

PointCloud add_point_noise(const PointCloud& cloud, double fraction, double sigma, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0) throw ArgumentError("noise fraction must be in [0, 1]");
  PointCloud out = cloud;
  const std::size_t n = cloud.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (count == 0) return out;
  IndexList order(n);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first `count` entries are a uniform subset.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(n - i));
    std::swap(order[i], order[j]);
  }
  for (std::size_t i = 0; i < count; ++i) {
    for (int d = 0; d < 3; ++d) out.positions(order[i], d) += sigma * rng.normal();
  }
  return out;
}

}  // namespace ae2i
