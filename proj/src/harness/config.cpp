#include "ae2i/config.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ae2i/binary_io.hpp"
#include "ae2i/errors.hpp"

namespace ae2i {

std::string to_string(Schedule s) { return s == Schedule::kCosine ? "cosine" : "step"; }
std::string to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Schedule parse_schedule(const std::string& text) {
  if (text == "cosine") return Schedule::kCosine;
  if (text == "step") return Schedule::kStep;
  throw ConfigError("unknown schedule '" + text + "' (expected cosine or step)");
}

Precision parse_precision(const std::string& text) {
  if (text == "f32") return Precision::kF32;
  if (text == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + text + "' (expected f32 or f64)");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(lr_min >= 0.0) || lr_min > lr) throw ConfigError("lr_min must be in [0, lr]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
}

void ExperimentConfig::resolve() {
  data.validate();
  network.task = data.task;
  network.num_points = data.points;
  network.num_classes = data.num_classes();
  network.in_channels = 0;
  network.validate();
  train.validate();
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("'" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + text + "'");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

using Sections = std::map<std::string, std::map<std::string, std::string>>;

Sections to_sections(const ExperimentConfig& c) {
  Sections s;
  s["experiment"]["run_id"] = c.run_id;
  s["experiment"]["seed"] = std::to_string(c.seed);

  std::vector<std::string> families;
  for (ShapeFamily f : c.data.families) families.push_back(to_string(f));
  s["data"]["task"] = to_string(c.data.task);
  s["data"]["families"] = join(families, ",");
  s["data"]["points"] = std::to_string(c.data.points);
  s["data"]["train_per_class"] = std::to_string(c.data.train_per_class);
  s["data"]["test_per_class"] = std::to_string(c.data.test_per_class);
  s["data"]["noise"] = format_double(c.data.noise);

  std::vector<std::string> head;
  for (std::size_t w : c.network.head_hidden) head.push_back(std::to_string(w));
  s["network"]["operator"] = to_string(c.network.kind);
  s["network"]["stages"] = stages_to_text(c.network.stages);
  s["network"]["head_hidden"] = join(head, ",");
  s["network"]["relation"] = c.network.mask.to_string();
  s["network"]["share_reverse"] = c.network.share_reverse ? "true" : "false";
  s["network"]["use_skip"] = c.network.use_skip ? "true" : "false";

  s["train"]["lr"] = format_double(c.train.lr);
  s["train"]["lr_min"] = format_double(c.train.lr_min);
  s["train"]["momentum"] = format_double(c.train.momentum);
  s["train"]["weight_decay"] = format_double(c.train.weight_decay);
  s["train"]["grad_clip"] = format_double(c.train.grad_clip);
  s["train"]["schedule"] = to_string(c.train.schedule);
  s["train"]["epochs"] = std::to_string(c.train.epochs);
  s["train"]["batch_size"] = std::to_string(c.train.batch_size);
  s["train"]["augment"] = c.train.augment ? "true" : "false";
  s["train"]["precision"] = to_string(c.train.precision);
  s["train"]["eval_every"] = std::to_string(c.train.eval_every);
  return s;
}

void apply(ExperimentConfig& c, const std::string& section, const std::string& key, const std::string& v) {
  const std::string name = section + "." + key;
  if (section == "experiment") {
    if (key == "run_id") {
      if (v.empty()) throw ConfigError("run_id must not be empty");
      c.run_id = v;
    } else if (key == "seed") {
      c.seed = parse_int<std::uint64_t>(name, v);
    } else {
      throw ConfigError("unknown key '" + name + "'");
    }
  } else if (section == "data") {
    if (key == "task") {
      c.data.task = parse_task(v);
    } else if (key == "families") {
      c.data.families.clear();
      for (const std::string& f : split(v, ',')) c.data.families.push_back(parse_shape_family(f));
    } else if (key == "points") {
      c.data.points = parse_int<std::size_t>(name, v);
    } else if (key == "train_per_class") {
      c.data.train_per_class = parse_int<std::size_t>(name, v);
    } else if (key == "test_per_class") {
      c.data.test_per_class = parse_int<std::size_t>(name, v);
    } else if (key == "noise") {
      c.data.noise = parse_double(name, v);
    } else {
      throw ConfigError("unknown key '" + name + "'");
    }
  } else if (section == "network") {
    if (key == "operator") {
      c.network.kind = parse_operator_kind(v);
    } else if (key == "stages") {
      c.network.stages = parse_stages(v);
    } else if (key == "head_hidden") {
      c.network.head_hidden.clear();
      if (!v.empty()) {
        for (const std::string& w : split(v, ',')) c.network.head_hidden.push_back(parse_int<std::size_t>(name, w));
      }
    } else if (key == "relation") {
      c.network.mask = RelationMask::parse(v);
    } else if (key == "share_reverse") {
      c.network.share_reverse = parse_bool(name, v);
    } else if (key == "use_skip") {
      c.network.use_skip = parse_bool(name, v);
    } else {
      throw ConfigError("unknown key '" + name + "'");
    }
  } else if (section == "train") {
    if (key == "lr") {
      c.train.lr = parse_double(name, v);
    } else if (key == "lr_min") {
      c.train.lr_min = parse_double(name, v);
    } else if (key == "momentum") {
      c.train.momentum = parse_double(name, v);
    } else if (key == "weight_decay") {
      c.train.weight_decay = parse_double(name, v);
    } else if (key == "grad_clip") {
      c.train.grad_clip = parse_double(name, v);
    } else if (key == "schedule") {
      c.train.schedule = parse_schedule(v);
    } else if (key == "epochs") {
      c.train.epochs = parse_int<std::size_t>(name, v);
    } else if (key == "batch_size") {
      c.train.batch_size = parse_int<std::size_t>(name, v);
    } else if (key == "augment") {
      c.train.augment = parse_bool(name, v);
    } else if (key == "precision") {
      c.train.precision = parse_precision(v);
    } else if (key == "eval_every") {
      c.train.eval_every = parse_int<std::size_t>(name, v);
    } else {
      throw ConfigError("unknown key '" + name + "'");
    }
  } else {
    throw ConfigError("unknown section '[" + section + "]'");
  }
}

}  // namespace

std::string stages_to_text(const std::vector<StageConfig>& stages) {
  std::vector<std::string> parts;
  for (const StageConfig& s : stages) {
    parts.push_back(std::to_string(s.points_out) + ":" + std::to_string(s.k) + ":" + std::to_string(s.k_e) + ":" +
                    std::to_string(s.channels));
  }
  return join(parts, ",");
}

std::vector<StageConfig> parse_stages(const std::string& text) {
  std::vector<StageConfig> out;
  for (const std::string& part : split(text, ',')) {
    const std::vector<std::string> f = split(part, ':');
    if (f.size() != 4) throw ConfigError("stage '" + part + "' must be points:K:K_e:channels");
    out.push_back({parse_int<std::size_t>("stages", f[0]), parse_int<std::size_t>("stages", f[1]),
                   parse_int<std::size_t>("stages", f[2]), parse_int<std::size_t>("stages", f[3])});
  }
  if (out.empty()) throw ConfigError("stages must list at least one stage");
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    if (section != "experiment" && section != "data" && section != "network" && section != "train") {
      throw ConfigError("unknown section '[" + section + "]'");
    }
    for (const auto& [key, value] : body) apply(c, section, key, value.get_value<std::string>());
  }
  c.resolve();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file '" + path + "'");
  }
  return parse_config(text);
}

std::string to_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [section, keys] : to_sections(config)) {
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n";
    for (const auto& [key, value] : keys) out += key + " = " + value + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ae2i
