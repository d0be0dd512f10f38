#include "ae2i/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "ae2i/binary_io.hpp"
#include "ae2i/config.hpp"
#include "ae2i/errors.hpp"
#include "ae2i/gradcheck_suite.hpp"
#include "ae2i/ops.hpp"
#include "ae2i/training.hpp"

#ifndef AE2I_BUILD_ID
#define AE2I_BUILD_ID "unknown"
#endif

namespace ae2i {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> epochs;
  bool dry_run = false;
  double eps = 1e-5;
  std::optional<std::size_t> seeds;
  std::string axis;
  std::string checkpoint;
  std::string precision;
  std::string inject_fault;
  std::vector<std::string> components;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ExperimentConfig load_experiment(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (!o.precision.empty()) c.train.precision = parse_precision(o.precision);
  c.resolve();
  return c;
}

std::string pct(double v) { return fmt::format("{:.2f}", 100.0 * v); }

json metrics_json(const Evaluation& e) {
  return {{"oA", e.metrics.oa}, {"mAcc", e.metrics.macc}, {"mIoU", e.metrics.miou}, {"loss", e.loss}};
}

/// Written before work starts and rewritten when it ends.
class Manifest {
 public:
  Manifest(std::string path, const std::string& command, const ExperimentConfig& config) : path_(std::move(path)) {
    doc_["command"] = command;
    doc_["run_id"] = config.run_id;
    doc_["seed"] = config.seed;
    doc_["config_hash"] = config_hash(config);
    doc_["config"] = to_text(config);
    doc_["build_id"] = AE2I_BUILD_ID;
    doc_["started_at"] = utc_now();
    doc_["finished_at"] = nullptr;
    doc_["status"] = "running";
    doc_["outputs"] = json::object();
    write();
  }

  void output(const std::string& key, const std::string& path) { doc_["outputs"][key] = path; }
  json& result() { return doc_["result"]; }

  void finish(const std::string& status) {
    doc_["status"] = status;
    doc_["finished_at"] = utc_now();
    write();
  }

 private:
  void write() const { write_file(path_, doc_.dump(2) + "\n"); }

  std::string path_;
  json doc_;
};

std::string default_out(const Options& o, const std::string& name) { return o.out.empty() ? "runs/" + name : o.out; }

// ---------------------------------------------------------------------------

template <typename T>
int dry_run(const ExperimentConfig& config) {
  const DatasetPair data = generate_dataset(config.data, config.seed);
  Network<T> net = build_network<T>(config.network, derive_seed(config.seed, 10));
  Trainer<T> trainer(net, config.train, derive_seed(config.seed, 11));
  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < std::min(config.train.batch_size, data.train.size()); ++i) batch.push_back(i);
  const double loss = trainer.step(data.train, batch, learning_rate(config.train, 0));
  fmt::print("dry run: {} parameters, 1 batch of {}, loss {:.6f}; nothing written\n", net.params.scalar_count(),
             batch.size(), loss);
  return kExitOk;
}

int cmd_train(const Options& o) {
  const ExperimentConfig config = load_experiment(o);
  if (o.dry_run) {
    return config.train.precision == Precision::kF64 ? dry_run<double>(config) : dry_run<float>(config);
  }
  const fs::path out = default_out(o, config.run_id);
  fs::create_directories(out);
  const std::string hash = config_hash(config);
  const std::string csv_path = (out / "metrics.csv").string();
  const std::string ckpt_path = (out / "checkpoint.ae2i").string();
  Manifest manifest((out / "manifest.json").string(), "train", config);
  manifest.output("metrics", csv_path);
  manifest.output("checkpoint", ckpt_path);

  fmt::print("train {} ({}), {} {} points, operator {}, {} epochs, {}\n", config.run_id, hash,
             to_string(config.data.task), config.data.points, to_string(config.network.kind), config.train.epochs,
             to_string(config.train.precision));
  std::vector<EpochRecord> seen;
  RunResult r;
  try {
    r = run_experiment(config, nullptr, 0, [&](const EpochRecord& e) {
      std::string line = fmt::format("epoch {:>3}/{}  lr {:.5f}  loss {:.4f}  train oA {:>6}", e.epoch,
                                     config.train.epochs, e.lr, e.loss, pct(e.train.oa));
      if (e.has_test) {
        line += fmt::format("  test oA {:>6} mAcc {:>6} mIoU {:>6}", pct(e.test.metrics.oa), pct(e.test.metrics.macc),
                            pct(e.test.metrics.miou));
      }
      fmt::print("{}  {:.1f}s\n", line, e.wall_seconds);
      std::fflush(stdout);
      seen.push_back(e);
      write_file(csv_path, metrics_csv(history_rows(config.run_id, hash, seen)));
    });
  } catch (const NumericError&) {
    manifest.finish("diverged");
    throw;
  }
  save_checkpoint(ckpt_path, r.checkpoint);
  fmt::print("final: train oA {} (clean)  test oA {}  mAcc {}  mIoU {}  params {}  {:.1f}s\n",
             pct(r.train_clean.metrics.oa), pct(r.test.metrics.oa), pct(r.test.metrics.macc),
             pct(r.test.metrics.miou), r.param_count, r.seconds);
  manifest.result() = {{"train_clean", metrics_json(r.train_clean)},
                       {"test", metrics_json(r.test)},
                       {"param_count", r.param_count},
                       {"epochs", r.history.size()}};
  manifest.finish("ok");
  return kExitOk;
}

struct LoadedModel {
  Checkpoint ckpt;
  ExperimentConfig config;
  Precision precision = Precision::kF32;
};

LoadedModel load_model(const Options& o) {
  if (o.checkpoint.empty()) throw ArgumentError("--checkpoint is required");
  if (!fs::exists(o.checkpoint)) throw ArgumentError("checkpoint '" + o.checkpoint + "' does not exist");
  LoadedModel m;
  m.ckpt = load_checkpoint(o.checkpoint);
  try {
    m.config = parse_config(m.ckpt.config_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  if (o.seed) m.config.seed = *o.seed;
  m.precision = o.precision.empty() ? m.config.train.precision : parse_precision(o.precision);
  return m;
}

template <typename T>
Evaluation eval_typed(const LoadedModel& m, const Dataset& test) {
  return evaluate(network_from_checkpoint<T>(m.ckpt), test);
}

int cmd_eval(const Options& o) {
  const LoadedModel m = load_model(o);
  const DatasetPair data = generate_dataset(m.config.data, m.config.seed);
  const auto start = std::chrono::steady_clock::now();
  const Evaluation e =
      m.precision == Precision::kF64 ? eval_typed<double>(m, data.test) : eval_typed<float>(m, data.test);
  fmt::print("test: oA {}  mAcc {}  mIoU {}  loss {:.6f}  ({} samples)\n", pct(e.metrics.oa), pct(e.metrics.macc),
             pct(e.metrics.miou), e.loss, data.test.size());
  if (!o.out.empty()) {
    const MetricsRow row{m.config.run_id, config_hash(m.config), m.ckpt.epoch, "test", e.metrics.oa, e.metrics.macc,
                         e.metrics.miou, e.loss, seconds_since(start)};
    write_file(o.out, metrics_csv({row}));
  }
  return kExitOk;
}

template <typename T>
std::vector<RobustRow> robust_typed(const LoadedModel& m, const Dataset& test) {
  return robustness_eval(network_from_checkpoint<T>(m.ckpt), test, derive_seed(m.config.seed, 3));
}

int cmd_robust(const Options& o) {
  const LoadedModel m = load_model(o);
  const DatasetPair data = generate_dataset(m.config.data, m.config.seed);
  const std::vector<RobustRow> rows =
      m.precision == Precision::kF64 ? robust_typed<double>(m, data.test) : robust_typed<float>(m, data.test);
  // The clean row is a plain evaluation, independent of the perturbation path.
  const Evaluation clean =
      m.precision == Precision::kF64 ? eval_typed<double>(m, data.test) : eval_typed<float>(m, data.test);
  const std::string hash = config_hash(m.config);
  std::vector<MetricsRow> csv;
  fmt::print("{:<12} {:>8} {:>8} {:>8} {:>10}\n", "perturbation", "oA", "mAcc", "mIoU", "loss");
  const auto emit = [&](const std::string& name, const Evaluation& e) {
    const Metrics& x = e.metrics;
    fmt::print("{:<12} {:>8} {:>8} {:>8} {:>10.6f}\n", name, pct(x.oa), pct(x.macc), pct(x.miou), e.loss);
    csv.push_back({m.config.run_id, hash, m.ckpt.epoch, name, x.oa, x.macc, x.miou, e.loss, 0.0});
  };
  emit("clean", clean);
  for (const RobustRow& r : rows) emit(to_string(r.perturbation), r.eval);
  if (!o.out.empty()) write_file(o.out, metrics_csv(csv));
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  if (o.axis.empty()) throw ConfigError("--axis is required (ke, module, relation or operator)");
  const AblationAxis axis = parse_ablation_axis(o.axis);
  const ExperimentConfig config = load_experiment(o);
  const std::size_t seeds = o.seeds.value_or(1);
  const fs::path out = default_out(o, config.run_id + "-ablate-" + to_string(axis));
  fs::create_directories(out);
  Manifest manifest((out / "manifest.json").string(), "ablate", config);
  manifest.output("csv", (out / "ablation.csv").string());
  manifest.output("table", (out / "ablation.txt").string());
  fmt::print("ablate {} over {} seed(s) starting at {}\n", to_string(axis), seeds, config.seed);
  std::vector<AblationRow> done;
  const auto rows = ablation_sweep(config, axis, seeds, 0, [&](const AblationRow& r) {
    fmt::print("  {:<18} seed {:<4} test oA {:>6} mAcc {:>6} mIoU {:>6}  {:.1f}s\n", r.label, r.seed,
               pct(r.test.metrics.oa), pct(r.test.metrics.macc), pct(r.test.metrics.miou), r.seconds);
    std::fflush(stdout);
    done.push_back(r);
    write_file((out / "ablation.csv").string(), ablation_csv(axis, done));
  });
  const std::string table = ablation_table(rows);
  write_file((out / "ablation.txt").string(), table);
  write_file((out / "ablation.csv").string(), ablation_csv(axis, rows));
  fmt::print("\n{}", table);
  manifest.finish("ok");
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  if (!o.inject_fault.empty() && o.inject_fault != "sign-flip") {
    throw ArgumentError("unknown fault '" + o.inject_fault + "' (expected sign-flip)");
  }
  const std::size_t seeds = o.seeds.value_or(10);
  const std::vector<std::string> components = o.components.empty() ? gradcheck_components() : o.components;
  fault::set_sign_flip(o.inject_fault == "sign-flip");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> failed;
  fmt::print("{:<22} {:>12} {:>8} {:>6}  worst entry\n", "component", "max rel err", "entries", "kinks");
  for (const std::string& name : components) {
    const ComponentCheck c = run_gradcheck({name}, seeds, o.eps).front();
    fmt::print("{:<22} {:>12.3e} {:>8} {:>6}  {}  {}\n", c.component, c.max_error, c.entries, c.kinks,
               c.worst.empty() ? "-" : c.worst, c.ok ? "ok" : "FAIL");
    std::fflush(stdout);
    if (!c.ok) failed.push_back(c.component);
  }
  fault::set_sign_flip(false);
  fmt::print("{} components, {} seeds, eps {:g}, {:.1f}s\n", components.size(), seeds, o.eps, seconds_since(start));
  if (!failed.empty()) {
    std::string list;
    for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
    std::fflush(stdout);
    fmt::print(stderr, "gradcheck failed: {}\n", list);
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_gen_data(const Options& o) {
  const ExperimentConfig config = load_experiment(o);
  const std::string path = o.out.empty() ? config.run_id + ".ae2d" : o.out;
  const DatasetPair data = generate_dataset(config.data, config.seed);
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_dataset(path, data);
  fmt::print("wrote {}: {} {} samples ({} train, {} test), {} points, {} classes, seed {}\n", path,
             to_string(config.data.task), data.train.size() + data.test.size(), data.train.size(), data.test.size(),
             config.data.points, data.train.num_classes, config.seed);
  return kExitOk;
}

template <typename T>
void bench_kind(const ExperimentConfig& base, OperatorKind kind, std::size_t reps) {
  NetworkConfig nc = base.network;
  nc.kind = kind;
  nc.validate();
  const Network<T> net = build_network<T>(nc, derive_seed(base.seed, 10));
  DataConfig dc = base.data;
  dc.train_per_class = 1;
  dc.test_per_class = 1;
  const DatasetPair data = generate_dataset(dc, base.seed);
  const PointCloud& cloud = data.train.samples.front();
  std::vector<std::int32_t> labels = base.data.task == Task::kSeg ? cloud.labels
                                                                  : std::vector<std::int32_t>{data.train.targets[0]};
  double fwd = 0.0, bwd = 0.0;
  for (std::size_t r = 0; r <= reps; ++r) {
    Tape<T> tape;
    auto t0 = std::chrono::steady_clock::now();
    Var<T> loss = softmax_cross_entropy(forward(tape, net, cloud), labels);
    const double f = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    tape.backward(loss, Matrix<T>::Ones(1, 1));
    const double b = seconds_since(t0);
    if (r > 0) {  // first pass warms caches and the allocator
      fwd += f;
      bwd += b;
    }
  }
  fmt::print("{:<18} {:>10} {:>12.2f} {:>12.2f}\n", to_string(kind), net.params.scalar_count(), 1e3 * fwd / reps,
             1e3 * bwd / reps);
}

int cmd_bench(const Options& o) {
  ExperimentConfig config;
  if (!o.config.empty()) {
    config = load_experiment(o);
  } else {
    if (!o.precision.empty()) config.train.precision = parse_precision(o.precision);
    config.resolve();
  }
  const std::size_t reps = o.seeds.value_or(3);
  fmt::print("{} {}, {} points, {} precision, {} repetitions, 1 sample\n", to_string(config.data.task),
             stages_to_text(config.network.stages), config.data.points, to_string(config.train.precision), reps);
  fmt::print("{:<18} {:>10} {:>12} {:>12}\n", "operator", "params", "forward ms", "backward ms");
  for (OperatorKind k : {OperatorKind::kBaselineMaxPool, OperatorKind::kAe2il, OperatorKind::kSymAe2il}) {
    if (config.train.precision == Precision::kF64) {
      bench_kind<double>(config, k, reps);
    } else {
      bench_kind<float>(config, k, reps);
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"AE2IL / SymAE2IL point-cloud operators: training, evaluation and checks"};
  app.set_version_flag("--version", std::string("ae2il ") + AE2I_BUILD_ID);
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--config", o.config, "Experiment config (INI)");
    if (required) opt->required();
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Override the experiment seed"); };
  auto add_precision = [&](CLI::App* c) {
    c->add_option("--precision", o.precision, "Arithmetic precision")->check(CLI::IsMember({"f32", "f64"}));
  };

  auto* train = app.add_subcommand("train", "Train a network and write checkpoint, metrics CSV and manifest");
  add_config(train, true);
  add_seed(train);
  add_precision(train);
  train->add_option("--out", o.out, "Output directory (default runs/<run_id>)");
  train->add_option("--epochs", o.epochs, "Override the epoch count");
  train->add_flag("--dry-run", o.dry_run, "Build the network, run one batch, write nothing");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its test split");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  add_seed(eval);
  add_precision(eval);
  eval->add_option("--out", o.out, "Metrics CSV path");

  auto* ablate = app.add_subcommand("ablate", "Ablation sweep along one axis");
  add_config(ablate, true);
  add_seed(ablate);
  add_precision(ablate);
  ablate->add_option("--axis", o.axis, "ke, module, relation or operator")->required();
  ablate->add_option("--seeds", o.seeds, "Seeds per variant (default 1)");
  ablate->add_option("--epochs", o.epochs, "Override the epoch count");
  ablate->add_option("--out", o.out, "Output directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every operator gradient");
  gradcheck->add_option("--eps", o.eps, "Central-difference step (default 1e-5)");
  gradcheck->add_option("--seeds", o.seeds, "Seeds per component (default 10)");
  gradcheck->add_option("--component", o.components, "Restrict to these components");
  gradcheck->add_option("--inject-fault", o.inject_fault, "Test hook: sign-flip corrupts linear-layer gradients");

  auto* robust = app.add_subcommand("robust", "Evaluate a checkpoint under rotation, scaling and point noise");
  robust->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  add_seed(robust);
  add_precision(robust);
  robust->add_option("--out", o.out, "CSV path");

  auto* gen = app.add_subcommand("gen-data", "Generate and cache a synthetic dataset");
  add_config(gen, true);
  add_seed(gen);
  gen->add_option("--out", o.out, "Dataset file (default <run_id>.ae2d)");

  auto* bench = app.add_subcommand("bench", "Time forward and backward passes per operator");
  add_config(bench, false);
  add_seed(bench);
  add_precision(bench);
  bench->add_option("--seeds", o.seeds, "Repetitions (default 3)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (gradcheck->parsed()) return cmd_gradcheck(o);
    if (robust->parsed()) return cmd_robust(o);
    if (gen->parsed()) return cmd_gen_data(o);
    if (bench->parsed()) return cmd_bench(o);
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return kExitNumeric;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace ae2i
