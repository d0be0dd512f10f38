#include "ae2i/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "ae2i/errors.hpp"
#include "ae2i/ops.hpp"

namespace ae2i {

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("AE2IL_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(n, std::max<std::size_t>(threads, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
  const double e = static_cast<double>(epoch);
  const double total = static_cast<double>(config.epochs);
  if (config.schedule == Schedule::kCosine) {
    return config.lr_min + 0.5 * (config.lr - config.lr_min) * (1.0 + std::cos(std::numbers::pi * e / total));
  }
  double lr = config.lr;
  if (e >= 0.6 * total) lr *= 0.1;
  if (e >= 0.8 * total) lr *= 0.1;
  return lr;
}

namespace {

const std::vector<std::int32_t>& sample_labels(const Dataset& data, std::size_t i,
                                                std::vector<std::int32_t>& scratch) {
  if (data.task == Task::kSeg) {
    if (data.samples[i].labels.size() != data.samples[i].size()) {
      throw DataError("segmentation sample " + std::to_string(i) + " has no per-point labels");
    }
    return data.samples[i].labels;
  }
  if (i >= data.targets.size()) throw DataError("classification sample " + std::to_string(i) + " has no target");
  scratch.assign(1, data.targets[i]);
  return scratch;
}

template <typename T>
std::vector<std::int32_t> argmax_rows(const Matrix<T>& logits) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(best);
  }
  return out;
}

}  // namespace

template <typename T>
std::vector<std::int32_t> predict(const Network<T>& net, const PointCloud& cloud) {
  Tape<T> tape;
  return argmax_rows<T>(forward(tape, net, cloud).value());
}

template <typename T>
Evaluation evaluate(const Network<T>& net, const Dataset& data, std::size_t threads) {
  const std::size_t n = data.size();
  std::vector<std::vector<std::int32_t>> preds(n), labels(n);
  std::vector<double> losses(n, 0.0);
  parallel_for(n, resolve_threads(threads), [&](std::size_t i) {
    std::vector<std::int32_t> scratch;
    labels[i] = sample_labels(data, i, scratch);
    Tape<T> tape;
    Var<T> logits = forward(tape, net, data.samples[i]);
    preds[i] = argmax_rows<T>(logits.value());
    for (std::int32_t y : labels[i]) {
      if (y < 0 || static_cast<std::size_t>(y) >= data.num_classes) {
        throw DataError("class id " + std::to_string(y) + " out of range");
      }
    }
    losses[i] = static_cast<double>(softmax_cross_entropy(logits, labels[i]).value()(0, 0));
  });
  ConfusionMatrix cm(data.num_classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cm.add(labels[i], preds[i]);
    loss += losses[i];
  }
  Evaluation e;
  e.metrics = compute_metrics(cm);
  e.loss = n > 0 ? loss / static_cast<double>(n) : 0.0;
  return e;
}

template <typename T>
Trainer<T>::Trainer(Network<T>& net, TrainConfig config, std::uint64_t seed, std::size_t threads)
    : net_(net), config_(std::move(config)), seed_(seed), threads_(resolve_threads(threads)), rng_(seed) {
  config_.validate();
  velocity_ = net_.params.zeros_like();
}

template <typename T>
double Trainer<T>::step(const Dataset& data, std::span<const std::size_t> batch, double lr, ConfusionMatrix* cm) {
  const std::size_t b = batch.size();
  if (b == 0) throw ArgumentError("empty batch");
  const AugmentConfig aug = AugmentConfig::for_task(data.task);
  std::vector<std::vector<Matrix<T>>> grads(b);
  std::vector<double> losses(b);
  std::vector<std::vector<std::int32_t>> preds(b), labels(b);
  const T seed_grad = T(1) / static_cast<T>(b);
  parallel_for(b, threads_, [&](std::size_t j) {
    const std::size_t i = batch[j];
    std::vector<std::int32_t> scratch;
    labels[j] = sample_labels(data, i, scratch);
    Tape<T> tape;
    Var<T> logits;
    if (config_.augment) {
      Rng sample_rng(derive_seed(derive_seed(seed_, 1000 + epoch_), i));
      logits = forward(tape, net_, augment(data.samples[i], aug, sample_rng));
    } else {
      logits = forward(tape, net_, data.samples[i]);
    }
    preds[j] = argmax_rows<T>(logits.value());
    Var<T> loss = softmax_cross_entropy(logits, labels[j]);
    losses[j] = static_cast<double>(loss.value()(0, 0));
    tape.backward(loss, Matrix<T>::Constant(1, 1, seed_grad));
    grads[j] = net_.params.zeros_like();
    tape.collect_param_grads(grads[j]);
  });

  double mean_loss = 0.0;
  for (std::size_t j = 0; j < b; ++j) mean_loss += losses[j];
  mean_loss /= static_cast<double>(b);
  if (!std::isfinite(mean_loss)) {
    throw NumericError("non-finite training loss in epoch " + std::to_string(epoch_ + 1),
                       static_cast<int>(epoch_ + 1));
  }
  if (cm) {
    for (std::size_t j = 0; j < b; ++j) cm->add(labels[j], preds[j]);
  }

  ParamSet<T>& params = net_.params;
  params.zero_grad();
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t s = 0; s < params.size(); ++s) params.grad(s) += grads[j][s];
  }
  if (config_.grad_clip > 0.0) {
    double sq = 0.0;
    for (std::size_t s = 0; s < params.size(); ++s) sq += static_cast<double>(params.grad(s).squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > config_.grad_clip) {
      const T scale = static_cast<T>(config_.grad_clip / norm);
      for (std::size_t s = 0; s < params.size(); ++s) params.grad(s) *= scale;
    }
  }
  const T m = static_cast<T>(config_.momentum);
  const T wd = static_cast<T>(config_.weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t s = 0; s < params.size(); ++s) {
    Matrix<T>& theta = params.value(s);
    Matrix<T>& v = velocity_[s];
    v = m * v + (params.grad(s) + wd * theta);
    theta -= rate * v;
  }
  ++steps_;
  return mean_loss;
}

template <typename T>
EpochRecord Trainer<T>::train_epoch(const Dataset& train) {
  if (train.size() == 0) throw DataError("training set is empty");
  const double lr = learning_rate(config_, epoch_);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.index(i)]);
  ConfusionMatrix cm(train.num_classes);
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t len = std::min(config_.batch_size, order.size() - start);
    const std::span<const std::size_t> batch(order.data() + start, len);
    loss_sum += step(train, batch, lr, &cm) * static_cast<double>(len);
  }
  ++epoch_;
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.lr = lr;
  rec.loss = loss_sum / static_cast<double>(train.size());
  rec.train = compute_metrics(cm);
  return rec;
}

template <typename T>
void Trainer<T>::store(Checkpoint& ckpt) const {
  ckpt.optimizer.momentum.clear();
  for (const auto& v : velocity_) ckpt.optimizer.momentum.push_back(v.template cast<double>());
  ckpt.optimizer.step = steps_;
  ckpt.epoch = static_cast<std::uint32_t>(epoch_);
  ckpt.rng_state = rng_.state();
}

template <typename T>
void Trainer<T>::restore(const Checkpoint& ckpt) {
  if (!ckpt.optimizer.momentum.empty()) {
    if (ckpt.optimizer.momentum.size() != velocity_.size()) {
      throw FormatError("checkpoint optimizer state does not match the network");
    }
    for (std::size_t s = 0; s < velocity_.size(); ++s) {
      const MatrixD& m = ckpt.optimizer.momentum[s];
      if (m.rows() != velocity_[s].rows() || m.cols() != velocity_[s].cols()) {
        throw FormatError("checkpoint momentum shape mismatch at slot " + std::to_string(s));
      }
      velocity_[s] = m.cast<T>();
    }
  }
  steps_ = ckpt.optimizer.step;
  epoch_ = ckpt.epoch;
  if (!ckpt.rng_state.empty()) rng_.set_state(ckpt.rng_state);
}

template <typename T>
std::vector<EpochRecord> train(Network<T>& net, const Dataset& train_set, const Dataset* test, const TrainConfig& config,
                               std::uint64_t seed, std::size_t threads, const EpochCallback& on_epoch) {
  Trainer<T> trainer(net, config, seed, threads);
  std::vector<EpochRecord> history;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochRecord rec = trainer.train_epoch(train_set);
    const bool last = e + 1 == config.epochs;
    if (test && (last || (config.eval_every > 0 && rec.epoch % config.eval_every == 0))) {
      rec.has_test = true;
      rec.test = evaluate(net, *test, threads);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(rec);
    history.push_back(std::move(rec));
  }
  return history;
}

namespace {

template <typename T>
RunResult run_typed(const ExperimentConfig& config, const DatasetPair& data, std::size_t threads,
                    const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  Network<T> net = build_network<T>(config.network, derive_seed(config.seed, 10));
  r.param_count = net.params.scalar_count();
  Trainer<T> trainer(net, config.train, derive_seed(config.seed, 11), threads);
  for (std::size_t e = 0; e < config.train.epochs; ++e) {
    EpochRecord rec = trainer.train_epoch(data.train);
    const bool last = e + 1 == config.train.epochs;
    if (last || (config.train.eval_every > 0 && rec.epoch % config.train.eval_every == 0)) {
      rec.has_test = true;
      rec.test = evaluate(net, data.test, threads);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(rec);
    r.history.push_back(std::move(rec));
  }
  r.test = r.history.back().test;
  r.train_clean = evaluate(net, data.train, threads);
  r.checkpoint.config_text = to_text(config);
  store_params(net.params, r.checkpoint);
  trainer.store(r.checkpoint);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const DatasetPair* data, std::size_t threads,
                         const EpochCallback& on_epoch) {
  ExperimentConfig resolved = config;
  resolved.resolve();
  DatasetPair generated;
  if (!data) {
    generated = generate_dataset(resolved.data, resolved.seed);
    data = &generated;
  }
  if (resolved.train.precision == Precision::kF64) return run_typed<double>(resolved, *data, threads, on_epoch);
  return run_typed<float>(resolved, *data, threads, on_epoch);
}

template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt, ExperimentConfig* config_out) {
  ExperimentConfig config;
  try {
    config = parse_config(ckpt.config_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  Network<T> net = build_network<T>(config.network, 0);
  restore_params(ckpt, net.params);
  if (config_out) *config_out = config;
  return net;
}

// ---------------------------------------------------------------------------
// Robustness

std::vector<Perturbation> all_perturbations() {
  return {Perturbation::kNone,    Perturbation::kRotate90, Perturbation::kRotate180,
          Perturbation::kRotate270, Perturbation::kScale08, Perturbation::kScale12,
          Perturbation::kNoiseHalfPercent, Perturbation::kNoiseOnePercent};
}

std::string to_string(Perturbation p) {
  switch (p) {
    case Perturbation::kNone: return "none";
    case Perturbation::kRotate90: return "rotate90";
    case Perturbation::kRotate180: return "rotate180";
    case Perturbation::kRotate270: return "rotate270";
    case Perturbation::kScale08: return "scale0.8";
    case Perturbation::kScale12: return "scale1.2";
    case Perturbation::kNoiseHalfPercent: return "noise0.5%";
    case Perturbation::kNoiseOnePercent: return "noise1%";
  }
  return "unknown";
}

Dataset perturb(const Dataset& data, Perturbation p, std::uint64_t seed, double noise_sigma) {
  Dataset out = data;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    PointCloud& c = out.samples[i];
    switch (p) {
      case Perturbation::kNone: break;
      case Perturbation::kRotate90: c = rotate_vertical(c, 90); break;
      case Perturbation::kRotate180: c = rotate_vertical(c, 180); break;
      case Perturbation::kRotate270: c = rotate_vertical(c, 270); break;
      case Perturbation::kScale08: c = scale_cloud(c, 0.8); break;
      case Perturbation::kScale12: c = scale_cloud(c, 1.2); break;
      case Perturbation::kNoiseHalfPercent:
      case Perturbation::kNoiseOnePercent: {
        Rng rng(derive_seed(seed, i));
        c = add_point_noise(c, p == Perturbation::kNoiseHalfPercent ? 0.005 : 0.01, noise_sigma, rng);
        break;
      }
    }
  }
  return out;
}

template <typename T>
std::vector<RobustRow> robustness_eval(const Network<T>& net, const Dataset& data, std::uint64_t seed,
                                       std::size_t threads) {
  std::vector<RobustRow> rows;
  for (Perturbation p : all_perturbations()) {
    rows.push_back({p, evaluate(net, p == Perturbation::kNone ? data : perturb(data, p, seed), threads)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Ablation

AblationAxis parse_ablation_axis(const std::string& text) {
  if (text == "ke") return AblationAxis::kKe;
  if (text == "module") return AblationAxis::kModule;
  if (text == "relation") return AblationAxis::kRelation;
  if (text == "operator") return AblationAxis::kOperator;
  throw ConfigError("unknown ablation axis '" + text + "' (expected ke, module, relation or operator)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kKe: return "ke";
    case AblationAxis::kModule: return "module";
    case AblationAxis::kRelation: return "relation";
    case AblationAxis::kOperator: return "operator";
  }
  return "unknown";
}

std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base, AblationAxis axis) {
  std::vector<AblationVariant> out;
  auto add = [&](std::string label, auto&& edit) {
    ExperimentConfig c = base;
    edit(c);
    c.run_id = base.run_id + "-" + label;
    c.resolve();
    out.push_back({std::move(label), std::move(c)});
  };
  switch (axis) {
    case AblationAxis::kKe:
      for (std::size_t ke : {2, 3, 4, 5}) {
        add("ke=" + std::to_string(ke), [ke](ExperimentConfig& c) {
          for (auto& s : c.network.stages) s.k_e = ke;
        });
      }
      break;
    case AblationAxis::kModule:
      for (OperatorKind k : {OperatorKind::kAfaStar, OperatorKind::kAe2ilStar, OperatorKind::kSymAe2ilStar}) {
        add(to_string(k), [k](ExperimentConfig& c) { c.network.kind = k; });
      }
      break;
    case AblationAxis::kRelation:
      for (const char* m : {"df", "df+ds", "df+dc", "df+ds+dc"}) {
        add(m, [m](ExperimentConfig& c) { c.network.mask = RelationMask::parse(m); });
      }
      break;
    case AblationAxis::kOperator:
      for (OperatorKind k : {OperatorKind::kBaselineMaxPool, OperatorKind::kAe2il, OperatorKind::kSymAe2il}) {
        add(to_string(k), [k](ExperimentConfig& c) { c.network.kind = k; });
      }
      break;
  }
  return out;
}

std::vector<AblationRow> ablation_sweep(const ExperimentConfig& base, AblationAxis axis, std::size_t seeds,
                                        std::size_t threads, const AblationCallback& on_row) {
  if (seeds == 0) throw ArgumentError("ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (std::size_t s = 0; s < seeds; ++s) {
    ExperimentConfig seeded = base;
    seeded.seed = base.seed + s;
    seeded.resolve();
    const DatasetPair data = generate_dataset(seeded.data, seeded.seed);
    for (const AblationVariant& v : ablation_variants(seeded, axis)) {
      RunResult r = run_experiment(v.config, &data, threads);
      AblationRow row;
      row.label = v.label;
      row.seed = seeded.seed;
      row.param_count = r.param_count;
      row.train_clean = r.train_clean;
      row.test = r.test;
      row.seconds = r.seconds;
      if (on_row) on_row(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string real(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw FormatError("bad number '" + s + "' in metrics CSV");
  return v;
}

constexpr const char* kMetricsHeader = "run_id,config_hash,epoch,split,oA,mAcc,mIoU,loss,wall_seconds";

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.run_id, r.config_hash, r.epoch, r.split, real(r.oa),
                       real(r.macc), real(r.miou), real(r.loss), real(r.wall_seconds));
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) throw FormatError("metrics CSV has an unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw FormatError("metrics CSV row has " + std::to_string(f.size()) + " fields");
    MetricsRow r;
    r.run_id = f[0];
    r.config_hash = f[1];
    r.epoch = static_cast<std::size_t>(parse_real(f[2]));
    r.split = f[3];
    r.oa = parse_real(f[4]);
    r.macc = parse_real(f[5]);
    r.miou = parse_real(f[6]);
    r.loss = parse_real(f[7]);
    r.wall_seconds = parse_real(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricsRow> history_rows(const std::string& run_id, const std::string& hash,
                                     const std::vector<EpochRecord>& history) {
  std::vector<MetricsRow> rows;
  for (const EpochRecord& e : history) {
    rows.push_back({run_id, hash, e.epoch, "train", e.train.oa, e.train.macc, e.train.miou, e.loss, e.wall_seconds});
    if (e.has_test) {
      const Metrics& m = e.test.metrics;
      rows.push_back({run_id, hash, e.epoch, "test", m.oa, m.macc, m.miou, e.test.loss, e.wall_seconds});
    }
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const AblationRow*>> by_label;
  for (const AblationRow& r : rows) {
    if (!by_label.count(r.label)) order.push_back(r.label);
    by_label[r.label].push_back(&r);
  }
  std::string out = fmt::format("{:<18} {:>6} {:>10} {:>8} {:>8} {:>8} {:>9}\n", "variant", "seeds", "params",
                                "oA", "mAcc", "mIoU", "train oA");
  for (const std::string& label : order) {
    const auto& group = by_label[label];
    double oa = 0, macc = 0, miou = 0, train_oa = 0;
    for (const AblationRow* r : group) {
      oa += r->test.metrics.oa;
      macc += r->test.metrics.macc;
      miou += r->test.metrics.miou;
      train_oa += r->train_clean.metrics.oa;
    }
    const double n = static_cast<double>(group.size());
    out += fmt::format("{:<18} {:>6} {:>10} {:>8.2f} {:>8.2f} {:>8.2f} {:>9.2f}\n", label, group.size(),
                       group.front()->param_count, 100 * oa / n, 100 * macc / n, 100 * miou / n, 100 * train_oa / n);
  }
  return out;
}

std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows) {
  std::string out = "axis,variant,seed,params,test_oA,test_mAcc,test_mIoU,test_loss,train_oA,wall_seconds\n";
  for (const AblationRow& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", to_string(axis), r.label, r.seed, r.param_count,
                       real(r.test.metrics.oa), real(r.test.metrics.macc), real(r.test.metrics.miou),
                       real(r.test.loss), real(r.train_clean.metrics.oa), real(r.seconds));
  }
  return out;
}

#define AE2I_INSTANTIATE_TRAINING(T)                                                                          \
  template std::vector<std::int32_t> predict<T>(const Network<T>&, const PointCloud&);                        \
  template Evaluation evaluate<T>(const Network<T>&, const Dataset&, std::size_t);                            \
  template class Trainer<T>;                                                                                  \
  template std::vector<EpochRecord> train<T>(Network<T>&, const Dataset&, const Dataset*, const TrainConfig&, \
                                             std::uint64_t, std::size_t, const EpochCallback&);               \
  template Network<T> network_from_checkpoint<T>(const Checkpoint&, ExperimentConfig*);                       \
  template std::vector<RobustRow> robustness_eval<T>(const Network<T>&, const Dataset&, std::uint64_t, std::size_t);

AE2I_INSTANTIATE_TRAINING(float)
AE2I_INSTANTIATE_TRAINING(double)

}  // namespace ae2i
