#include "ae2i/metrics.hpp"

#include <limits>
#include <string>

#include "ae2i/errors.hpp"

namespace ae2i {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {}

void ConfusionMatrix::add(std::int32_t truth, std::int32_t predicted) {
  const auto n = static_cast<std::int32_t>(n_);
  if (truth < 0 || truth >= n) throw DataError("class id " + std::to_string(truth) + " out of range");
  if (predicted < 0 || predicted >= n) throw DataError("predicted class " + std::to_string(predicted) + " out of range");
  ++counts_[static_cast<std::size_t>(truth) * n_ + static_cast<std::size_t>(predicted)];
}

void ConfusionMatrix::add(std::span<const std::int32_t> truth, std::span<const std::int32_t> predicted) {
  if (truth.size() != predicted.size()) throw DimensionError("label and prediction counts differ");
  for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], predicted[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw DimensionError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::support(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += count(c, p);
  return s;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.confusion = cm;
  const std::size_t n = cm.num_classes();
  m.iou.assign(n, std::numeric_limits<double>::quiet_NaN());
  const std::uint64_t total = cm.total();
  if (total == 0) return m;
  std::uint64_t trace = 0;
  double acc_sum = 0.0, iou_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const std::uint64_t tp = cm.count(c, c);
    trace += tp;
    const std::uint64_t support = cm.support(c);
    if (support == 0) continue;
    std::uint64_t predicted = 0;
    for (std::size_t t = 0; t < n; ++t) predicted += cm.count(t, c);
    const double union_size = static_cast<double>(support + predicted - tp);
    m.iou[c] = static_cast<double>(tp) / union_size;
    acc_sum += static_cast<double>(tp) / static_cast<double>(support);
    iou_sum += m.iou[c];
    ++present;
  }
  m.oa = static_cast<double>(trace) / static_cast<double>(total);
  m.macc = acc_sum / static_cast<double>(present);
  m.miou = iou_sum / static_cast<double>(present);
  return m;
}

}  // namespace ae2i
