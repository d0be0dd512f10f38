#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ae2i {

/// counts[truth * num_classes + predicted].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0);

  /// Throws DataError when either id is outside [0, num_classes).
  void add(std::int32_t truth, std::int32_t predicted);
  void add(std::span<const std::int32_t> truth, std::span<const std::int32_t> predicted);
  void merge(const ConfusionMatrix& other);

  std::size_t num_classes() const { return n_; }
  std::uint64_t count(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  std::uint64_t total() const;
  std::uint64_t support(std::size_t c) const;  // ground-truth occurrences of class c

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

struct Metrics {
  double oa = 0.0;
  double macc = 0.0;
  double miou = 0.0;
  std::vector<double> iou;  // per class; NaN for classes absent from ground truth
  ConfusionMatrix confusion;
};

/// oA = trace / total; mAcc and mIoU average over classes present in ground truth.
Metrics compute_metrics(const ConfusionMatrix& cm);

}  // namespace ae2i
