#pragma once

#include <functional>
#include <string>

#include "ae2i/params.hpp"
#include "ae2i/tape.hpp"

namespace ae2i {

/// Builds a scalar (1 x 1) loss from parameters and a constant input.
using LossFn = std::function<Var<double>(Tape<double>&, const ParamSet<double>&, const Var<double>&)>;

struct GradCheckReport {
  double max_error = 0.0;
  std::string worst_param;  // empty when every gradient matched exactly
  std::size_t entries_checked = 0;
  std::size_t kinks = 0;  // entries whose one-sided slopes disagree
};

/// Compares reverse-mode gradients against central differences for every
/// parameter scalar. Error per entry is
///   |analytic - numeric| / max(1, |analytic|, |numeric|).
/// When the forward and backward one-sided slopes differ by more than 1e-4
/// (relative), a ReLU or max kink lies within eps; the entry is then scored
/// by the best of the central and one-sided estimates and counted in `kinks`.
GradCheckReport grad_check_report(const LossFn& loss, ParamSet<double>& params, const MatrixD& input, double eps);

/// Maximum relative error over all parameters.
double grad_check(const LossFn& loss, ParamSet<double>& params, const MatrixD& input, double eps);

}  // namespace ae2i
