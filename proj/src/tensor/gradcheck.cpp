#include "ae2i/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ae2i/errors.hpp"

namespace ae2i {

namespace {

constexpr double kKinkThreshold = 1e-4;

double evaluate(const LossFn& loss, const ParamSet<double>& params, const MatrixD& input) {
  Tape<double> tape;
  Var<double> x = tape.constant(input);
  Var<double> out = loss(tape, params, x);
  if (out.rows() != 1 || out.cols() != 1) throw DimensionError("grad_check: loss must be 1x1");
  const double v = out.value()(0, 0);
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckReport grad_check_report(const LossFn& loss, ParamSet<double>& params, const MatrixD& input, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ArgumentError("grad_check: eps must lie in (0, 1e-2]");

  std::vector<MatrixD> analytic = params.zeros_like();
  {
    Tape<double> tape;
    Var<double> x = tape.constant(input);
    Var<double> out = loss(tape, params, x);
    if (out.rows() != 1 || out.cols() != 1) throw DimensionError("grad_check: loss must be 1x1");
    if (!std::isfinite(out.value()(0, 0))) throw NumericError("grad_check: non-finite loss");
    tape.backward(out, MatrixD::Ones(1, 1));
    tape.collect_param_grads(analytic);
  }

  const double mid = evaluate(loss, params, input);
  GradCheckReport report;
  for (std::size_t slot = 0; slot < params.size(); ++slot) {
    MatrixD& value = params.value(slot);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + eps;
      const double up = evaluate(loss, params, input);
      value.data()[i] = saved - eps;
      const double down = evaluate(loss, params, input);
      value.data()[i] = saved;

      const double a = analytic[slot].data()[i];
      if (!std::isfinite(a)) throw NumericError("grad_check: non-finite analytic gradient");
      const auto rel = [](double x, double y) { return std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}); };
      double err = rel(a, (up - down) / (2.0 * eps));
      const double ahead = (up - mid) / eps;
      const double behind = (mid - down) / eps;
      if (rel(ahead, behind) > kKinkThreshold) {
        ++report.kinks;
        err = std::min({err, rel(a, ahead), rel(a, behind)});
      }
      ++report.entries_checked;
      if (err > report.max_error) {
        report.max_error = err;
        report.worst_param = params.name(slot) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

double grad_check(const LossFn& loss, ParamSet<double>& params, const MatrixD& input, double eps) {
  return grad_check_report(loss, params, input, eps).max_error;
}

}  // namespace ae2i
