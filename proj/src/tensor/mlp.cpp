#include "ae2i/mlp.hpp"

#include <string>

namespace ae2i {

namespace {

template <typename T>
void check_input(const MlpRef& mlp, Eigen::Index cols) {
  if (!mlp.valid()) throw StateError("mlp reference is empty");
  if (static_cast<std::size_t>(cols) != mlp.in_width()) {
    throw DimensionError("mlp '" + mlp.name + "': input width " + std::to_string(cols) + " != " +
                         std::to_string(mlp.in_width()));
  }
}

template <typename T>
Var<T> run_layers(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mlp, Var<T> x, std::size_t first) {
  for (std::size_t l = first; l < mlp.layers(); ++l) {
    if (l > 0) x = relu(x);
    Var<T> w = tape.parameter(mlp.weight_slots[l], params.value(mlp.weight_slots[l]));
    Var<T> b = tape.parameter(mlp.bias_slots[l], params.value(mlp.bias_slots[l]));
    x = linear(x, w, b);
  }
  return x;
}

}  // namespace

template <typename T>
Var<T> mlp_forward(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mlp, const Var<T>& input) {
  check_input<T>(mlp, input.cols());
  return run_layers(tape, params, mlp, input, 0);
}

template <typename T>
Var<T> mlp_forward_pairdiff(Tape<T>& tape, const ParamSet<T>& params, const MlpRef& mlp,
                            const Var<T>& points, SharedIndex from, SharedIndex to) {
  check_input<T>(mlp, points.cols());
  if (from->size() != to->size()) throw DimensionError("mlp_forward_pairdiff: index lists differ in length");
  Var<T> w = tape.parameter(mlp.weight_slots[0], params.value(mlp.weight_slots[0]));
  Var<T> b = tape.parameter(mlp.bias_slots[0], params.value(mlp.bias_slots[0]));
  Var<T> projected = linear(points, w, Var<T>());
  Var<T> diff = sub(gather_rows(projected, to), gather_rows(projected, std::move(from)));
  Var<T> x = add_bias(diff, b);
  return run_layers(tape, params, mlp, x, 1);
}

template Var<float> mlp_forward<float>(Tape<float>&, const ParamSet<float>&, const MlpRef&, const Var<float>&);
template Var<double> mlp_forward<double>(Tape<double>&, const ParamSet<double>&, const MlpRef&,
                                         const Var<double>&);
template Var<float> mlp_forward_pairdiff<float>(Tape<float>&, const ParamSet<float>&, const MlpRef&,
                                                const Var<float>&, SharedIndex, SharedIndex);
template Var<double> mlp_forward_pairdiff<double>(Tape<double>&, const ParamSet<double>&, const MlpRef&,
                                                  const Var<double>&, SharedIndex, SharedIndex);

}  // namespace ae2i
