#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ae2i/gradcheck.hpp"
#include "ae2i/networks.hpp"

namespace ae2i {

/// One gradient-check problem: a small random cloud, the parameters of one
/// component plus a linear input map, and a fixed random weighting of the
/// component output as the loss.
struct GradCheckCase {
  std::string component;
  std::shared_ptr<Network<double>> network;  // set for the micro-networks
  ParamSet<double> own;
  MatrixD input;
  LossFn loss;

  ParamSet<double>& params() { return network ? network->params : own; }
};

/// Every checked component in report order.
std::vector<std::string> gradcheck_components();

/// Throws ArgumentError for an unknown component.
GradCheckCase make_gradcheck_case(const std::string& component, std::uint64_t seed);

struct ComponentCheck {
  std::string component;
  std::size_t seeds = 0;
  std::size_t entries = 0;
  std::size_t kinks = 0;
  double max_error = 0.0;
  std::string worst;  // "param[index] seed s"
  bool ok = false;
};

/// grad_check over seeds 1..seeds for each component.
std::vector<ComponentCheck> run_gradcheck(const std::vector<std::string>& components, std::size_t seeds, double eps,
                                          double tolerance = 1e-4);

}  // namespace ae2i
