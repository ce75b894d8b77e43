#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "spn/tensor.hpp"

namespace spn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a named subset of a ParameterSet.
class Adam {
 public:
  Adam(AdamConfig config, std::vector<std::string> names);

  /// One update. grads must hold a same-shaped entry for every managed parameter.
  void step(ParameterSet& params, const GradientMap& grads);

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  AdamConfig config_;
  std::vector<std::string> names_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace spn
