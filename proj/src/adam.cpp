#include "spn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace spn {

Adam::Adam(AdamConfig config, std::vector<std::string> names) : config_(config), names_(std::move(names)) {
  if (!(config_.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
}

void Adam::step(ParameterSet& params, const GradientMap& grads) {
  for (const auto& name : names_) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("adam: missing gradient for " + name);
    if (it->second.shape() != params.get(name).value.shape())
      throw std::invalid_argument("adam: gradient shape " + it->second.shape_string() + " != parameter shape " +
                                  params.get(name).value.shape_string() + " for " + name);
  }

  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& name : names_) {
    Tensor& w = params.get(name).value;
    const Tensor& g = grads.at(name);
    auto [mi, m_new] = m_.try_emplace(name, w.shape(), 0.0);
    auto [vi, v_new] = v_.try_emplace(name, w.shape(), 0.0);
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace spn
