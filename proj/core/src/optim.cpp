#include "fdq/optim.hpp"

#include <cmath>

#include "fdq/error.hpp"

namespace fdq {

OptimAlgorithm parse_optim_algorithm(const std::string& name) {
  if (name == "sgd") return OptimAlgorithm::sgd;
  if (name == "adam") return OptimAlgorithm::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimAlgorithm algorithm) {
  return algorithm == OptimAlgorithm::sgd ? "sgd" : "adam";
}

Optimizer::Optimizer(OptimConfig config) { state_.config = config; }

double global_grad_norm(const ParameterSet& params) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (float g : params[i].grad.data()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double Optimizer::step(ParameterSet& params) {
  const auto& cfg = state_.config;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].grad.all_finite()) {
      throw DivergenceError("non-finite gradient in parameter " + params[i].name);
    }
  }
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw DivergenceError("gradient norm overflowed");
  float factor = 1.0f;
  if (cfg.clip_norm > 0.0f && norm > cfg.clip_norm) factor = static_cast<float>(cfg.clip_norm / norm);

  if (cfg.algorithm == OptimAlgorithm::adam && state_.first_moment.size() != params.size()) {
    state_.first_moment.clear();
    state_.second_moment.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      state_.first_moment.emplace_back(params[i].value.shape());
      state_.second_moment.emplace_back(params[i].value.shape());
    }
  }
  ++state_.step;

  if (cfg.algorithm == OptimAlgorithm::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto v = params[i].value.data();
      auto g = params[i].grad.data();
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= cfg.learning_rate * (factor * g[k]);
    }
  } else {
    const double t = static_cast<double>(state_.step);
    const float c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
    const float c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto v = params[i].value.data();
      auto g = params[i].grad.data();
      auto m = state_.first_moment[i].data();
      auto s = state_.second_moment[i].data();
      for (std::size_t k = 0; k < v.size(); ++k) {
        const float gk = factor * g[k];
        m[k] = cfg.beta1 * m[k] + (1.0f - cfg.beta1) * gk;
        s[k] = cfg.beta2 * s[k] + (1.0f - cfg.beta2) * gk * gk;
        const float mhat = m[k] / c1;
        const float shat = s[k] / c2;
        v[k] -= cfg.learning_rate * mhat / (std::sqrt(shat) + cfg.epsilon);
      }
    }
  }
  params.zero_grad();
  return norm;
}

}  // namespace fdq
