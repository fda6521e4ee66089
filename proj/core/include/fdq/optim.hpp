#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdq/autodiff.hpp"

namespace fdq {

enum class OptimAlgorithm { sgd, adam };

OptimAlgorithm parse_optim_algorithm(const std::string& name);
std::string to_string(OptimAlgorithm algorithm);

struct OptimConfig {
  OptimAlgorithm algorithm = OptimAlgorithm::adam;
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  // Global-norm clip applied before every update; <= 0 disables.
  float clip_norm = 5.0f;
};

struct OptimState {
  OptimConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;
};

class Optimizer {
 public:
  explicit Optimizer(OptimConfig config = {});

  // Applies one update from the gradients stored in `params`, then zeroes
  // them. Returns the gradient norm before clipping. Throws DivergenceError
  // (leaving parameters untouched) if any gradient is not finite.
  double step(ParameterSet& params);

  const OptimState& state() const { return state_; }

 private:
  OptimState state_;
};

double global_grad_norm(const ParameterSet& params);

}  // namespace fdq
