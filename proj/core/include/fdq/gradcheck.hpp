#pragma once

#include <functional>
#include <span>
#include <string>

#include "fdq/autodiff.hpp"

namespace fdq {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst;  // name of the parameter with the largest error
};

template <typename T>
using BasicLossBuilder = std::function<BasicVar<T>(BasicTape<T>&)>;

// Compares reverse-mode gradients against central differences. For each
// parameter tensor the error is ‖g_ad − g_fd‖ / (‖g_ad‖ + ‖g_fd‖ + 1e-8);
// the report carries the maximum over tensors. Use T = double for tight
// tolerances; float32 differences are dominated by rounding.
template <typename T>
GradCheckReport fd_check(const BasicLossBuilder<T>& build, std::span<BasicParameter<T>* const> params,
                         double epsilon = 1e-3);

}  // namespace fdq
