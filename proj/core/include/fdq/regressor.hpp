#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fdq/checkpoint.hpp"
#include "fdq/optim.hpp"

namespace fdq {

// tanh(W1 x + b1) -> tanh(W2 · + b2) -> w3 · + b3, scalar output.
struct MlpLayout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0;
};

template <typename T>
MlpLayout declare_mlp(BasicParameterSet<T>& params, const std::string& prefix, std::size_t input, std::size_t width);

// Input [in] gives [1]; input [batch, in] gives [batch, 1].
template <typename T>
BasicVar<T> mlp_forward(std::span<const BasicVar<T>> p, const MlpLayout& layout, const BasicVar<T>& input);

// Predictions are made in a normalized label space: output = raw·scale + mean.
struct LabelScale {
  double mean = 0.0;
  double scale = 1.0;

  static LabelScale fit(std::span<const double> labels);
  double normalize(double y) const { return (y - mean) / scale; }
  double denormalize(double raw) const { return raw * scale + mean; }
};

struct RegressionSchedule {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  OptimConfig optim;
  std::uint64_t seed = 0;
  // Epochs without dev improvement before stopping; the best parameters are kept.
  std::size_t patience = 8;
};

struct RegressionReport {
  double mse = 0.0;           // dev MSE of the trained estimator
  double baseline_mse = 0.0;  // dev MSE of predicting the training-label mean
  double train_mse = 0.0;
  std::size_t epochs = 0;
};

// Builds the summed squared error (normalized labels) of a batch of training
// example indices on the tape.
using BatchLoss = std::function<Var(Tape&, std::span<const std::size_t>)>;

// Minibatch loop shared by all regression heads. dev_mse evaluates the
// current parameters; the best epoch's parameters are restored at the end.
// Returns the number of epochs run.
std::size_t fit_regression(ParameterSet& params, std::size_t n_train, const BatchLoss& batch_loss,
                           const std::function<double()>& dev_mse, const RegressionSchedule& schedule,
                           double* best_dev = nullptr);

double mean_squared_error(std::span<const double> predictions, std::span<const double> labels);
double constant_baseline_mse(std::span<const double> train_labels, std::span<const double> dev_labels);

// Scalar regressor over fixed-width feature vectors.
class Regressor {
 public:
  Regressor(std::size_t input, std::size_t width, std::uint64_t seed);

  std::size_t input_size() const { return input_; }
  std::size_t width() const { return width_; }
  const LabelScale& labels() const { return labels_; }
  void set_labels(const LabelScale& s) { labels_ = s; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const MlpLayout& layout() const { return layout_; }

  // Throws DimensionError unless features has shape [input].
  double predict(const Tensor& features) const;

  RegressionReport fit(const std::vector<Tensor>& x, const std::vector<double>& y, const std::vector<Tensor>& dev_x,
                       const std::vector<double>& dev_y, const RegressionSchedule& schedule);

  void save_to(Checkpoint& ckpt, const std::string& prefix) const;
  static Regressor load_from(const Checkpoint& ckpt, const std::string& prefix);

 private:
  std::size_t input_, width_;
  ParameterSet params_;
  MlpLayout layout_;
  std::vector<Var> borrowed_;
  LabelScale labels_;
};

}  // namespace fdq
