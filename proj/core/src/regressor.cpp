#include "fdq/regressor.hpp"

#include <cmath>
#include <limits>

#include "fdq/error.hpp"
#include "fdq/ops.hpp"

namespace fdq {

template <typename T>
MlpLayout declare_mlp(BasicParameterSet<T>& params, const std::string& prefix, std::size_t input, std::size_t width) {
  auto add = [&](const std::string& name, Shape shape) {
    params.add(prefix + name, std::move(shape));
    return params.size() - 1;
  };
  MlpLayout l;
  l.w1 = add("w1", {width, input});
  l.b1 = add("b1", {width});
  l.w2 = add("w2", {width, width});
  l.b2 = add("b2", {width});
  l.w3 = add("w3", {1, width});
  l.b3 = add("b3", {1});
  return l;
}

template <typename T>
BasicVar<T> mlp_forward(std::span<const BasicVar<T>> p, const MlpLayout& l, const BasicVar<T>& input) {
  BasicVar<T> a = tanh(affine(p[l.w1], p[l.b1], input));
  BasicVar<T> b = tanh(affine(p[l.w2], p[l.b2], a));
  return affine(p[l.w3], p[l.b3], b);
}

template MlpLayout declare_mlp<float>(BasicParameterSet<float>&, const std::string&, std::size_t, std::size_t);
template MlpLayout declare_mlp<double>(BasicParameterSet<double>&, const std::string&, std::size_t, std::size_t);
template BasicVar<float> mlp_forward<float>(std::span<const BasicVar<float>>, const MlpLayout&, const BasicVar<float>&);
template BasicVar<double> mlp_forward<double>(std::span<const BasicVar<double>>, const MlpLayout&,
                                              const BasicVar<double>&);

LabelScale LabelScale::fit(std::span<const double> labels) {
  LabelScale s;
  if (labels.empty()) return s;
  double sum = 0.0;
  for (double y : labels) sum += y;
  s.mean = sum / static_cast<double>(labels.size());
  double var = 0.0;
  for (double y : labels) var += (y - s.mean) * (y - s.mean);
  var /= static_cast<double>(labels.size());
  s.scale = var > 1e-12 ? std::sqrt(var) : 1.0;
  // Checkpoints hold f32, so keep exactly what a reload would see.
  s.mean = static_cast<float>(s.mean);
  s.scale = static_cast<float>(s.scale);
  return s;
}

double mean_squared_error(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw ContractError("mean_squared_error: size mismatch");
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
  return total / static_cast<double>(labels.size());
}

double constant_baseline_mse(std::span<const double> train_labels, std::span<const double> dev_labels) {
  const double mean = LabelScale::fit(train_labels).mean;
  std::vector<double> constant(dev_labels.size(), mean);
  return mean_squared_error(constant, dev_labels);
}

std::size_t fit_regression(ParameterSet& params, std::size_t n_train, const BatchLoss& batch_loss,
                           const std::function<double()>& dev_mse, const RegressionSchedule& schedule,
                           double* best_dev) {
  if (n_train == 0) throw ContractError("regression: no training examples");
  if (schedule.batch_size < 1 || schedule.epochs < 1) throw ConfigError("regression: bad schedule");
  Optimizer optimizer(schedule.optim);
  Tape tape;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values;
  std::size_t since_best = 0, epoch = 0;
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

  while (epoch < schedule.epochs) {
    ++epoch;
    Rng rng(derive_seed(schedule.seed, "regression", epoch));
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < n_train; begin += schedule.batch_size) {
      const std::size_t end = std::min(n_train, begin + schedule.batch_size);
      params.zero_grad();
      Var loss = batch_loss(tape, std::span<const std::size_t>(order.data() + begin, end - begin));
      if (!std::isfinite(loss.item())) throw DivergenceError("non-finite regression loss");
      tape.backward(loss);
      const float inv = 1.0f / static_cast<float>(end - begin);
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (float& g : params[i].grad.data()) g *= inv;
      }
      optimizer.step(params);
    }
    const double dev = dev_mse();
    if (!std::isfinite(dev)) throw DivergenceError("non-finite dev MSE");
    if (dev < best) {
      best = dev;
      since_best = 0;
      best_values.clear();
      for (std::size_t i = 0; i < params.size(); ++i) best_values.push_back(params[i].value);
    } else if (schedule.patience > 0 && ++since_best >= schedule.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best_values[i];
  if (best_dev) *best_dev = best;
  return epoch;
}

Regressor::Regressor(std::size_t input, std::size_t width, std::uint64_t seed)
    : input_(input), width_(width), layout_(declare_mlp(params_, "", input, width)) {
  Rng rng(seed);
  params_.init_uniform(rng, 0.08);
  borrowed_ = {};
  for (std::size_t i = 0; i < params_.size(); ++i) borrowed_.push_back(borrow(params_[i]));
}

double Regressor::predict(const Tensor& features) const {
  if (features.rank() != 1 || features.size() != input_) {
    throw DimensionError("regressor expects features of shape [" + std::to_string(input_) + "], got " +
                         features.shape_str());
  }
  Var out = mlp_forward<float>(borrowed_, layout_, constant(features));
  return labels_.denormalize(out.item());
}

namespace {

Tensor stack_rows(const std::vector<Tensor>& x, std::span<const std::size_t> idx, std::size_t width) {
  Tensor m({idx.size(), width});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = x[idx[r]].data();
    std::copy(src.begin(), src.end(), m.data().begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  return m;
}

}  // namespace

RegressionReport Regressor::fit(const std::vector<Tensor>& x, const std::vector<double>& y,
                                const std::vector<Tensor>& dev_x, const std::vector<double>& dev_y,
                                const RegressionSchedule& schedule) {
  if (x.size() != y.size() || dev_x.size() != dev_y.size()) throw ContractError("regressor fit: size mismatch");
  if (dev_x.empty()) throw ContractError("regressor fit: empty dev set");
  for (const auto* set : {&x, &dev_x}) {
    for (const auto& f : *set) {
      if (f.rank() != 1 || f.size() != input_) throw DimensionError("regressor features of shape " + f.shape_str());
    }
  }
  labels_ = LabelScale::fit(y);

  auto batch_loss = [&](Tape& tape, std::span<const std::size_t> idx) {
    std::vector<Var> p;
    for (std::size_t i = 0; i < params_.size(); ++i) p.push_back(tape.param(params_[i]));
    Var pred = mlp_forward<float>(p, layout_, tape.constant(stack_rows(x, idx, input_)));
    Tensor target({idx.size(), 1});
    for (std::size_t r = 0; r < idx.size(); ++r) target[r] = static_cast<float>(labels_.normalize(y[idx[r]]));
    Var diff = sub(pred, tape.constant(std::move(target)));
    return sum(mul(diff, diff));
  };
  auto predictions = [&](const std::vector<Tensor>& feats) {
    std::vector<double> out;
    out.reserve(feats.size());
    for (const auto& f : feats) out.push_back(predict(f));
    return out;
  };
  auto dev_mse = [&] { return mean_squared_error(predictions(dev_x), dev_y); };

  RegressionReport report;
  report.epochs = fit_regression(params_, x.size(), batch_loss, dev_mse, schedule, &report.mse);
  report.baseline_mse = constant_baseline_mse(y, dev_y);
  report.train_mse = mean_squared_error(predictions(x), y);
  return report;
}

void Regressor::save_to(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.set_meta(prefix + "input", static_cast<double>(input_));
  ckpt.set_meta(prefix + "width", static_cast<double>(width_));
  ckpt.set_meta(prefix + "label_mean", labels_.mean);
  ckpt.set_meta(prefix + "label_scale", labels_.scale);
  ckpt.add_parameters(params_, prefix);
}

Regressor Regressor::load_from(const Checkpoint& ckpt, const std::string& prefix) {
  Regressor r(static_cast<std::size_t>(ckpt.meta(prefix + "input")),
              static_cast<std::size_t>(ckpt.meta(prefix + "width")), 0);
  r.labels_.mean = ckpt.meta(prefix + "label_mean");
  r.labels_.scale = ckpt.meta(prefix + "label_scale");
  ckpt.load_parameters(r.params_, prefix);
  return r;
}

}  // namespace fdq
