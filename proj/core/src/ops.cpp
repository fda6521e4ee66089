#include "fdq/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fdq/error.hpp"

namespace fdq {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
Eigen::Map<const ColVec<T>> cvec(const BasicTensor<T>& t) {
  return Eigen::Map<const ColVec<T>>(t.raw(), static_cast<Eigen::Index>(t.size()));
}
template <typename T>
Eigen::Map<ColVec<T>> mvec(BasicTensor<T>& t) {
  return Eigen::Map<ColVec<T>>(t.raw(), static_cast<Eigen::Index>(t.size()));
}
template <typename T>
Eigen::Map<const RowMat<T>> cmat(const BasicTensor<T>& t) {
  return Eigen::Map<const RowMat<T>>(t.raw(), static_cast<Eigen::Index>(t.dim(0)),
                                     static_cast<Eigen::Index>(t.dim(1)));
}
template <typename T>
Eigen::Map<RowMat<T>> mmat(BasicTensor<T>& t) {
  return Eigen::Map<RowMat<T>>(t.raw(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}

template <typename T>
[[noreturn]] void shape_mismatch(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

template <typename T>
void require_vector(const char* op, const BasicTensor<T>& t) {
  if (t.rank() != 1) throw DimensionError(std::string(op) + ": expected a vector, got " + t.shape_str());
}

template <typename T>
detail::Node<T>& in(detail::Node<T>& self, std::size_t i) {
  return *self.inputs[i];
}

template <typename T, typename F, typename G>
BasicVar<T> unary(const BasicVar<T>& a, F forward, G derivative) {
  const BasicTensor<T>& x = a.value();
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = forward(x[i]);
  return make_var<T>(std::move(out), {&a}, [derivative](detail::Node<T>& self) {
    auto& src = in(self, 0);
    if (!src.requires_grad) return;
    auto& g = src.ensure_grad();
    const BasicTensor<T>& y = self.val();
    for (std::size_t i = 0; i < y.size(); ++i) g[i] += self.grad[i] * derivative(y[i]);
  });
}

}  // namespace

template <typename T>
BasicVar<T> affine(const BasicVar<T>& weight, const BasicVar<T>& bias, const BasicVar<T>& input) {
  const BasicTensor<T>& w = weight.value();
  const BasicTensor<T>& b = bias.value();
  const BasicTensor<T>& x = input.value();
  if (w.rank() != 2) throw DimensionError("affine: weight must be [out,in], got " + w.shape_str());
  const std::size_t n_out = w.dim(0), n_in = w.dim(1);
  if (b.rank() != 1 || b.dim(0) != n_out) shape_mismatch("affine (bias)", w, b);
  const bool batched = x.rank() == 2;
  if ((x.rank() != 1 && !batched) || x.shape().back() != n_in) shape_mismatch("affine", w, x);

  BasicTensor<T> out;
  if (!batched) {
    out = BasicTensor<T>({n_out});
    mvec(out).noalias() = cmat(w) * cvec(x) + cvec(b);
  } else {
    out = BasicTensor<T>({x.dim(0), n_out});
    auto o = mmat(out);
    o.noalias() = cmat(x) * cmat(w).transpose();
    o.rowwise() += cvec(b).transpose();
  }
  return make_var<T>(std::move(out), {&weight, &bias, &input}, [batched](detail::Node<T>& self) {
    auto& wn = in(self, 0);
    auto& bn = in(self, 1);
    auto& xn = in(self, 2);
    const BasicTensor<T>& g = self.grad;
    if (!batched) {
      if (wn.requires_grad) mmat(wn.ensure_grad()).noalias() += cvec(g) * cvec(xn.val()).transpose();
      if (bn.requires_grad) mvec(bn.ensure_grad()) += cvec(g);
      if (xn.requires_grad) mvec(xn.ensure_grad()).noalias() += cmat(wn.val()).transpose() * cvec(g);
    } else {
      if (wn.requires_grad) mmat(wn.ensure_grad()).noalias() += cmat(g).transpose() * cmat(xn.val());
      if (bn.requires_grad) mvec(bn.ensure_grad()) += cmat(g).colwise().sum().transpose();
      if (xn.requires_grad) mmat(xn.ensure_grad()).noalias() += cmat(g) * cmat(wn.val());
    }
  });
}

template <typename T>
BasicVar<T> matvec(const BasicVar<T>& weight, const BasicVar<T>& input) {
  const BasicTensor<T>& w = weight.value();
  const BasicTensor<T>& x = input.value();
  if (w.rank() != 2 || x.rank() != 1 || x.dim(0) != w.dim(1)) shape_mismatch("matvec", w, x);
  BasicTensor<T> out({w.dim(0)});
  mvec(out).noalias() = cmat(w) * cvec(x);
  return make_var<T>(std::move(out), {&weight, &input}, [](detail::Node<T>& self) {
    auto& wn = in(self, 0);
    auto& xn = in(self, 1);
    if (wn.requires_grad) mmat(wn.ensure_grad()).noalias() += cvec(self.grad) * cvec(xn.val()).transpose();
    if (xn.requires_grad) mvec(xn.ensure_grad()).noalias() += cmat(wn.val()).transpose() * cvec(self.grad);
  });
}

template <typename T>
BasicVar<T> add(const BasicVar<T>& a, const BasicVar<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("add", a.value(), b.value());
  BasicTensor<T> out = a.value();
  mvec(out) += cvec(b.value());
  return make_var<T>(std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (in(self, k).requires_grad) mvec(in(self, k).ensure_grad()) += cvec(self.grad);
    }
  });
}

template <typename T>
BasicVar<T> sub(const BasicVar<T>& a, const BasicVar<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("sub", a.value(), b.value());
  BasicTensor<T> out = a.value();
  mvec(out) -= cvec(b.value());
  return make_var<T>(std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    if (in(self, 0).requires_grad) mvec(in(self, 0).ensure_grad()) += cvec(self.grad);
    if (in(self, 1).requires_grad) mvec(in(self, 1).ensure_grad()) -= cvec(self.grad);
  });
}

template <typename T>
BasicVar<T> mul(const BasicVar<T>& a, const BasicVar<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a.value(), b.value());
  BasicTensor<T> out(a.shape());
  mvec(out) = cvec(a.value()).cwiseProduct(cvec(b.value()));
  return make_var<T>(std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    auto& an = in(self, 0);
    auto& bn = in(self, 1);
    if (an.requires_grad) mvec(an.ensure_grad()) += cvec(self.grad).cwiseProduct(cvec(bn.val()));
    if (bn.requires_grad) mvec(bn.ensure_grad()) += cvec(self.grad).cwiseProduct(cvec(an.val()));
  });
}

template <typename T>
BasicVar<T> scale(const BasicVar<T>& a, T factor) {
  BasicTensor<T> out = a.value();
  mvec(out) *= factor;
  return make_var<T>(std::move(out), {&a}, [factor](detail::Node<T>& self) {
    if (in(self, 0).requires_grad) mvec(in(self, 0).ensure_grad()) += factor * cvec(self.grad);
  });
}

template <typename T>
BasicVar<T> sigmoid(const BasicVar<T>& a) {
  return unary(
      a,
      [](T x) {
        // Split on sign so exp never overflows.
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T y) { return y * (T(1) - y); });
}

template <typename T>
BasicVar<T> tanh(const BasicVar<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T y) { return T(1) - y * y; });
}

template <typename T>
BasicVar<T> concat(const BasicVar<T>& a, const BasicVar<T>& b) {
  const BasicTensor<T>& x = a.value();
  const BasicTensor<T>& y = b.value();
  require_vector("concat", x);
  require_vector("concat", y);
  std::vector<T> v(x.data().begin(), x.data().end());
  v.insert(v.end(), y.data().begin(), y.data().end());
  const std::size_t nx = x.size();
  return make_var<T>(BasicTensor<T>::vector(std::move(v)), {&a, &b}, [nx](detail::Node<T>& self) {
    auto& xn = in(self, 0);
    auto& yn = in(self, 1);
    if (xn.requires_grad) {
      auto& g = xn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (yn.requires_grad) {
      auto& g = yn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[nx + i];
    }
  });
}

template <typename T>
BasicVar<T> slice(const BasicVar<T>& a, std::size_t offset, std::size_t length) {
  const BasicTensor<T>& x = a.value();
  require_vector("slice", x);
  if (length == 0 || offset + length > x.size()) {
    throw IndexError("slice [" + std::to_string(offset) + ", +" + std::to_string(length) + ") out of range for " +
                     x.shape_str());
  }
  std::vector<T> v(x.data().begin() + offset, x.data().begin() + offset + length);
  return make_var<T>(BasicTensor<T>::vector(std::move(v)), {&a}, [offset](detail::Node<T>& self) {
    auto& src = in(self, 0);
    if (!src.requires_grad) return;
    auto& g = src.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

template <typename T>
BasicVar<T> dot(const BasicVar<T>& a, const BasicVar<T>& b) {
  require_vector("dot", a.value());
  if (a.shape() != b.shape()) shape_mismatch("dot", a.value(), b.value());
  T s = cvec(a.value()).dot(cvec(b.value()));
  return make_var<T>(BasicTensor<T>::scalar(s), {&a, &b}, [](detail::Node<T>& self) {
    const T g = self.grad[0];
    auto& an = in(self, 0);
    auto& bn = in(self, 1);
    if (an.requires_grad) mvec(an.ensure_grad()) += g * cvec(bn.val());
    if (bn.requires_grad) mvec(bn.ensure_grad()) += g * cvec(an.val());
  });
}

template <typename T>
BasicVar<T> sum(const BasicVar<T>& a) {
  T s = cvec(a.value()).sum();
  return make_var<T>(BasicTensor<T>::scalar(s), {&a}, [](detail::Node<T>& self) {
    auto& src = in(self, 0);
    if (src.requires_grad) mvec(src.ensure_grad()).array() += self.grad[0];
  });
}

template <typename T>
BasicVar<T> row(const BasicVar<T>& table, int index) {
  const BasicTensor<T>& t = table.value();
  if (t.rank() != 2) throw DimensionError("row: table must be rank 2, got " + t.shape_str());
  if (index < 0 || static_cast<std::size_t>(index) >= t.dim(0)) {
    throw IndexError("row " + std::to_string(index) + " out of range for table " + t.shape_str());
  }
  auto r = t.row(static_cast<std::size_t>(index));
  const auto idx = static_cast<std::size_t>(index);
  return make_var<T>(BasicTensor<T>::vector({r.begin(), r.end()}), {&table}, [idx](detail::Node<T>& self) {
    auto& src = in(self, 0);
    if (!src.requires_grad) return;
    auto& g = src.ensure_grad();
    const std::size_t d = g.dim(1);
    for (std::size_t j = 0; j < d; ++j) g[idx * d + j] += self.grad[j];
  });
}

template <typename T>
BasicVar<T> stack(std::span<const BasicVar<T>> rows) {
  if (rows.empty()) throw ContractError("stack of nothing");
  const std::size_t d = rows[0].size();
  std::vector<T> v;
  v.reserve(rows.size() * d);
  std::vector<const BasicVar<T>*> inputs;
  inputs.reserve(rows.size());
  for (const auto& r : rows) {
    require_vector("stack", r.value());
    if (r.size() != d) shape_mismatch("stack", rows[0].value(), r.value());
    v.insert(v.end(), r.value().data().begin(), r.value().data().end());
    inputs.push_back(&r);
  }
  return make_var<T>(BasicTensor<T>::matrix(rows.size(), d, std::move(v)), inputs, [d](detail::Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      auto& r = in(self, i);
      if (!r.requires_grad) continue;
      auto& g = r.ensure_grad();
      for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
    }
  });
}

template <typename T>
BasicVar<T> rows_dot(const BasicVar<T>& matrix, const BasicVar<T>& v) {
  const BasicTensor<T>& m = matrix.value();
  const BasicTensor<T>& x = v.value();
  if (m.rank() != 2 || x.rank() != 1 || m.dim(1) != x.dim(0)) shape_mismatch("rows_dot", m, x);
  BasicTensor<T> out({m.dim(0)});
  mvec(out).noalias() = cmat(m) * cvec(x);
  return make_var<T>(std::move(out), {&matrix, &v}, [](detail::Node<T>& self) {
    auto& mn = in(self, 0);
    auto& xn = in(self, 1);
    if (mn.requires_grad) mmat(mn.ensure_grad()).noalias() += cvec(self.grad) * cvec(xn.val()).transpose();
    if (xn.requires_grad) mvec(xn.ensure_grad()).noalias() += cmat(mn.val()).transpose() * cvec(self.grad);
  });
}

template <typename T>
BasicVar<T> weighted_rows(const BasicVar<T>& matrix, const BasicVar<T>& weights) {
  const BasicTensor<T>& m = matrix.value();
  const BasicTensor<T>& w = weights.value();
  if (m.rank() != 2 || w.rank() != 1 || m.dim(0) != w.dim(0)) shape_mismatch("weighted_rows", m, w);
  BasicTensor<T> out({m.dim(1)});
  mvec(out).noalias() = cmat(m).transpose() * cvec(w);
  return make_var<T>(std::move(out), {&matrix, &weights}, [](detail::Node<T>& self) {
    auto& mn = in(self, 0);
    auto& wn = in(self, 1);
    if (mn.requires_grad) mmat(mn.ensure_grad()).noalias() += cvec(wn.val()) * cvec(self.grad).transpose();
    if (wn.requires_grad) mvec(wn.ensure_grad()).noalias() += cmat(mn.val()) * cvec(self.grad);
  });
}

template <typename T>
std::vector<T> log_softmax_values(std::span<const T> logits) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (T v : logits) z += std::exp(static_cast<double>(v - mx));
  const T lz = static_cast<T>(std::log(z)) + mx;
  std::vector<T> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

template <typename T>
BasicVar<T> softmax(const BasicVar<T>& logits) {
  require_vector("softmax", logits.value());
  auto lp = log_softmax_values(logits.value().data());
  for (auto& v : lp) v = std::exp(v);
  return make_var<T>(BasicTensor<T>::vector(std::move(lp)), {&logits}, [](detail::Node<T>& self) {
    auto& src = in(self, 0);
    if (!src.requires_grad) return;
    const BasicTensor<T>& p = self.val();
    const T inner = cvec(p).dot(cvec(self.grad));
    auto& g = src.ensure_grad();
    for (std::size_t i = 0; i < p.size(); ++i) g[i] += p[i] * (self.grad[i] - inner);
  });
}

template <typename T>
BasicVar<T> log_softmax(const BasicVar<T>& logits) {
  require_vector("log_softmax", logits.value());
  auto lp = log_softmax_values(logits.value().data());
  return make_var<T>(BasicTensor<T>::vector(std::move(lp)), {&logits}, [](detail::Node<T>& self) {
    auto& src = in(self, 0);
    if (!src.requires_grad) return;
    const BasicTensor<T>& y = self.val();
    const T total = cvec(self.grad).sum();
    auto& g = src.ensure_grad();
    for (std::size_t i = 0; i < y.size(); ++i) g[i] += self.grad[i] - std::exp(y[i]) * total;
  });
}

template <typename T>
BasicVar<T> softmax_xent(const BasicVar<T>& logits, int target) {
  const BasicTensor<T>& z = logits.value();
  require_vector("softmax_xent", z);
  if (target < 0 || static_cast<std::size_t>(target) >= z.size()) {
    throw IndexError("softmax_xent: target " + std::to_string(target) + " out of range for " + z.shape_str());
  }
  auto lp = log_softmax_values(z.data());
  const T loss = -lp[static_cast<std::size_t>(target)];
  return make_var<T>(BasicTensor<T>::scalar(loss), {&logits}, [lp = std::move(lp), target](detail::Node<T>& self) {
    auto& src = in(self, 0);
    if (!src.requires_grad) return;
    const T g0 = self.grad[0];
    auto& g = src.ensure_grad();
    for (std::size_t i = 0; i < lp.size(); ++i) g[i] += g0 * std::exp(lp[i]);
    g[static_cast<std::size_t>(target)] -= g0;
  });
}

template <typename T>
BasicVar<T> squared_error(const BasicVar<T>& prediction, T target) {
  const T d = prediction.item() - target;
  return make_var<T>(BasicTensor<T>::scalar(d * d), {&prediction}, [d](detail::Node<T>& self) {
    auto& src = in(self, 0);
    if (src.requires_grad) src.ensure_grad()[0] += T(2) * d * self.grad[0];
  });
}

template <typename T>
BasicLstmState<T> lstm_step(const BasicLstmParams<T>& params, const BasicVar<T>& x, const BasicLstmState<T>& state) {
  const BasicTensor<T>& w = params.weight.value();
  if (w.rank() != 2 || w.dim(0) % 4 != 0) {
    throw DimensionError("lstm_step: weight must be [4H, D+H], got " + w.shape_str());
  }
  const std::size_t hidden = w.dim(0) / 4;
  if (state.h.shape() != Shape{hidden} || state.c.shape() != Shape{hidden}) {
    throw DimensionError("lstm_step: state must be [" + std::to_string(hidden) + "], got h " +
                         state.h.value().shape_str() + " c " + state.c.value().shape_str());
  }
  if (x.value().rank() != 1 || x.size() + hidden != w.dim(1)) {
    throw DimensionError("lstm_step: input " + x.value().shape_str() + " does not fit weight " + w.shape_str());
  }
  BasicVar<T> gates = affine(params.weight, params.bias, concat(x, state.h));
  BasicVar<T> i = sigmoid(slice(gates, 0, hidden));
  BasicVar<T> f = sigmoid(slice(gates, hidden, hidden));
  BasicVar<T> g = tanh(slice(gates, 2 * hidden, hidden));
  BasicVar<T> o = sigmoid(slice(gates, 3 * hidden, hidden));
  BasicVar<T> c = add(mul(f, state.c), mul(i, g));
  BasicVar<T> h = mul(o, tanh(c));
  return {h, c};
}

#define FDQ_INSTANTIATE(T)                                                                   \
  template BasicVar<T> affine(const BasicVar<T>&, const BasicVar<T>&, const BasicVar<T>&);  \
  template BasicVar<T> matvec(const BasicVar<T>&, const BasicVar<T>&);                      \
  template BasicVar<T> add(const BasicVar<T>&, const BasicVar<T>&);                         \
  template BasicVar<T> sub(const BasicVar<T>&, const BasicVar<T>&);                         \
  template BasicVar<T> mul(const BasicVar<T>&, const BasicVar<T>&);                         \
  template BasicVar<T> scale(const BasicVar<T>&, T);                                        \
  template BasicVar<T> sigmoid(const BasicVar<T>&);                                         \
  template BasicVar<T> tanh(const BasicVar<T>&);                                            \
  template BasicVar<T> concat(const BasicVar<T>&, const BasicVar<T>&);                      \
  template BasicVar<T> slice(const BasicVar<T>&, std::size_t, std::size_t);                 \
  template BasicVar<T> dot(const BasicVar<T>&, const BasicVar<T>&);                         \
  template BasicVar<T> sum(const BasicVar<T>&);                                             \
  template BasicVar<T> row(const BasicVar<T>&, int);                                        \
  template BasicVar<T> stack(std::span<const BasicVar<T>>);                                 \
  template BasicVar<T> rows_dot(const BasicVar<T>&, const BasicVar<T>&);                    \
  template BasicVar<T> weighted_rows(const BasicVar<T>&, const BasicVar<T>&);               \
  template BasicVar<T> softmax(const BasicVar<T>&);                                         \
  template BasicVar<T> log_softmax(const BasicVar<T>&);                                     \
  template BasicVar<T> softmax_xent(const BasicVar<T>&, int);                               \
  template BasicVar<T> squared_error(const BasicVar<T>&, T);                                \
  template std::vector<T> log_softmax_values(std::span<const T>);                           \
  template BasicLstmState<T> lstm_step(const BasicLstmParams<T>&, const BasicVar<T>&, const BasicLstmState<T>&);

FDQ_INSTANTIATE(float)
FDQ_INSTANTIATE(double)

#undef FDQ_INSTANTIATE

}  // namespace fdq
