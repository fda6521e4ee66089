#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fdq/rng.hpp"
#include "fdq/tensor.hpp"

namespace fdq {

// A named trainable array with its accumulated gradient.
template <typename T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
};

// Owns the parameters of one model. Parameter addresses are stable for the
// lifetime of the set (including across moves), so models may refer to
// parameters by pointer or by index.
template <typename T>
class BasicParameterSet {
 public:
  BasicParameterSet() = default;
  BasicParameterSet(BasicParameterSet&&) noexcept = default;
  BasicParameterSet& operator=(BasicParameterSet&&) noexcept = default;
  BasicParameterSet(const BasicParameterSet&) = delete;
  BasicParameterSet& operator=(const BasicParameterSet&) = delete;

  BasicParameter<T>& add(std::string name, Shape shape);
  BasicParameter<T>* find(std::string_view name);
  const BasicParameter<T>* find(std::string_view name) const;
  BasicParameter<T>& at(std::string_view name);
  const BasicParameter<T>& at(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  BasicParameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const BasicParameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t value_count() const;
  void zero_grad();
  void init_uniform(Rng& rng, double range);
  void fill(T v);

  // Copies values from a set with identical names and shapes.
  template <typename U>
  void assign_values(const BasicParameterSet<U>& other) {
    if (other.size() != size()) throw ContractError("parameter sets differ in size");
    for (std::size_t i = 0; i < size(); ++i) {
      if (params_[i]->name != other[i].name || params_[i]->value.shape() != other[i].value.shape()) {
        throw ContractError("parameter mismatch at " + params_[i]->name);
      }
      params_[i]->value = tensor_cast<T>(other[i].value);
    }
  }

  // Same names and shapes, values converted to U, zero gradients.
  template <typename U>
  BasicParameterSet<U> cast() const {
    BasicParameterSet<U> out;
    for (const auto& p : params_) out.add(p->name, p->value.shape());
    out.assign_values(*this);
    return out;
  }

 private:
  std::vector<std::unique_ptr<BasicParameter<T>>> params_;
};

template <typename T>
class BasicTape;

namespace detail {

template <typename T>
struct Node {
  BasicTensor<T> value;
  const BasicTensor<T>* borrowed = nullptr;
  BasicTensor<T> grad;
  BasicParameter<T>* param = nullptr;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  const BasicTensor<T>& val() const { return borrowed ? *borrowed : value; }
  BasicTensor<T>& ensure_grad() {
    if (grad.empty()) grad = BasicTensor<T>(val().shape());
    return grad;
  }
};

struct VarAccess;

}  // namespace detail

// Handle to a value in a computation. A Var without a tape is a plain value
// (inference); a Var on a tape records how it was computed so gradients can
// flow back to the tape's parameters and inputs.
template <typename T>
class BasicVar {
 public:
  using value_type = T;

  BasicVar() = default;

  bool defined() const { return static_cast<bool>(node_); }
  const BasicTensor<T>& value() const { return node_->val(); }
  const Shape& shape() const { return node_->val().shape(); }
  std::size_t size() const { return node_->val().size(); }
  T item() const { return node_->val().item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  BasicTape<T>* tape() const { return tape_; }

  // Gradient left by the last backward sweep; empty if none flowed here.
  const BasicTensor<T>& grad() const { return node_->grad; }

 private:
  friend struct detail::VarAccess;
  std::shared_ptr<detail::Node<T>> node_;
  BasicTape<T>* tape_ = nullptr;
};

// A value outside any tape.
template <typename T>
BasicVar<T> constant(BasicTensor<T> value);

// A parameter's value outside any tape, without copying it.
template <typename T>
BasicVar<T> borrow(const BasicParameter<T>& param);

// Records executed primitives in order; every node's inputs precede it.
template <typename T>
class BasicTape {
 public:
  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  // Leaf for a trainable parameter. Repeated calls return the same leaf, so a
  // parameter used at many time steps accumulates into one gradient slot.
  BasicVar<T> param(BasicParameter<T>& p);

  // Leaf whose gradient is tracked (test inputs).
  BasicVar<T> input(BasicTensor<T> value);

  BasicVar<T> constant(BasicTensor<T> value);

  // Reverse sweep from a scalar loss. Parameter gradients are added into
  // Parameter::grad, then the tape is cleared for reuse.
  void backward(const BasicVar<T>& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  friend struct detail::VarAccess;

  std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
  std::unordered_map<BasicParameter<T>*, BasicVar<T>> params_;
};

// Builds the result of a primitive. The result lives on the inputs' tape (if
// any) and keeps `backward` only when some input requires a gradient.
template <typename T>
BasicVar<T> make_var(BasicTensor<T> value, std::span<const BasicVar<T>* const> inputs,
                     std::function<void(detail::Node<T>&)> backward);

template <typename T>
BasicVar<T> make_var(BasicTensor<T> value, std::initializer_list<const BasicVar<T>*> inputs,
                     std::function<void(detail::Node<T>&)> backward) {
  return make_var<T>(std::move(value), std::span<const BasicVar<T>* const>(inputs.begin(), inputs.size()),
                     std::move(backward));
}

using Parameter = BasicParameter<float>;
using ParameterSet = BasicParameterSet<float>;
using Var = BasicVar<float>;
using Tape = BasicTape<float>;

using ParameterD = BasicParameter<double>;
using ParameterSetD = BasicParameterSet<double>;
using VarD = BasicVar<double>;
using TapeD = BasicTape<double>;

}  // namespace fdq
