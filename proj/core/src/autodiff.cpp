#include "fdq/autodiff.hpp"

#include "fdq/error.hpp"

namespace fdq {

namespace detail {

struct VarAccess {
  template <typename T>
  static std::shared_ptr<Node<T>>& node(BasicVar<T>& v) {
    return v.node_;
  }
  template <typename T>
  static const std::shared_ptr<Node<T>>& node(const BasicVar<T>& v) {
    return v.node_;
  }
  template <typename T>
  static void set_tape(BasicVar<T>& v, BasicTape<T>* tape) {
    v.tape_ = tape;
  }
  template <typename T>
  static void record(BasicTape<T>& tape, std::shared_ptr<Node<T>> n) {
    tape.nodes_.push_back(std::move(n));
  }
};

}  // namespace detail

using detail::VarAccess;

template <typename T>
BasicParameter<T>& BasicParameterSet<T>::add(std::string name, Shape shape) {
  if (find(name)) throw ContractError("duplicate parameter name: " + name);
  auto p = std::make_unique<BasicParameter<T>>();
  p->name = std::move(name);
  p->value = BasicTensor<T>(shape);
  p->grad = BasicTensor<T>(std::move(shape));
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
BasicParameter<T>* BasicParameterSet<T>::find(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

template <typename T>
const BasicParameter<T>* BasicParameterSet<T>::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

template <typename T>
BasicParameter<T>& BasicParameterSet<T>::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ContractError("no parameter named " + std::string(name));
}

template <typename T>
const BasicParameter<T>& BasicParameterSet<T>::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ContractError("no parameter named " + std::string(name));
}

template <typename T>
std::size_t BasicParameterSet<T>::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
void BasicParameterSet<T>::zero_grad() {
  for (auto& p : params_) p->grad.fill(T(0));
}

template <typename T>
void BasicParameterSet<T>::init_uniform(Rng& rng, double range) {
  for (auto& p : params_) {
    for (T& v : p->value.data()) v = static_cast<T>(rng.uniform(-range, range));
  }
}

template <typename T>
void BasicParameterSet<T>::fill(T v) {
  for (auto& p : params_) p->value.fill(v);
}

template <typename T>
BasicVar<T> constant(BasicTensor<T> value) {
  BasicVar<T> v;
  auto& n = VarAccess::node(v);
  n = std::make_shared<detail::Node<T>>();
  n->value = std::move(value);
  return v;
}

template <typename T>
BasicVar<T> borrow(const BasicParameter<T>& param) {
  BasicVar<T> v;
  auto& n = VarAccess::node(v);
  n = std::make_shared<detail::Node<T>>();
  n->borrowed = &param.value;
  return v;
}

template <typename T>
BasicVar<T> BasicTape<T>::param(BasicParameter<T>& p) {
  auto it = params_.find(&p);
  if (it != params_.end()) return it->second;
  BasicVar<T> v;
  auto& n = VarAccess::node(v);
  n = std::make_shared<detail::Node<T>>();
  n->borrowed = &p.value;
  n->param = &p;
  n->requires_grad = true;
  VarAccess::set_tape(v, this);
  nodes_.push_back(n);
  params_.emplace(&p, v);
  return v;
}

template <typename T>
BasicVar<T> BasicTape<T>::input(BasicTensor<T> value) {
  BasicVar<T> v = fdq::constant(std::move(value));
  auto& n = VarAccess::node(v);
  n->requires_grad = true;
  VarAccess::set_tape(v, this);
  nodes_.push_back(n);
  return v;
}

template <typename T>
BasicVar<T> BasicTape<T>::constant(BasicTensor<T> value) {
  BasicVar<T> v = fdq::constant(std::move(value));
  VarAccess::set_tape(v, this);
  return v;
}

template <typename T>
void BasicTape<T>::backward(const BasicVar<T>& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined Var");
  auto& root = *VarAccess::node(loss);
  if (root.val().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + root.val().shape_str());
  }
  if (loss.tape() != this) throw ContractError("loss was not recorded on this tape");
  if (root.requires_grad) {
    root.ensure_grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto& node = **it;
      if (node.grad.empty() || !node.backward) continue;
      node.backward(node);
    }
    // Parameters are flushed in first-use order so accumulation is
    // independent of hash-map iteration order.
    for (auto& node : nodes_) {
      if (!node->param || node->grad.empty()) continue;
      auto dst = node->param->grad.data();
      auto src = node->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  clear();
}

template <typename T>
void BasicTape<T>::clear() {
  nodes_.clear();
  params_.clear();
}

template <typename T>
BasicVar<T> make_var(BasicTensor<T> value, std::span<const BasicVar<T>* const> inputs,
                     std::function<void(detail::Node<T>&)> backward) {
  BasicTape<T>* tape = nullptr;
  bool needs_grad = false;
  for (const BasicVar<T>* in : inputs) {
    if (!in->defined()) throw ContractError("operation on an undefined Var");
    if (in->tape()) {
      if (tape && tape != in->tape()) throw ContractError("operation mixes Vars from different tapes");
      tape = in->tape();
    }
    needs_grad = needs_grad || in->requires_grad();
  }
  BasicVar<T> out = fdq::constant(std::move(value));
  VarAccess::set_tape(out, tape);
  if (tape && needs_grad) {
    auto& n = VarAccess::node(out);
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const BasicVar<T>* in : inputs) n->inputs.push_back(VarAccess::node(*in));
    n->backward = std::move(backward);
    VarAccess::record(*tape, n);
  }
  return out;
}

#define FDQ_INSTANTIATE(T)                                                                       \
  template class BasicParameterSet<T>;                                                           \
  template class BasicTape<T>;                                                                   \
  template BasicVar<T> constant<T>(BasicTensor<T>);                                              \
  template BasicVar<T> borrow<T>(const BasicParameter<T>&);                                      \
  template BasicVar<T> make_var<T>(BasicTensor<T>, std::span<const BasicVar<T>* const>,          \
                                   std::function<void(detail::Node<T>&)>);

FDQ_INSTANTIATE(float)
FDQ_INSTANTIATE(double)

#undef FDQ_INSTANTIATE

}  // namespace fdq
