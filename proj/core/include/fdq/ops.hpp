#pragma once

#include <span>
#include <vector>

#include "fdq/autodiff.hpp"

namespace fdq {

// input·Wᵀ + b for input [in] or [batch, in] and weight [out, in].
template <typename T>
BasicVar<T> affine(const BasicVar<T>& weight, const BasicVar<T>& bias, const BasicVar<T>& input);
template <typename T>
BasicVar<T> matvec(const BasicVar<T>& weight, const BasicVar<T>& input);

template <typename T>
BasicVar<T> add(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T>
BasicVar<T> sub(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T>
BasicVar<T> mul(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T>
BasicVar<T> scale(const BasicVar<T>& a, T factor);
template <typename T>
BasicVar<T> sigmoid(const BasicVar<T>& a);
template <typename T>
BasicVar<T> tanh(const BasicVar<T>& a);

template <typename T>
BasicVar<T> concat(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T>
BasicVar<T> slice(const BasicVar<T>& a, std::size_t offset, std::size_t length);

template <typename T>
BasicVar<T> dot(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T>
BasicVar<T> sum(const BasicVar<T>& a);

// Row `index` of a rank-2 table (embedding lookup).
template <typename T>
BasicVar<T> row(const BasicVar<T>& table, int index);
// Stacks equal-length vectors into an [n, d] matrix.
template <typename T>
BasicVar<T> stack(std::span<const BasicVar<T>> rows);
// M·v for M [n, d], v [d]; attention scores.
template <typename T>
BasicVar<T> rows_dot(const BasicVar<T>& matrix, const BasicVar<T>& v);
// Mᵀ·w for M [n, d], w [n]; attention-weighted sum of rows.
template <typename T>
BasicVar<T> weighted_rows(const BasicVar<T>& matrix, const BasicVar<T>& weights);

template <typename T>
BasicVar<T> softmax(const BasicVar<T>& logits);
template <typename T>
BasicVar<T> log_softmax(const BasicVar<T>& logits);
// −log softmax(logits)[target], with max subtraction.
template <typename T>
BasicVar<T> softmax_xent(const BasicVar<T>& logits, int target);
// (prediction − target)² for a scalar prediction.
template <typename T>
BasicVar<T> squared_error(const BasicVar<T>& prediction, T target);

// Sum of a list of same-shape values.
template <typename T>
BasicVar<T> add_n(std::span<const BasicVar<T>> terms) {
  if (terms.empty()) throw ContractError("add_n of nothing");
  BasicVar<T> acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

// Stable log-softmax over plain values.
template <typename T>
std::vector<T> log_softmax_values(std::span<const T> logits);

template <typename T>
struct BasicLstmParams {
  BasicVar<T> weight;  // [4H, D + H]; gate blocks: input, forget, cell, output
  BasicVar<T> bias;    // [4H]
};

template <typename T>
struct BasicLstmState {
  BasicVar<T> h;
  BasicVar<T> c;
};

template <typename T>
BasicLstmState<T> lstm_step(const BasicLstmParams<T>& params, const BasicVar<T>& x, const BasicLstmState<T>& state);

using LstmParams = BasicLstmParams<float>;
using LstmState = BasicLstmState<float>;

}  // namespace fdq
