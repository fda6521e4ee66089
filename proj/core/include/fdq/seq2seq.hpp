#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdq/autodiff.hpp"
#include "fdq/checkpoint.hpp"
#include "fdq/ops.hpp"
#include "fdq/rng.hpp"

namespace fdq {

struct Seq2SeqConfig {
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
  std::size_t hidden = 64;  // also the embedding width
  std::size_t layers = 1;
  bool attention = true;
  // Hard cap on generated tokens, EOS included.
  std::size_t max_length = 32;

  bool operator==(const Seq2SeqConfig&) const = default;
};

// Indices of each array inside a model's parameter set. Parameters are
// declared in a fixed order so the same layout addresses a float model and
// its double copy.
struct Seq2SeqLayout {
  std::size_t src_embed = 0, tgt_embed = 0;
  std::vector<std::size_t> enc_w, enc_b, dec_w, dec_b;
  // Softmax-side and fed-forward attention vectors have separate weights.
  std::size_t att_out_w = 0, att_out_b = 0, att_feed_w = 0, att_feed_b = 0;
  std::size_t out_w = 0, out_b = 0;
};

template <typename T>
Seq2SeqLayout declare_seq2seq(const Seq2SeqConfig& config, BasicParameterSet<T>& params);

template <typename T>
std::vector<BasicVar<T>> tape_params(BasicTape<T>& tape, BasicParameterSet<T>& params);
template <typename T>
std::vector<BasicVar<T>> borrowed_params(const BasicParameterSet<T>& params);

template <typename T>
struct BasicEncoded {
  std::vector<BasicVar<T>> outputs;  // top-layer h per source position
  BasicVar<T> memory;                // outputs stacked [n, H]
  std::vector<BasicLstmState<T>> final;
  std::uint64_t model_uid = 0;
};

template <typename T>
struct BasicDecoderState {
  std::vector<BasicLstmState<T>> layers;
  BasicVar<T> feed;  // previous fed-forward attention vector
  std::size_t step = 0;  // target tokens consumed, BOS excluded
  std::uint64_t model_uid = 0;

  // h_t: top-layer output after consuming the last token.
  const BasicTensor<T>& hidden() const { return layers.back().h.value(); }
};

// Multi-layer LSTM over embedded tokens, starting from zero state.
template <typename T>
std::pair<std::vector<BasicVar<T>>, std::vector<BasicLstmState<T>>> run_lstm_stack(
    const BasicVar<T>& embed, std::span<const BasicLstmParams<T>> layers, std::span<const int> tokens,
    std::size_t hidden);

// The model's computation written once over parameter handles; used both for
// taped training (float), inference (borrowed float) and gradient checks
// (double).
template <typename T>
class Seq2SeqGraph {
 public:
  Seq2SeqGraph(const Seq2SeqConfig& config, const Seq2SeqLayout& layout, std::vector<BasicVar<T>> params)
      : config_(config), layout_(layout), p_(std::move(params)) {}

  BasicEncoded<T> encode(std::span<const int> source) const;
  BasicDecoderState<T> initial_state(const BasicEncoded<T>& enc) const;
  // Consumes `token` and returns logits over the target vocab for the next one.
  BasicVar<T> step(BasicDecoderState<T>& state, int token, const BasicEncoded<T>& enc) const;
  // Summed cross-entropy of target (which ends with EOS) under teacher forcing.
  BasicVar<T> loss(std::span<const int> source, std::span<const int> target) const;

 private:
  Seq2SeqConfig config_;
  Seq2SeqLayout layout_;
  std::vector<BasicVar<T>> p_;
};

using Encoded = BasicEncoded<float>;
using DecoderState = BasicDecoderState<float>;

struct StepOutput {
  std::vector<double> logprobs;  // log p(next token), full target vocab
  DecoderState state;
};

// Empty sequences are encoded as a lone EOS.
std::vector<int> encoder_input(std::span<const int> source);

class Seq2Seq {
 public:
  Seq2Seq(const Seq2SeqConfig& config, std::uint64_t seed);
  Seq2Seq(Seq2Seq&&) noexcept = default;
  Seq2Seq& operator=(Seq2Seq&&) = delete;
  Seq2Seq(const Seq2Seq&) = delete;

  const Seq2SeqConfig& config() const { return config_; }
  const Seq2SeqLayout& layout() const { return layout_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::uint64_t uid() const { return uid_; }

  bool trained() const { return trained_; }
  void set_trained(bool v) { trained_ = v; }
  void set_max_length(std::size_t cap) { config_.max_length = cap; }

  // Inference graph over the current parameter values.
  const Seq2SeqGraph<float>& graph() const { return infer_; }
  Seq2SeqGraph<float> graph(Tape& tape) { return {config_, layout_, tape_params(tape, params_)}; }

  Encoded encode(std::span<const int> source) const;
  // Feeds BOS; the result holds the distribution of the first target token.
  StepOutput start(const Encoded& enc) const;
  StepOutput decode_step(const DecoderState& state, int token, const Encoded& enc) const;

  // log p(target | source); target must end with EOS.
  double sequence_logprob(std::span<const int> source, std::span<const int> target) const;
  std::vector<double> token_logprobs(std::span<const int> source, std::span<const int> target) const;

  // Teacher-forced h_1..h_n after consuming each target token.
  std::vector<Tensor> hidden_states(std::span<const int> source, std::span<const int> target) const;

  // Extends prefix by ancestral sampling until EOS or the length cap.
  std::vector<int> sample_continuation(std::span<const int> source, std::span<const int> prefix, Rng& rng) const;

  // Type-tagged "seq2seq" checkpoint.
  Checkpoint to_checkpoint() const;
  static Seq2Seq from_checkpoint(const Checkpoint& ckpt);
  // Untagged, under a name prefix, for embedding in other checkpoints.
  void save_to(Checkpoint& ckpt, const std::string& prefix) const;
  static Seq2Seq load_from(const Checkpoint& ckpt, const std::string& prefix);

 private:
  StepOutput finish_step(DecoderState state, const Var& logits) const;
  void check_token(int token) const;

  Seq2SeqConfig config_;
  ParameterSet params_;
  Seq2SeqLayout layout_;
  Seq2SeqGraph<float> infer_;
  std::uint64_t uid_;
  bool trained_ = false;
};

}  // namespace fdq
