#include "fdq/seq2seq.hpp"

#include <atomic>
#include <cmath>

#include "fdq/error.hpp"
#include "fdq/vocab.hpp"

namespace fdq {

namespace {

std::uint64_t next_uid() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

void check_ids(std::span<const int> ids, std::size_t vocab, const char* what) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ContractError(std::string(what) + " token id " + std::to_string(id) + " outside vocab of size " +
                          std::to_string(vocab));
    }
  }
}

}  // namespace

template <typename T>
Seq2SeqLayout declare_seq2seq(const Seq2SeqConfig& c, BasicParameterSet<T>& params) {
  if (c.source_vocab == 0 || c.target_vocab == 0) throw ConfigError("seq2seq: vocab sizes must be positive");
  if (c.hidden == 0 || c.layers == 0) throw ConfigError("seq2seq: hidden size and layer count must be positive");
  const std::size_t h = c.hidden;
  Seq2SeqLayout l;
  auto add = [&](std::string name, Shape shape) {
    params.add(std::move(name), std::move(shape));
    return params.size() - 1;
  };
  l.src_embed = add("src_embed", {c.source_vocab, h});
  l.tgt_embed = add("tgt_embed", {c.target_vocab, h});
  for (std::size_t i = 0; i < c.layers; ++i) {
    l.enc_w.push_back(add("enc/" + std::to_string(i) + "/w", {4 * h, 2 * h}));
    l.enc_b.push_back(add("enc/" + std::to_string(i) + "/b", {4 * h}));
  }
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::size_t in = (i == 0 && c.attention) ? 2 * h : h;
    l.dec_w.push_back(add("dec/" + std::to_string(i) + "/w", {4 * h, in + h}));
    l.dec_b.push_back(add("dec/" + std::to_string(i) + "/b", {4 * h}));
  }
  if (c.attention) {
    l.att_out_w = add("att_out/w", {h, 2 * h});
    l.att_out_b = add("att_out/b", {h});
    l.att_feed_w = add("att_feed/w", {h, 2 * h});
    l.att_feed_b = add("att_feed/b", {h});
  }
  l.out_w = add("out/w", {c.target_vocab, h});
  l.out_b = add("out/b", {c.target_vocab});
  return l;
}

template <typename T>
std::vector<BasicVar<T>> tape_params(BasicTape<T>& tape, BasicParameterSet<T>& params) {
  std::vector<BasicVar<T>> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(tape.param(params[i]));
  return out;
}

template <typename T>
std::vector<BasicVar<T>> borrowed_params(const BasicParameterSet<T>& params) {
  std::vector<BasicVar<T>> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(borrow(params[i]));
  return out;
}

template <typename T>
std::pair<std::vector<BasicVar<T>>, std::vector<BasicLstmState<T>>> run_lstm_stack(
    const BasicVar<T>& embed, std::span<const BasicLstmParams<T>> layers, std::span<const int> tokens,
    std::size_t hidden) {
  std::vector<BasicLstmState<T>> states;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    states.push_back({constant(BasicTensor<T>({hidden})), constant(BasicTensor<T>({hidden}))});
  }
  std::vector<BasicVar<T>> outputs;
  outputs.reserve(tokens.size());
  for (int tok : tokens) {
    BasicVar<T> input = row(embed, tok);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      states[l] = lstm_step(layers[l], input, states[l]);
      input = states[l].h;
    }
    outputs.push_back(input);
  }
  return {std::move(outputs), std::move(states)};
}

template <typename T>
BasicEncoded<T> Seq2SeqGraph<T>::encode(std::span<const int> source) const {
  if (source.empty()) throw ContractError("encode: empty source sequence");
  check_ids(source, config_.source_vocab, "source");
  std::vector<BasicLstmParams<T>> layers;
  for (std::size_t l = 0; l < config_.layers; ++l) layers.push_back({p_[layout_.enc_w[l]], p_[layout_.enc_b[l]]});
  auto [outputs, final] = run_lstm_stack<T>(p_[layout_.src_embed], layers, source, config_.hidden);
  BasicEncoded<T> enc;
  if (config_.attention) enc.memory = stack<T>(outputs);
  enc.outputs = std::move(outputs);
  enc.final = std::move(final);
  return enc;
}

template <typename T>
BasicDecoderState<T> Seq2SeqGraph<T>::initial_state(const BasicEncoded<T>& enc) const {
  BasicDecoderState<T> s;
  s.layers = enc.final;
  if (config_.attention) s.feed = constant(BasicTensor<T>({config_.hidden}));
  s.model_uid = enc.model_uid;
  return s;
}

template <typename T>
BasicVar<T> Seq2SeqGraph<T>::step(BasicDecoderState<T>& state, int token, const BasicEncoded<T>& enc) const {
  BasicVar<T> input = row(p_[layout_.tgt_embed], token);
  if (config_.attention) input = concat(input, state.feed);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    state.layers[l] = lstm_step<T>({p_[layout_.dec_w[l]], p_[layout_.dec_b[l]]}, input, state.layers[l]);
    input = state.layers[l].h;
  }
  if (token != kBos) ++state.step;
  if (!config_.attention) return affine(p_[layout_.out_w], p_[layout_.out_b], input);

  const BasicVar<T> weights = softmax(rows_dot(enc.memory, input));
  const BasicVar<T> joined = concat(input, weighted_rows(enc.memory, weights));
  const BasicVar<T> attended = tanh(affine(p_[layout_.att_out_w], p_[layout_.att_out_b], joined));
  state.feed = tanh(affine(p_[layout_.att_feed_w], p_[layout_.att_feed_b], joined));
  return affine(p_[layout_.out_w], p_[layout_.out_b], attended);
}

template <typename T>
BasicVar<T> Seq2SeqGraph<T>::loss(std::span<const int> source, std::span<const int> target) const {
  if (target.empty()) throw ContractError("loss: empty target");
  check_ids(target, config_.target_vocab, "target");
  const BasicEncoded<T> enc = encode(source);
  BasicDecoderState<T> state = initial_state(enc);
  std::vector<BasicVar<T>> terms;
  terms.reserve(target.size());
  int prev = kBos;
  for (int y : target) {
    terms.push_back(softmax_xent(step(state, prev, enc), y));
    prev = y;
  }
  return add_n<T>(terms);
}

#define FDQ_INSTANTIATE(T)                                                                          \
  template Seq2SeqLayout declare_seq2seq<T>(const Seq2SeqConfig&, BasicParameterSet<T>&);           \
  template std::vector<BasicVar<T>> tape_params<T>(BasicTape<T>&, BasicParameterSet<T>&);           \
  template std::vector<BasicVar<T>> borrowed_params<T>(const BasicParameterSet<T>&);                \
  template std::pair<std::vector<BasicVar<T>>, std::vector<BasicLstmState<T>>> run_lstm_stack<T>(   \
      const BasicVar<T>&, std::span<const BasicLstmParams<T>>, std::span<const int>, std::size_t); \
  template class Seq2SeqGraph<T>;

FDQ_INSTANTIATE(float)
FDQ_INSTANTIATE(double)

#undef FDQ_INSTANTIATE

std::vector<int> encoder_input(std::span<const int> source) {
  if (source.empty()) return {kEos};
  return {source.begin(), source.end()};
}

Seq2Seq::Seq2Seq(const Seq2SeqConfig& config, std::uint64_t seed)
    : config_(config),
      layout_(declare_seq2seq(config_, params_)),
      infer_(config_, layout_, borrowed_params(params_)),
      uid_(next_uid()) {
  Rng rng(seed);
  params_.init_uniform(rng, 0.08);
}

void Seq2Seq::check_token(int token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= config_.target_vocab) {
    throw ContractError("token id " + std::to_string(token) + " outside target vocab of size " +
                        std::to_string(config_.target_vocab));
  }
}

Encoded Seq2Seq::encode(std::span<const int> source) const {
  Encoded enc = infer_.encode(source);
  enc.model_uid = uid_;
  return enc;
}

StepOutput Seq2Seq::finish_step(DecoderState state, const Var& logits) const {
  const auto values = logits.value().data();
  std::vector<double> wide(values.begin(), values.end());
  return {log_softmax_values<double>(wide), std::move(state)};
}

StepOutput Seq2Seq::start(const Encoded& enc) const {
  if (enc.model_uid != uid_) throw ContractError("encoder output belongs to a different model");
  DecoderState state = infer_.initial_state(enc);
  Var logits = infer_.step(state, kBos, enc);
  return finish_step(std::move(state), logits);
}

StepOutput Seq2Seq::decode_step(const DecoderState& state, int token, const Encoded& enc) const {
  if (state.model_uid != uid_ || enc.model_uid != uid_) {
    throw ContractError("decoder state belongs to a different model");
  }
  check_token(token);
  DecoderState next = state;
  Var logits = infer_.step(next, token, enc);
  return finish_step(std::move(next), logits);
}

std::vector<double> Seq2Seq::token_logprobs(std::span<const int> source, std::span<const int> target) const {
  if (target.empty() || target.back() != kEos) throw ContractError("sequence_logprob: target must end with EOS");
  for (int y : target) check_token(y);
  const Encoded enc = encode(source);
  std::vector<double> out;
  out.reserve(target.size());
  StepOutput step = start(enc);
  for (std::size_t i = 0; i < target.size(); ++i) {
    out.push_back(step.logprobs[static_cast<std::size_t>(target[i])]);
    if (i + 1 < target.size()) step = decode_step(step.state, target[i], enc);
  }
  return out;
}

double Seq2Seq::sequence_logprob(std::span<const int> source, std::span<const int> target) const {
  double total = 0.0;
  for (double lp : token_logprobs(source, target)) total += lp;
  return total;
}

std::vector<Tensor> Seq2Seq::hidden_states(std::span<const int> source, std::span<const int> target) const {
  for (int y : target) check_token(y);
  const Encoded enc = encode(source);
  std::vector<Tensor> out;
  out.reserve(target.size());
  DecoderState state = start(enc).state;
  for (int y : target) {
    state = decode_step(state, y, enc).state;
    out.push_back(state.hidden());
  }
  return out;
}

std::vector<int> Seq2Seq::sample_continuation(std::span<const int> source, std::span<const int> prefix,
                                              Rng& rng) const {
  std::vector<int> y(prefix.begin(), prefix.end());
  if (!y.empty() && y.back() == kEos) return y;
  for (int tok : y) check_token(tok);
  const Encoded enc = encode(source);
  StepOutput step = start(enc);
  for (int tok : y) step = decode_step(step.state, tok, enc);
  std::vector<double> weights(config_.target_vocab);
  while (true) {
    if (y.size() + 1 >= config_.max_length) {
      y.push_back(kEos);
      break;
    }
    for (std::size_t v = 0; v < weights.size(); ++v) {
      weights[v] = is_special(static_cast<int>(v)) && static_cast<int>(v) != kEos ? 0.0 : std::exp(step.logprobs[v]);
    }
    const int tok = static_cast<int>(rng.categorical(weights));
    y.push_back(tok);
    if (tok == kEos) break;
    step = decode_step(step.state, tok, enc);
  }
  return y;
}

Checkpoint Seq2Seq::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.set_type("seq2seq");
  save_to(ckpt, "");
  return ckpt;
}

Seq2Seq Seq2Seq::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.type() != "seq2seq") throw LoadError("checkpoint type '" + ckpt.type() + "' is not seq2seq");
  return load_from(ckpt, "");
}

void Seq2Seq::save_to(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.set_meta(prefix + "source_vocab", static_cast<double>(config_.source_vocab));
  ckpt.set_meta(prefix + "target_vocab", static_cast<double>(config_.target_vocab));
  ckpt.set_meta(prefix + "hidden", static_cast<double>(config_.hidden));
  ckpt.set_meta(prefix + "layers", static_cast<double>(config_.layers));
  ckpt.set_meta(prefix + "attention", config_.attention ? 1.0 : 0.0);
  ckpt.set_meta(prefix + "max_length", static_cast<double>(config_.max_length));
  ckpt.set_meta(prefix + "trained", trained_ ? 1.0 : 0.0);
  ckpt.add_parameters(params_, prefix);
}

Seq2Seq Seq2Seq::load_from(const Checkpoint& ckpt, const std::string& prefix) {
  Seq2SeqConfig c;
  c.source_vocab = static_cast<std::size_t>(ckpt.meta(prefix + "source_vocab"));
  c.target_vocab = static_cast<std::size_t>(ckpt.meta(prefix + "target_vocab"));
  c.hidden = static_cast<std::size_t>(ckpt.meta(prefix + "hidden"));
  c.layers = static_cast<std::size_t>(ckpt.meta(prefix + "layers"));
  c.attention = ckpt.meta(prefix + "attention") != 0.0;
  c.max_length = static_cast<std::size_t>(ckpt.meta(prefix + "max_length"));
  Seq2Seq model(c, 0);
  ckpt.load_parameters(model.params_, prefix);
  model.trained_ = ckpt.meta(prefix + "trained") != 0.0;
  return model;
}

}  // namespace fdq
