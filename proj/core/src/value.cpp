#include "fdq/value.hpp"

#include "fdq/error.hpp"
#include "fdq/ops.hpp"
#include "fdq/vocab.hpp"

namespace fdq {

namespace {

void require_trained(const Seq2Seq& model, const char* what) {
  if (!model.trained()) throw ContractError(std::string(what) + " model is not trained");
}

std::vector<int> content_of(const SequencePair& p) {
  return {p.target.begin(), p.target.begin() + static_cast<std::ptrdiff_t>(p.length())};
}

std::vector<int> with_eos(std::span<const int> ids) {
  std::vector<int> out(ids.begin(), ids.end());
  out.push_back(kEos);
  return out;
}

void check_type(const Checkpoint& ckpt, const std::string& expected) {
  if (ckpt.type() != expected) throw LoadError("checkpoint type '" + ckpt.type() + "' is not " + expected);
}

}  // namespace

// ---- length ----------------------------------------------------------------

HiddenExamples length_examples(const Seq2Seq& forward, const Corpus& corpus) {
  require_trained(forward, "forward");
  HiddenExamples ex;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = corpus.pairs[i];
    const std::size_t n = p.length();
    if (n == 0) continue;
    auto hs = forward.hidden_states(encoder_input(p.source), content_of(p));
    for (std::size_t t = 1; t <= n; ++t) {
      ex.features.push_back(std::move(hs[t - 1]));
      ex.labels.push_back(static_cast<double>(n - t));
      ex.pair_index.push_back(i);
      ex.position.push_back(t);
    }
  }
  return ex;
}

Checkpoint LengthRegressor::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.set_type("q_length");
  head_.save_to(ckpt, "head/");
  return ckpt;
}

LengthRegressor LengthRegressor::from_checkpoint(const Checkpoint& ckpt) {
  check_type(ckpt, "q_length");
  return LengthRegressor(Regressor::load_from(ckpt, "head/"));
}

std::pair<LengthRegressor, RegressionReport> train_length_q(const Seq2Seq& forward, const Corpus& train,
                                                            const Corpus& dev, const RegressionSchedule& schedule) {
  const auto tr = length_examples(forward, train);
  const auto dv = length_examples(forward, dev);
  const std::size_t h = forward.config().hidden;
  Regressor head(h, h, derive_seed(schedule.seed, "q_length"));
  auto report = head.fit(tr.features, tr.labels, dv.features, dv.labels, schedule);
  return {LengthRegressor(std::move(head)), report};
}

// ---- backward probability ----------------------------------------------------

double backward_logprob(const Seq2Seq& backward, std::span<const int> source, std::span<const int> target_content) {
  return backward.sequence_logprob(encoder_input(target_content), with_eos(source));
}

Seq2Seq train_backward_model(const Corpus& train, const Corpus* dev, const Seq2SeqConfig& shape,
                             const TrainSchedule& schedule, std::uint64_t init_seed, TrainReport* report) {
  Corpus tr = swapped(train);
  std::optional<Corpus> dv;
  if (dev) dv = swapped(*dev);
  Seq2SeqConfig c = shape;
  c.source_vocab = tr.vocab.source.size();
  c.target_vocab = tr.vocab.target.size();
  Seq2Seq model(c, init_seed);
  auto r = train_mle(model, tr, dv ? &*dv : nullptr, schedule);
  if (report) *report = r;
  return model;
}

HiddenExamples backward_examples(const Seq2Seq& forward, const Seq2Seq& backward, const Corpus& corpus) {
  require_trained(forward, "forward");
  require_trained(backward, "backward");
  HiddenExamples ex;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = corpus.pairs[i];
    const std::size_t n = p.length();
    if (n == 0) continue;
    const auto content = content_of(p);
    const double label = backward_logprob(backward, p.source, content);
    auto hs = forward.hidden_states(encoder_input(p.source), content);
    for (std::size_t t = 1; t <= n; ++t) {
      ex.features.push_back(std::move(hs[t - 1]));
      ex.labels.push_back(label);
      ex.pair_index.push_back(i);
      ex.position.push_back(t);
    }
  }
  return ex;
}

Checkpoint BackwardRegressor::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.set_type("q_backward_opt1");
  head_.save_to(ckpt, "head/");
  return ckpt;
}

BackwardRegressor BackwardRegressor::from_checkpoint(const Checkpoint& ckpt) {
  check_type(ckpt, "q_backward_opt1");
  return BackwardRegressor(Regressor::load_from(ckpt, "head/"));
}

std::pair<BackwardRegressor, RegressionReport> train_backward_q_option1(const Seq2Seq& forward,
                                                                        const Seq2Seq& backward, const Corpus& train,
                                                                        const Corpus& dev,
                                                                        const RegressionSchedule& schedule) {
  const auto tr = backward_examples(forward, backward, train);
  const auto dv = backward_examples(forward, backward, dev);
  const std::size_t h = forward.config().hidden;
  Regressor head(h, h, derive_seed(schedule.seed, "q_backward_opt1"));
  auto report = head.fit(tr.features, tr.labels, dv.features, dv.labels, schedule);
  return {BackwardRegressor(std::move(head)), report};
}

BucketSpec BucketSpec::standard() { return {{{1, 2}, {3, 4}, {5, 7}, {8, 12}, {13, 0}}}; }

void BucketSpec::validate() const {
  if (ranges.empty()) throw ConfigError("bucket spec is empty");
  std::size_t expect = 1;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const auto [lo, hi] = ranges[i];
    if (lo != expect) throw ConfigError("buckets must be contiguous from 1; bucket " + std::to_string(i) + " starts at " + std::to_string(lo));
    if (hi == 0) {
      if (i + 1 != ranges.size()) throw ConfigError("only the last bucket may be unbounded");
      return;
    }
    if (hi < lo) throw ConfigError("bucket " + std::to_string(i) + " has hi < lo");
    expect = hi + 1;
  }
}

std::size_t BucketSpec::bucket_of(std::size_t t) const {
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (t >= ranges[i].first && (ranges[i].second == 0 || t <= ranges[i].second)) return i;
  }
  throw ContractError("no bucket holds prefix length " + std::to_string(t));
}

std::vector<Corpus> partial_corpora(const Corpus& corpus, const BucketSpec& buckets, bool full_targets_only) {
  buckets.validate();
  std::vector<Corpus> out(buckets.ranges.size());
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].vocab.source = corpus.vocab.target;
    out[b].vocab.target = corpus.vocab.source;
    out[b].provenance = corpus.provenance + "/bucket" + std::to_string(b);
  }
  for (const auto& p : corpus.pairs) {
    const std::size_t n = p.length();
    for (std::size_t t = full_targets_only ? n : 1; t <= n && t >= 1; ++t) {
      SequencePair s;
      s.source.assign(p.target.begin(), p.target.begin() + static_cast<std::ptrdiff_t>(t));
      s.target = with_eos(p.source);
      out[buckets.bucket_of(t)].pairs.push_back(std::move(s));
    }
  }
  return out;
}

PartialBackwardEnsemble::PartialBackwardEnsemble(BucketSpec buckets, std::vector<std::optional<Seq2Seq>> models)
    : buckets_(std::move(buckets)), models_(std::move(models)) {
  buckets_.validate();
  if (models_.size() != buckets_.ranges.size()) throw ContractError("ensemble needs one slot per bucket");
}

const Seq2Seq& PartialBackwardEnsemble::model(std::size_t bucket) const {
  if (bucket >= models_.size() || !models_[bucket]) {
    throw MissingModelError("no partial-target model for bucket " + std::to_string(bucket));
  }
  return *models_[bucket];
}

double PartialBackwardEnsemble::estimate(std::span<const int> source, std::span<const int> prefix) const {
  std::size_t t = prefix.size();
  if (t > 0 && prefix[t - 1] == kEos) --t;
  const auto content = prefix.first(t);
  return backward_logprob(model(buckets_.bucket_of(std::max<std::size_t>(t, 1))), source, content);
}

Checkpoint PartialBackwardEnsemble::bucket_checkpoint(std::size_t bucket) const {
  Checkpoint ckpt;
  ckpt.set_type("q_backward_opt2_bucket");
  ckpt.set_meta("bucket", static_cast<double>(bucket));
  ckpt.set_meta("bucket_count", static_cast<double>(buckets_.ranges.size()));
  for (std::size_t i = 0; i < buckets_.ranges.size(); ++i) {
    ckpt.set_meta("bucket_lo/" + std::to_string(i), static_cast<double>(buckets_.ranges[i].first));
    ckpt.set_meta("bucket_hi/" + std::to_string(i), static_cast<double>(buckets_.ranges[i].second));
  }
  model(bucket).save_to(ckpt, "model/");
  return ckpt;
}

PartialBackwardEnsemble PartialBackwardEnsemble::from_checkpoints(const std::vector<Checkpoint>& parts) {
  if (parts.empty()) throw LoadError("no partial-target checkpoints");
  BucketSpec spec;
  const auto count = static_cast<std::size_t>(parts[0].meta("bucket_count"));
  for (std::size_t i = 0; i < count; ++i) {
    spec.ranges.emplace_back(static_cast<std::size_t>(parts[0].meta("bucket_lo/" + std::to_string(i))),
                             static_cast<std::size_t>(parts[0].meta("bucket_hi/" + std::to_string(i))));
  }
  std::vector<std::optional<Seq2Seq>> models(count);
  for (const auto& part : parts) {
    check_type(part, "q_backward_opt2_bucket");
    const auto b = static_cast<std::size_t>(part.meta("bucket"));
    if (b >= count || static_cast<std::size_t>(part.meta("bucket_count")) != count) {
      throw LoadError("inconsistent partial-target checkpoints");
    }
    models[b].emplace(Seq2Seq::load_from(part, "model/"));
  }
  return PartialBackwardEnsemble(std::move(spec), std::move(models));
}

PartialBackwardEnsemble train_backward_q_option2(const Corpus& train, const Corpus* dev, const BucketSpec& buckets,
                                                 bool full_targets_only, const Seq2SeqConfig& shape,
                                                 const TrainSchedule& schedule, std::uint64_t init_seed,
                                                 EnsembleReport* report) {
  auto parts = partial_corpora(train, buckets, full_targets_only);
  std::vector<Corpus> dev_parts;
  if (dev) dev_parts = partial_corpora(*dev, buckets, full_targets_only);
  std::vector<std::optional<Seq2Seq>> models(parts.size());
  for (std::size_t b = 0; b < parts.size(); ++b) {
    if (report) report->examples.push_back(parts[b].size());
    if (parts[b].empty()) continue;
    Seq2SeqConfig c = shape;
    c.source_vocab = parts[b].vocab.source.size();
    c.target_vocab = parts[b].vocab.target.size();
    models[b].emplace(c, derive_seed(init_seed, "bucket", b));
    const Corpus* dv = (dev && !dev_parts[b].empty()) ? &dev_parts[b] : nullptr;
    TrainSchedule s = schedule;
    s.seed = derive_seed(schedule.seed, "bucket", b);
    auto r = train_mle(*models[b], parts[b], dv, s);
    if (report) report->reports.push_back(r);
  }
  return PartialBackwardEnsemble(buckets, std::move(models));
}

// ---- outcome ------------------------------------------------------------------

template <typename T>
OutcomeLayout declare_outcome(const OutcomeConfig& c, BasicParameterSet<T>& params) {
  if (c.source_vocab == 0 || c.target_vocab == 0 || c.hidden == 0) throw ConfigError("outcome predictor: bad sizes");
  const std::size_t h = c.hidden;
  auto add = [&](std::string name, Shape shape) {
    params.add(std::move(name), std::move(shape));
    return params.size() - 1;
  };
  OutcomeLayout l;
  l.src_embed = add("src_embed", {c.source_vocab, h});
  l.tgt_embed = add("tgt_embed", {c.target_vocab, h});
  l.src_w = add("src_enc/w", {4 * h, 2 * h});
  l.src_b = add("src_enc/b", {4 * h});
  l.tgt_w = add("tgt_enc/w", {4 * h, 2 * h});
  l.tgt_b = add("tgt_enc/b", {4 * h});
  l.head = declare_mlp(params, "head/", 2 * h, h);
  return l;
}

template <typename T>
BasicVar<T> outcome_forward(std::span<const BasicVar<T>> p, const OutcomeLayout& l, std::size_t hidden,
                            std::span<const int> source, std::span<const int> prefix) {
  const BasicLstmParams<T> src_lstm{p[l.src_w], p[l.src_b]};
  const BasicLstmParams<T> tgt_lstm{p[l.tgt_w], p[l.tgt_b]};
  auto src = run_lstm_stack<T>(p[l.src_embed], std::span(&src_lstm, 1), source, hidden);
  auto tgt = run_lstm_stack<T>(p[l.tgt_embed], std::span(&tgt_lstm, 1), prefix, hidden);
  return mlp_forward<T>(p, l.head, concat(src.second.back().h, tgt.second.back().h));
}

template OutcomeLayout declare_outcome<float>(const OutcomeConfig&, BasicParameterSet<float>&);
template OutcomeLayout declare_outcome<double>(const OutcomeConfig&, BasicParameterSet<double>&);
template BasicVar<float> outcome_forward<float>(std::span<const BasicVar<float>>, const OutcomeLayout&, std::size_t,
                                                std::span<const int>, std::span<const int>);
template BasicVar<double> outcome_forward<double>(std::span<const BasicVar<double>>, const OutcomeLayout&,
                                                  std::size_t, std::span<const int>, std::span<const int>);

OutcomePredictor::OutcomePredictor(const OutcomeConfig& config, std::uint64_t seed)
    : config_(config), layout_(declare_outcome(config_, params_)) {
  Rng rng(seed);
  params_.init_uniform(rng, 0.08);
  borrowed_ = borrowed_params(params_);
}

void OutcomePredictor::check(std::span<const int> source, std::span<const int> prefix) const {
  for (int id : source) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.source_vocab) {
      throw ContractError("outcome predictor: source id " + std::to_string(id) + " outside vocab");
    }
  }
  if (prefix.empty()) throw ContractError("outcome predictor: empty prefix");
  for (int id : prefix) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.target_vocab) {
      throw ContractError("outcome predictor: prefix id " + std::to_string(id) + " outside vocab");
    }
  }
}

double OutcomePredictor::predict(std::span<const int> source, std::span<const int> prefix) const {
  check(source, prefix);
  Var out = outcome_forward<float>(borrowed_, layout_, config_.hidden, encoder_input(source), prefix);
  return labels_.denormalize(out.item());
}

OutcomePredictor::Session::Session(const OutcomePredictor& owner, std::span<const int> source) : owner_(owner) {
  owner.check(source, std::vector<int>{kEos});
  const auto& l = owner.layout_;
  const LstmParams lstm{owner.borrowed_[l.src_w], owner.borrowed_[l.src_b]};
  source_final_ = run_lstm_stack<float>(owner.borrowed_[l.src_embed], std::span(&lstm, 1), encoder_input(source),
                                        owner.config_.hidden)
                      .second.back()
                      .h;
}

const LstmState& OutcomePredictor::Session::state_for(std::span<const int> prefix) {
  std::vector<int> key(prefix.begin(), prefix.end());
  auto it = states_.find(key);
  if (it != states_.end()) return it->second;
  const auto& l = owner_.layout_;
  const auto& p = owner_.borrowed_;
  LstmState next;
  if (prefix.empty()) {
    const std::size_t h = owner_.config_.hidden;
    next = {constant(Tensor({h})), constant(Tensor({h}))};
  } else {
    const LstmState& parent = state_for(prefix.first(prefix.size() - 1));
    next = lstm_step<float>({p[l.tgt_w], p[l.tgt_b]}, row(p[l.tgt_embed], prefix.back()), parent);
  }
  return states_.emplace(std::move(key), std::move(next)).first->second;
}

double OutcomePredictor::Session::predict(std::span<const int> prefix) {
  owner_.check(std::span<const int>(), prefix);
  const LstmState& s = state_for(prefix);
  Var out = mlp_forward<float>(owner_.borrowed_, owner_.layout_.head, concat(source_final_, s.h));
  return owner_.labels_.denormalize(out.item());
}

Checkpoint OutcomePredictor::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.set_type("q_outcome");
  ckpt.set_meta("source_vocab", static_cast<double>(config_.source_vocab));
  ckpt.set_meta("target_vocab", static_cast<double>(config_.target_vocab));
  ckpt.set_meta("hidden", static_cast<double>(config_.hidden));
  ckpt.set_meta("label_mean", labels_.mean);
  ckpt.set_meta("label_scale", labels_.scale);
  ckpt.add_parameters(params_);
  return ckpt;
}

OutcomePredictor OutcomePredictor::from_checkpoint(const Checkpoint& ckpt) {
  check_type(ckpt, "q_outcome");
  OutcomeConfig c;
  c.source_vocab = static_cast<std::size_t>(ckpt.meta("source_vocab"));
  c.target_vocab = static_cast<std::size_t>(ckpt.meta("target_vocab"));
  c.hidden = static_cast<std::size_t>(ckpt.meta("hidden"));
  OutcomePredictor q(c, 0);
  q.labels_.mean = ckpt.meta("label_mean");
  q.labels_.scale = ckpt.meta("label_scale");
  ckpt.load_parameters(q.params_);
  return q;
}

std::pair<OutcomePredictor, RegressionReport> train_outcome_q(const std::vector<RolloutRecord>& train,
                                                              const std::vector<RolloutRecord>& dev,
                                                              const OutcomeConfig& config,
                                                              const RegressionSchedule& schedule) {
  if (train.empty()) throw ContractError("train_outcome_q: no rollout records");
  if (dev.empty()) throw ContractError("train_outcome_q: no dev rollout records");
  OutcomePredictor q(config, derive_seed(schedule.seed, "q_outcome"));
  std::vector<double> y, dev_y;
  for (const auto& r : train) y.push_back(r.q);
  for (const auto& r : dev) dev_y.push_back(r.q);
  q.set_labels(LabelScale::fit(y));
  std::vector<std::vector<int>> sources;
  for (const auto& r : train) {
    q.check(r.source, r.prefix);
    sources.push_back(encoder_input(r.source));
  }

  auto batch_loss = [&](Tape& tape, std::span<const std::size_t> idx) {
    auto p = tape_params(tape, q.params());
    std::vector<Var> terms;
    for (std::size_t i : idx) {
      Var out = outcome_forward<float>(p, q.layout(), config.hidden, sources[i], train[i].prefix);
      Var d = sub(out, tape.constant(Tensor::vector({static_cast<float>(q.labels().normalize(y[i]))})));
      terms.push_back(mul(d, d));
    }
    return add_n<float>(terms);
  };
  auto predictions = [&](const std::vector<RolloutRecord>& recs) {
    std::vector<double> out;
    for (const auto& r : recs) out.push_back(q.predict(r.source, r.prefix));
    return out;
  };
  auto dev_mse = [&] { return mean_squared_error(predictions(dev), dev_y); };

  RegressionReport report;
  report.epochs = fit_regression(q.params(), train.size(), batch_loss, dev_mse, schedule, &report.mse);
  report.baseline_mse = constant_baseline_mse(y, dev_y);
  report.train_mse = mean_squared_error(predictions(train), y);
  return {std::move(q), report};
}

}  // namespace fdq
