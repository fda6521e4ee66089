#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdq/corpus.hpp"
#include "fdq/regressor.hpp"
#include "fdq/seq2seq.hpp"
#include "fdq/train.hpp"

namespace fdq {

// Teacher-forced regression data: one row per (pair, t), t = 1..N.
struct HiddenExamples {
  std::vector<Tensor> features;  // h_t
  std::vector<double> labels;
  std::vector<std::size_t> pair_index;
  std::vector<std::size_t> position;  // t
};

// ---- length ----------------------------------------------------------------

// Label N - t for h_t.
HiddenExamples length_examples(const Seq2Seq& forward, const Corpus& corpus);

class LengthRegressor {
 public:
  explicit LengthRegressor(Regressor head) : head_(std::move(head)) {}

  // Predicted number of tokens still to come after h_t.
  double predict(const Tensor& hidden) const { return head_.predict(hidden); }
  const Regressor& head() const { return head_; }
  Regressor& head() { return head_; }

  Checkpoint to_checkpoint() const;
  static LengthRegressor from_checkpoint(const Checkpoint& ckpt);

 private:
  Regressor head_;
};

std::pair<LengthRegressor, RegressionReport> train_length_q(const Seq2Seq& forward, const Corpus& train,
                                                            const Corpus& dev, const RegressionSchedule& schedule);

// ---- backward probability ----------------------------------------------------

// log p(X | Y) under a model trained on swapped pairs.
double backward_logprob(const Seq2Seq& backward, std::span<const int> source, std::span<const int> target_content);

Seq2Seq train_backward_model(const Corpus& train, const Corpus* dev, const Seq2SeqConfig& shape,
                             const TrainSchedule& schedule, std::uint64_t init_seed, TrainReport* report = nullptr);

// Option 1: label is log p(X | Y) of the full target, repeated for every t.
HiddenExamples backward_examples(const Seq2Seq& forward, const Seq2Seq& backward, const Corpus& corpus);

class BackwardRegressor {
 public:
  explicit BackwardRegressor(Regressor head) : head_(std::move(head)) {}

  double predict(const Tensor& hidden) const { return head_.predict(hidden); }
  const Regressor& head() const { return head_; }
  Regressor& head() { return head_; }

  Checkpoint to_checkpoint() const;
  static BackwardRegressor from_checkpoint(const Checkpoint& ckpt);

 private:
  Regressor head_;
};

std::pair<BackwardRegressor, RegressionReport> train_backward_q_option1(const Seq2Seq& forward,
                                                                        const Seq2Seq& backward, const Corpus& train,
                                                                        const Corpus& dev,
                                                                        const RegressionSchedule& schedule);

// Option 2: prefix-length buckets, each with its own y_{1:t} -> X model.
struct BucketSpec {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;  // inclusive; hi = 0 means unbounded

  static BucketSpec standard();  // [1-2], [3-4], [5-7], [8-12], [13+]
  // Throws ContractError if no bucket holds t.
  std::size_t bucket_of(std::size_t t) const;
  void validate() const;
};

// Per bucket, pairs (y_{1:t} -> X + EOS) for every t routed to it. With
// full_targets_only, only t = N contributes.
std::vector<Corpus> partial_corpora(const Corpus& corpus, const BucketSpec& buckets, bool full_targets_only);

class PartialBackwardEnsemble {
 public:
  PartialBackwardEnsemble(BucketSpec buckets, std::vector<std::optional<Seq2Seq>> models);

  const BucketSpec& buckets() const { return buckets_; }
  bool has_model(std::size_t bucket) const { return models_[bucket].has_value(); }
  const Seq2Seq& model(std::size_t bucket) const;

  // log p(X | y_{1:t}) from the model of t's bucket. A trailing EOS in the
  // prefix is ignored; an empty prefix is routed like t = 1 with a lone EOS
  // as the model input. Throws MissingModelError for an untrained bucket.
  double estimate(std::span<const int> source, std::span<const int> prefix) const;

  Checkpoint bucket_checkpoint(std::size_t bucket) const;
  static PartialBackwardEnsemble from_checkpoints(const std::vector<Checkpoint>& parts);

 private:
  BucketSpec buckets_;
  std::vector<std::optional<Seq2Seq>> models_;
};

struct EnsembleReport {
  std::vector<std::size_t> examples;  // per bucket
  std::vector<TrainReport> reports;   // per trained bucket, in bucket order
};

PartialBackwardEnsemble train_backward_q_option2(const Corpus& train, const Corpus* dev, const BucketSpec& buckets,
                                                 bool full_targets_only, const Seq2SeqConfig& shape,
                                                 const TrainSchedule& schedule, std::uint64_t init_seed,
                                                 EnsembleReport* report = nullptr);

// ---- outcome ------------------------------------------------------------------

struct RolloutRecord {
  std::vector<int> source;
  std::vector<int> prefix;     // y_{1:t}, sampled y_t last
  std::size_t t = 0;
  std::vector<int> completed;  // ends with EOS
  double q = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const RolloutRecord&) const = default;
};

struct OutcomeLayout {
  std::size_t src_embed = 0, tgt_embed = 0;
  std::size_t src_w = 0, src_b = 0, tgt_w = 0, tgt_b = 0;
  MlpLayout head;
};

struct OutcomeConfig {
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
  std::size_t hidden = 64;
};

template <typename T>
OutcomeLayout declare_outcome(const OutcomeConfig& config, BasicParameterSet<T>& params);

// Raw (normalized-space) prediction from two encoders joined into the head.
template <typename T>
BasicVar<T> outcome_forward(std::span<const BasicVar<T>> p, const OutcomeLayout& layout, std::size_t hidden,
                            std::span<const int> source, std::span<const int> prefix);

class OutcomePredictor {
 public:
  OutcomePredictor(const OutcomeConfig& config, std::uint64_t seed);

  const OutcomeConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const OutcomeLayout& layout() const { return layout_; }
  const LabelScale& labels() const { return labels_; }
  void set_labels(const LabelScale& s) { labels_ = s; }

  double predict(std::span<const int> source, std::span<const int> prefix) const;

  // Caches the source encoding and prefix-encoder states across queries that
  // share prefixes, as beam search does.
  class Session {
   public:
    Session(const OutcomePredictor& owner, std::span<const int> source);
    double predict(std::span<const int> prefix);

   private:
    const LstmState& state_for(std::span<const int> prefix);

    const OutcomePredictor& owner_;
    Var source_final_;
    std::map<std::vector<int>, LstmState> states_;
  };

  // Throws ContractError for ids outside the vocabularies or an empty prefix.
  void check(std::span<const int> source, std::span<const int> prefix) const;

  Checkpoint to_checkpoint() const;
  static OutcomePredictor from_checkpoint(const Checkpoint& ckpt);

 private:

  OutcomeConfig config_;
  ParameterSet params_;
  OutcomeLayout layout_;
  std::vector<Var> borrowed_;
  LabelScale labels_;
};

std::pair<OutcomePredictor, RegressionReport> train_outcome_q(const std::vector<RolloutRecord>& train,
                                                              const std::vector<RolloutRecord>& dev,
                                                              const OutcomeConfig& config,
                                                              const RegressionSchedule& schedule);

}  // namespace fdq
