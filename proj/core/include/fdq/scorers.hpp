#pragma once

#include <functional>

#include "fdq/decode.hpp"
#include "fdq/value.hpp"

namespace fdq {

// −((L − t) − Q(h_t))² for a non-EOS candidate at position t; an EOS
// candidate at position t ends a sequence of t − 1 tokens and scores
// −(L − (t − 1))², which is zero exactly at t = L + 1.
class LengthScorer : public Scorer {
 public:
  explicit LengthScorer(const LengthRegressor& q) : q_(q) {}
  std::unique_ptr<ScorerSession> open(std::span<const int> source) const override;
  bool needs_hidden() const override { return true; }
  std::string name() const override { return "length"; }

 private:
  const LengthRegressor& q_;
};

// Option 1: Q(h_t) estimates log p(X|Y) of the eventual full target.
class BackwardRegressorScorer : public Scorer {
 public:
  explicit BackwardRegressorScorer(const BackwardRegressor& q) : q_(q) {}
  std::unique_ptr<ScorerSession> open(std::span<const int> source) const override;
  bool needs_hidden() const override { return true; }
  std::string name() const override { return "backward_opt1"; }

 private:
  const BackwardRegressor& q_;
};

// Option 2: log p(X | y_{1:t}) from the bucket model for t.
class PartialBackwardScorer : public Scorer {
 public:
  explicit PartialBackwardScorer(const PartialBackwardEnsemble& q) : q_(q) {}
  std::unique_ptr<ScorerSession> open(std::span<const int> source) const override;
  std::string name() const override { return "backward_opt2"; }

 private:
  const PartialBackwardEnsemble& q_;
};

class OutcomeScorer : public Scorer {
 public:
  explicit OutcomeScorer(const OutcomePredictor& q) : q_(q) {}
  std::unique_ptr<ScorerSession> open(std::span<const int> source) const override;
  std::string name() const override { return "outcome"; }

 private:
  const OutcomePredictor& q_;
};

// Arbitrary scoring function; used by tests and oracles.
class FunctionScorer : public Scorer {
 public:
  using Fn = std::function<double(std::span<const int> source, const ScoreQuery& query)>;
  FunctionScorer(Fn fn, bool needs_hidden, std::string name = "function")
      : fn_(std::move(fn)), needs_hidden_(needs_hidden), name_(std::move(name)) {}
  std::unique_ptr<ScorerSession> open(std::span<const int> source) const override;
  bool needs_hidden() const override { return needs_hidden_; }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  bool needs_hidden_;
  std::string name_;
};

}  // namespace fdq
