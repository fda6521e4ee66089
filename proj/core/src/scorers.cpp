#include "fdq/scorers.hpp"

#include <map>

#include "fdq/error.hpp"
#include "fdq/vocab.hpp"

namespace fdq {

namespace {

const Tensor& need_hidden(const ScoreQuery& q, const char* who) {
  if (!q.hidden) throw ContractError(std::string(who) + " scorer needs the decoder hidden state");
  return *q.hidden;
}

class LengthSession : public ScorerSession {
 public:
  explicit LengthSession(const LengthRegressor& q) : q_(q) {}
  double term(const ScoreQuery& query) override {
    if (!query.target_length) throw ContractError("length scorer needs a target length L");
    const double l = static_cast<double>(*query.target_length);
    const double t = static_cast<double>(query.prefix.size());
    if (!query.prefix.empty() && query.prefix.back() == kEos) {
      const double gap = l - (t - 1.0);
      return -gap * gap;
    }
    const double gap = (l - t) - q_.predict(need_hidden(query, "length"));
    return -gap * gap;
  }

 private:
  const LengthRegressor& q_;
};

class BackwardRegressorSession : public ScorerSession {
 public:
  explicit BackwardRegressorSession(const BackwardRegressor& q) : q_(q) {}
  double term(const ScoreQuery& query) override { return q_.predict(need_hidden(query, "backward_opt1")); }

 private:
  const BackwardRegressor& q_;
};

class PartialBackwardSession : public ScorerSession {
 public:
  PartialBackwardSession(const PartialBackwardEnsemble& q, std::span<const int> source)
      : q_(q), source_(source.begin(), source.end()) {}
  double term(const ScoreQuery& query) override {
    std::vector<int> key(query.prefix.begin(), query.prefix.end());
    if (!key.empty() && key.back() == kEos) key.pop_back();
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double v = q_.estimate(source_, key);
    cache_.emplace(std::move(key), v);
    return v;
  }

 private:
  const PartialBackwardEnsemble& q_;
  std::vector<int> source_;
  std::map<std::vector<int>, double> cache_;
};

class OutcomeSession : public ScorerSession {
 public:
  OutcomeSession(const OutcomePredictor& q, std::span<const int> source) : session_(q, source) {}
  double term(const ScoreQuery& query) override { return session_.predict(query.prefix); }

 private:
  OutcomePredictor::Session session_;
};

class FunctionSession : public ScorerSession {
 public:
  FunctionSession(const FunctionScorer::Fn& fn, std::span<const int> source)
      : fn_(fn), source_(source.begin(), source.end()) {}
  double term(const ScoreQuery& query) override { return fn_(source_, query); }

 private:
  const FunctionScorer::Fn& fn_;
  std::vector<int> source_;
};

}  // namespace

std::unique_ptr<ScorerSession> LengthScorer::open(std::span<const int>) const {
  return std::make_unique<LengthSession>(q_);
}

std::unique_ptr<ScorerSession> BackwardRegressorScorer::open(std::span<const int>) const {
  return std::make_unique<BackwardRegressorSession>(q_);
}

std::unique_ptr<ScorerSession> PartialBackwardScorer::open(std::span<const int> source) const {
  return std::make_unique<PartialBackwardSession>(q_, source);
}

std::unique_ptr<ScorerSession> OutcomeScorer::open(std::span<const int> source) const {
  return std::make_unique<OutcomeSession>(q_, source);
}

std::unique_ptr<ScorerSession> FunctionScorer::open(std::span<const int> source) const {
  return std::make_unique<FunctionSession>(fn_, source);
}

}  // namespace fdq
