#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdq/seq2seq.hpp"

namespace fdq {

enum class DecodeMode { sbs, length_q, mmi_q, outcome_q, mmi_rerank, exhaustive };

DecodeMode parse_decode_mode(const std::string& name);
std::string to_string(DecodeMode mode);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::sbs;
  std::size_t beam = 7;
  double weight = 0.0;
  std::optional<std::size_t> target_length;  // L
  std::size_t nbest = 0;                     // rerank list size; 0 means the beam size
  std::size_t max_length = 0;                // token cap incl. EOS; 0 means the model's cap
  // Select a hypothesis that emits EOS at step L + 1.
  bool force_length = false;
  // With force_length, forbid EOS before step L + 1.
  bool mask_early_eos = true;
};

// What a value estimator sees for one candidate extension.
struct ScoreQuery {
  std::span<const int> prefix;  // y_{1:t}, candidate last
  // h_t after the candidate (or h_{t-1} when the candidate is EOS); null
  // unless the scorer asked for hidden states.
  const Tensor* hidden = nullptr;
  std::optional<std::size_t> target_length;
};

// Per-source state, e.g. caches keyed by prefix.
class ScorerSession {
 public:
  virtual ~ScorerSession() = default;
  // The term added (times the weight) to the cumulative log-probability.
  virtual double term(const ScoreQuery& query) = 0;
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::unique_ptr<ScorerSession> open(std::span<const int> source) const = 0;
  virtual bool needs_hidden() const { return false; }
  virtual std::string name() const = 0;
};

struct Hypothesis {
  std::vector<int> tokens;  // ends with EOS once finished
  double logp = 0.0;        // cumulative log p(tokens | X)
  double q_term = 0.0;      // latest Q term (not accumulated)
  double combined = 0.0;    // logp + weight · q_term
  bool finished = false;
};

// Sorted by combined score, best first.
struct NBestList {
  std::vector<Hypothesis> hyps;
  const Hypothesis& best() const { return hyps.front(); }
};

// Higher score first; equal scores fall back to the token sequences compared
// lexicographically (lower id first, then the shorter sequence).
bool ranks_before(double score_a, std::span<const int> a, double score_b, std::span<const int> b);

// Beam search over decodable tokens (everything but PAD and BOS). Each step
// keeps the best (B - finished) expansions by combined score; expansions
// ending in EOS retire to the finished pool. With a scorer, ranking uses
// logp + weight · term for every candidate. `prefix` (no EOS) is forced
// before the search starts.
NBestList beam_search(const Seq2Seq& model, std::span<const int> source, const DecodeConfig& config,
                      const Scorer* scorer = nullptr, std::span<const int> prefix = {});

// beam_search that requires a scorer (and L for the length mode).
NBestList guided_beam_search(const Seq2Seq& model, const Scorer& scorer, std::span<const int> source,
                             const DecodeConfig& config);

// EOS-at-L+1 protocol: EOS is masked (unless disabled) through step L; at
// step L + 1 the beam's EOS expansions form the pool and the one with the
// highest log p wins. With an empty pool decoding continues until the first
// EOS. The winner is first in the returned list.
NBestList length_forced_select(const Seq2Seq& model, const Scorer* scorer, std::span<const int> source,
                               const DecodeConfig& config);

// N-best list from beam_search rescored by log p(Y|X) + weight · log p(X|Y).
NBestList mmi_rerank(const Seq2Seq& forward, const Seq2Seq& backward, std::span<const int> source,
                     const DecodeConfig& config);

// Scores every EOS-terminated sequence up to the cap. Throws GuardError when
// (decodable tokens)^cap exceeds 10^6.
Hypothesis exhaustive_decode(const Seq2Seq& model, const Scorer* scorer, std::span<const int> source,
                             const DecodeConfig& config);

struct DecodeResources {
  const Seq2Seq* forward = nullptr;
  const Seq2Seq* backward = nullptr;  // mmi_rerank
  const Scorer* scorer = nullptr;     // guided modes
};

// Dispatches on config.mode; L (if any) is taken from `target_length`.
Hypothesis decode_one(const DecodeResources& res, std::span<const int> source, const DecodeConfig& config);

struct DecodeResult {
  std::size_t id = 0;
  Hypothesis hyp;
  double ms = 0.0;
  std::string error;  // empty on success
};

// One result per source, in order; a failing pair is recorded and skipped.
// lengths, when non-empty, gives L per source.
std::vector<DecodeResult> decode_corpus(const DecodeResources& res, const std::vector<std::vector<int>>& sources,
                                        const DecodeConfig& config, std::span<const std::size_t> lengths = {});

}  // namespace fdq
