#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdq/corpus.hpp"
#include "fdq/seq2seq.hpp"
#include "fdq/value.hpp"

namespace fdq {

enum class OutcomeMetric { bleu, rouge2 };

OutcomeMetric parse_outcome_metric(const std::string& name);
std::string to_string(OutcomeMetric metric);

// q(Y): smoothed sentence BLEU or ROUGE-2 F1 of the completion against gold.
double outcome_score(OutcomeMetric metric, std::span<const int> completed, std::span<const int> gold);

struct RolloutConfig {
  std::size_t positions = 4;  // K distinct positions of 1..N+1 per pair (all if N+1 <= K)
  std::size_t samples = 2;    // M samples per position
  std::size_t beam = 7;       // completion beam size
  OutcomeMetric metric = OutcomeMetric::bleu;
  // Prefixes y_{1:t-1} from the gold target; otherwise from the model's
  // greedy output.
  bool gold_prefix = true;
  std::uint64_t seed = 0;
};

// For each pair and chosen position t: sample y_t after the prefix, complete
// with beam search, score the completion. Pair i draws from its own
// generator derived from (seed, i), so records do not depend on order.
std::vector<RolloutRecord> generate_rollouts(const Seq2Seq& model, const Corpus& corpus, const RolloutConfig& config);

void save_rollouts(const std::vector<RolloutRecord>& records, const std::string& path);
std::vector<RolloutRecord> load_rollouts(const std::string& path);

}  // namespace fdq
