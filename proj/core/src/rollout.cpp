#include "fdq/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "fdq/decode.hpp"
#include "fdq/error.hpp"
#include "fdq/metrics.hpp"
#include "fdq/vocab.hpp"

namespace fdq {

OutcomeMetric parse_outcome_metric(const std::string& name) {
  if (name == "bleu") return OutcomeMetric::bleu;
  if (name == "rouge2") return OutcomeMetric::rouge2;
  throw ConfigError("unknown outcome metric '" + name + "'");
}

std::string to_string(OutcomeMetric metric) { return metric == OutcomeMetric::bleu ? "bleu" : "rouge2"; }

double outcome_score(OutcomeMetric metric, std::span<const int> completed, std::span<const int> gold) {
  if (metric == OutcomeMetric::rouge2) return rouge2(completed, gold);
  BleuConfig c;
  c.smoothing = true;
  return sentence_bleu(completed, gold, c);
}

std::vector<RolloutRecord> generate_rollouts(const Seq2Seq& model, const Corpus& corpus, const RolloutConfig& config) {
  if (config.positions < 1 || config.samples < 1 || config.beam < 1) {
    throw ConfigError("rollouts need positive positions, samples and beam size");
  }
  DecodeConfig complete;
  complete.beam = config.beam;
  DecodeConfig greedy;
  greedy.beam = 1;

  std::vector<RolloutRecord> records;
  std::vector<double> weights(model.config().target_vocab);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& pair = corpus.pairs[i];
    const std::uint64_t seed = derive_seed(config.seed, "rollout", i);
    Rng rng(seed);
    const std::vector<int> source = encoder_input(pair.source);

    std::vector<int> reference;
    if (config.gold_prefix) {
      reference.assign(pair.target.begin(), pair.target.begin() + static_cast<std::ptrdiff_t>(pair.length()));
    } else {
      reference = beam_search(model, source, greedy).best().tokens;
      reference.pop_back();
    }
    const std::size_t n = reference.size();
    if (n == 0) continue;

    // Position n + 1 is the EOS decision.
    std::vector<std::size_t> positions(n + 1);
    for (std::size_t t = 0; t <= n; ++t) positions[t] = t + 1;
    if (positions.size() > config.positions) {
      rng.shuffle(positions);
      positions.resize(config.positions);
      std::sort(positions.begin(), positions.end());
    }

    const Encoded enc = model.encode(source);
    for (std::size_t t : positions) {
      StepOutput step = model.start(enc);
      for (std::size_t k = 0; k + 1 < t; ++k) step = model.decode_step(step.state, reference[k], enc);
      for (std::size_t v = 0; v < weights.size(); ++v) {
        const int tok = static_cast<int>(v);
        weights[v] = (tok == kPad || tok == kBos) ? 0.0 : std::exp(step.logprobs[v]);
      }
      for (std::size_t m = 0; m < config.samples; ++m) {
        RolloutRecord r;
        r.source = pair.source;
        r.prefix.assign(reference.begin(), reference.begin() + static_cast<std::ptrdiff_t>(t - 1));
        r.prefix.push_back(static_cast<int>(rng.categorical(weights)));
        r.t = t;
        if (r.prefix.back() == kEos) {
          r.completed = r.prefix;
        } else {
          r.completed = beam_search(model, source, complete, nullptr, r.prefix).best().tokens;
        }
        r.q = outcome_score(config.metric, r.completed, pair.target);
        r.seed = seed;
        records.push_back(std::move(r));
      }
    }
  }
  return records;
}

void save_rollouts(const std::vector<RolloutRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path);
  for (const auto& r : records) {
    nlohmann::json j = {{"src", r.source}, {"prefix", r.prefix}, {"t", r.t},
                        {"completed", r.completed}, {"q", r.q}, {"seed", r.seed}};
    out << j.dump() << '\n';
  }
}

std::vector<RolloutRecord> load_rollouts(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path);
  std::vector<RolloutRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      RolloutRecord r;
      j.at("src").get_to(r.source);
      j.at("prefix").get_to(r.prefix);
      j.at("t").get_to(r.t);
      j.at("completed").get_to(r.completed);
      j.at("q").get_to(r.q);
      j.at("seed").get_to(r.seed);
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace fdq
