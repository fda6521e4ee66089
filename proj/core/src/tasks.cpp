#include "fdq/tasks.hpp"

#include <algorithm>
#include <cmath>

#include "fdq/error.hpp"
#include "fdq/rng.hpp"

namespace fdq {

TaskKind parse_task(const std::string& name) {
  if (name == "copy") return TaskKind::copy;
  if (name == "reverse") return TaskKind::reverse;
  if (name == "num2words") return TaskKind::num2words;
  if (name == "dialogue") return TaskKind::dialogue;
  throw ConfigError("unknown task '" + name + "'");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::num2words: return "num2words";
    case TaskKind::dialogue: return "dialogue";
  }
  return "?";
}

std::vector<std::string> number_words(int n) {
  static const char* const ones[] = {"zero",    "one",     "two",       "three",    "four",
                                     "five",    "six",     "seven",     "eight",    "nine",
                                     "ten",     "eleven",  "twelve",    "thirteen", "fourteen",
                                     "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
  static const char* const tens[] = {"", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"};
  if (n < 0 || n > 9999) throw ContractError("number_words covers 0..9999, got " + std::to_string(n));
  if (n == 0) return {"zero"};
  std::vector<std::string> w;
  if (n >= 1000) {
    w.push_back(ones[n / 1000]);
    w.push_back("thousand");
    n %= 1000;
  }
  if (n >= 100) {
    w.push_back(ones[n / 100]);
    w.push_back("hundred");
    n %= 100;
  }
  if (n >= 20) {
    w.push_back(tens[n / 10]);
    n %= 10;
    if (n > 0) w.push_back(ones[n]);
  } else if (n > 0) {
    w.push_back(ones[n]);
  }
  return w;
}

namespace dialogue {

bool is_focused(int template_id) { return template_id % 2 == 0; }

std::vector<std::pair<std::vector<std::string>, double>> replies(int k) {
  if (k < 0 || k >= kTemplates) throw ContractError("dialogue template out of range");
  std::vector<std::pair<std::vector<std::string>, double>> out;
  const std::string topic = "t" + std::to_string(k);
  auto specific = [&](int j) {
    return std::vector<std::string>{"o" + std::to_string(j), topic, "w" + std::to_string(j), "."};
  };
  if (is_focused(k)) {
    out.push_back({{"i", "dont", "know", "."}, 0.4});
    for (int j = 0; j < kFocusedSpecifics; ++j) out.push_back({specific(j), 0.2});
  } else {
    for (const char* p : {".", "!", "?", "..."}) out.push_back({{"i", "dont", "know", p}, 0.1});
    for (int j = 0; j < kDiffuseSpecifics; ++j) out.push_back({specific(j), 0.05});
  }
  return out;
}

bool is_generic(const std::vector<std::string>& reply) {
  return reply.size() == 4 && reply[0] == "i" && reply[1] == "dont" && reply[2] == "know";
}

std::optional<int> template_of(const std::vector<std::string>& source) {
  if (source.empty() || source[0].size() < 3 || source[0][0] != 's' || source[0].back() != 'a') return std::nullopt;
  try {
    int k = std::stoi(source[0].substr(1, source[0].size() - 2));
    if (k >= 0 && k < kTemplates) return k;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

}  // namespace dialogue

namespace {

// Splits n items over probabilities by largest remainder; ties go to the
// earlier entry.
std::vector<std::size_t> quotas(std::size_t n, const std::vector<double>& probs) {
  std::vector<std::size_t> q(probs.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double exact = probs[i] * static_cast<double>(n);
    q[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += q[i];
    rem.emplace_back(exact - static_cast<double>(q[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++q[rem[i % rem.size()].second];
  return q;
}

using Raw = std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>;

Raw gen_sequences(const TaskSpec& spec, Rng& rng) {
  if (spec.vocab_size < 1) throw ConfigError("task vocab_size must be at least 1");
  Raw raw;
  for (std::size_t i = 0; i < spec.pairs; ++i) {
    auto len = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(spec.min_length),
                                                    static_cast<std::int64_t>(spec.max_length)));
    std::vector<std::string> x;
    for (std::size_t t = 0; t < len; ++t) x.push_back(std::to_string(rng.below(spec.vocab_size)));
    auto y = x;
    if (spec.task == TaskKind::reverse) std::reverse(y.begin(), y.end());
    raw.emplace_back(std::move(x), std::move(y));
  }
  return raw;
}

Raw gen_numbers(const TaskSpec& spec, Rng& rng) {
  const auto lo = static_cast<std::int64_t>(std::clamp<std::size_t>(spec.min_length, 1, 4));
  const auto hi = static_cast<std::int64_t>(std::clamp<std::size_t>(spec.max_length, 1, 4));
  Raw raw;
  for (std::size_t i = 0; i < spec.pairs; ++i) {
    const auto digits = rng.between(lo, hi);
    const std::int64_t first = digits == 1 ? 0 : static_cast<std::int64_t>(std::pow(10, digits - 1));
    const std::int64_t last = static_cast<std::int64_t>(std::pow(10, digits)) - 1;
    const int n = static_cast<int>(rng.between(first, last));
    std::vector<std::string> x;
    for (char c : std::to_string(n)) x.emplace_back(1, c);
    raw.emplace_back(std::move(x), number_words(n));
  }
  return raw;
}

Raw gen_dialogue(const TaskSpec& spec, Rng& rng) {
  using namespace dialogue;
  Raw raw;
  for (int k = 0; k < kTemplates; ++k) {
    const std::size_t n_k = spec.pairs / kTemplates + (static_cast<std::size_t>(k) < spec.pairs % kTemplates ? 1 : 0);
    auto reps = replies(k);
    std::vector<double> probs;
    for (const auto& r : reps) probs.push_back(r.second);
    auto q = quotas(n_k, probs);
    for (std::size_t j = 0; j < reps.size(); ++j) {
      for (std::size_t c = 0; c < q[j]; ++c) {
        std::vector<std::string> x{"s" + std::to_string(k) + "a", "s" + std::to_string(k) + "b"};
        const auto fillers = rng.between(1, 3);
        for (std::int64_t f = 0; f < fillers; ++f) x.push_back("f" + std::to_string(rng.below(kFillers)));
        raw.emplace_back(std::move(x), reps[j].first);
      }
    }
  }
  rng.shuffle(raw);
  return raw;
}

}  // namespace

Corpus gen_task(const TaskSpec& spec) {
  if (spec.min_length > spec.max_length) throw ConfigError("task min_length exceeds max_length");
  if (spec.pairs < 1) throw ConfigError("task pairs must be at least 1");
  Rng rng(derive_seed(spec.seed, "task:" + to_string(spec.task)));
  Raw raw;
  switch (spec.task) {
    case TaskKind::copy:
    case TaskKind::reverse: raw = gen_sequences(spec, rng); break;
    case TaskKind::num2words: raw = gen_numbers(spec, rng); break;
    case TaskKind::dialogue: raw = gen_dialogue(spec, rng); break;
  }
  std::vector<std::vector<std::string>> src, tgt;
  for (auto& [x, y] : raw) {
    src.push_back(x);
    tgt.push_back(y);
  }
  Corpus corpus;
  corpus.vocab.source = build_vocab(src, 1);
  corpus.vocab.target = build_vocab(tgt, 1);
  corpus.provenance = to_string(spec.task) + ":seed=" + std::to_string(spec.seed);
  for (std::size_t i = 0; i < raw.size(); ++i) corpus.pairs.push_back(make_pair(corpus.vocab, src[i], tgt[i]));
  return corpus;
}

}  // namespace fdq
