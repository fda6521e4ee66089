#include "fdq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "fdq/error.hpp"
#include "fdq/vocab.hpp"

namespace fdq {

Sentence content(std::span<const int> ids) {
  Sentence out;
  for (int id : ids)
    if (!is_special(id)) out.push_back(id);
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<int>, int>;

NgramCounts ngrams(const Sentence& s, int n) {
  NgramCounts counts;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + un <= s.size(); ++i) ++counts[std::vector<int>(s.begin() + i, s.begin() + i + un)];
  return counts;
}

// Sum over n-grams of min(count in a, count in b).
long overlap(const NgramCounts& a, const NgramCounts& b) {
  long total = 0;
  for (const auto& [g, n] : a) {
    auto it = b.find(g);
    if (it != b.end()) total += std::min(n, it->second);
  }
  return total;
}

}  // namespace

double bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references, const BleuConfig& config) {
  if (hypotheses.size() != references.size()) {
    throw ContractError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                        std::to_string(references.size()) + " references");
  }
  if (config.max_order < 1) throw ContractError("bleu: max_order must be at least 1");
  const auto orders = static_cast<std::size_t>(config.max_order);
  std::vector<double> matched(orders, 0.0), total(orders, 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const Sentence h = content(hypotheses[i]);
    const Sentence r = content(references[i]);
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= orders; ++n) {
      const auto hn = ngrams(h, static_cast<int>(n));
      matched[n - 1] += static_cast<double>(overlap(hn, ngrams(r, static_cast<int>(n))));
      if (h.size() >= n) total[n - 1] += static_cast<double>(h.size() - n + 1);
    }
  }
  if (hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    double m = matched[n - 1], t = total[n - 1];
    if (config.smoothing && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

double sentence_bleu(std::span<const int> hypothesis, std::span<const int> reference, const BleuConfig& config) {
  const Sentence h(hypothesis.begin(), hypothesis.end());
  const Sentence r(reference.begin(), reference.end());
  return bleu(std::span<const Sentence>(&h, 1), std::span<const Sentence>(&r, 1), config);
}

double rouge2(std::span<const int> hypothesis, std::span<const int> reference, double alpha) {
  const Sentence h = content(hypothesis);
  const Sentence r = content(reference);
  if (h.size() < 2 || r.size() < 2) return 0.0;
  const double hit = static_cast<double>(overlap(ngrams(h, 2), ngrams(r, 2)));
  if (hit == 0.0) return 0.0;
  const double p = hit / static_cast<double>(h.size() - 1);
  const double rc = hit / static_cast<double>(r.size() - 1);
  return 1.0 / (alpha / p + (1.0 - alpha) / rc);
}

double distinct_n(std::span<const Sentence> responses, int n) {
  if (n < 1) throw ContractError("distinct_n: n must be at least 1");
  std::set<std::vector<int>> seen;
  std::size_t tokens = 0;
  for (const auto& resp : responses) {
    const Sentence s = content(resp);
    tokens += s.size();
    for (const auto& [g, c] : ngrams(s, n)) seen.insert(g);
  }
  if (tokens == 0) return 0.0;
  return static_cast<double>(seen.size()) / static_cast<double>(tokens);
}

double exact_length_rate(std::span<const Sentence> hypotheses, std::span<const std::size_t> lengths) {
  if (hypotheses.size() != lengths.size()) {
    throw ContractError("exact_length_rate: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                        std::to_string(lengths.size()) + " lengths");
  }
  if (hypotheses.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    if (content(hypotheses[i]).size() == lengths[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(hypotheses.size());
}

nlohmann::json to_json(const MetricReport& report) {
  return {{"metric", report.metric},
          {"value", report.value},
          {"per_sentence", report.per_sentence},
          {"config", report.config.is_null() ? nlohmann::json::object() : report.config}};
}

void write_plot_csv(const std::string& path, const std::string& x_name, const std::string& y_name,
                    const std::vector<std::pair<double, double>>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path);
  out << x_name << ',' << y_name << '\n';
  char buf[64];
  for (const auto& [x, y] : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", x, y);
    out << buf;
  }
}

}  // namespace fdq
