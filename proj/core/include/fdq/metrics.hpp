#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace fdq {

using Sentence = std::vector<int>;

// Drops PAD/BOS/EOS; they are not generated content.
Sentence content(std::span<const int> ids);

struct BleuConfig {
  int max_order = 4;
  // Add one to the matched and total counts of orders >= 2.
  bool smoothing = false;
};

// Corpus BLEU: clipped n-gram precisions pooled over the corpus, geometric
// mean over orders, brevity penalty exp(1 - r/c) when c < r.
double bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references, const BleuConfig& config = {});
double sentence_bleu(std::span<const int> hypothesis, std::span<const int> reference, const BleuConfig& config = {});

// Bigram-overlap F-measure; alpha = 0.5 is the balanced F1.
double rouge2(std::span<const int> hypothesis, std::span<const int> reference, double alpha = 0.5);

// Distinct n-grams across all responses divided by the total token count.
double distinct_n(std::span<const Sentence> responses, int n);

double exact_length_rate(std::span<const Sentence> hypotheses, std::span<const std::size_t> lengths);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::vector<double> per_sentence;
  nlohmann::json config;
};

nlohmann::json to_json(const MetricReport& report);

// Two-column CSV with a header row.
void write_plot_csv(const std::string& path, const std::string& x_name, const std::string& y_name,
                    const std::vector<std::pair<double, double>>& points);

}  // namespace fdq
