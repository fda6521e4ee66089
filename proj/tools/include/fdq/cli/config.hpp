#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace fdq::cli {

struct TaskSection {
  std::string name = "copy";  // copy | reverse | num2words | dialogue | text
  std::size_t vocab_size = 10;
  std::size_t min_length = 1;
  std::size_t max_length = 6;
  std::size_t pairs = 1000;
  // For name = "text": line-aligned whitespace-tokenized files.
  std::string source_file;
  std::string target_file;
  std::size_t min_count = 1;
  std::array<double, 3> split{0.8, 0.1, 0.1};
};

struct ModelSection {
  std::size_t hidden = 64;
  std::size_t layers = 1;
  bool attention = true;
};

struct TrainSection {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 3e-3;
  std::size_t patience = 0;
  double stop_below_perplexity = 0.0;
  bool sort_by_length = false;
  // "auto" trains the backward model when q.family or a decode mode needs it.
  std::string backward = "auto";
};

struct QSection {
  std::string family = "length";  // length | backward_opt1 | backward_opt2 | outcome
  std::size_t hidden = 64;        // outcome encoders; MLP heads use the model width
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t patience = 8;
  // Rollouts (family = outcome).
  std::string metric = "bleu";
  std::size_t positions = 4;
  std::size_t samples = 2;
  std::size_t rollout_beam = 7;
  bool gold_prefix = true;
  // Option 2 buckets; hi = 0 is unbounded.
  std::vector<std::pair<std::size_t, std::size_t>> buckets{{1, 2}, {3, 4}, {5, 7}, {8, 12}, {13, 0}};
  bool full_targets_only = false;
};

struct DecodeSection {
  std::string mode = "sbs";
  std::size_t beam = 7;
  double weight = 0.0;
  std::vector<double> weights{0.5, 1.0, 2.0};  // compare grid
  std::vector<std::string> modes;              // compare rows; empty means {mode}
  double rerank_weight = 1.0;                  // compare baseline
  std::size_t nbest = 0;
  std::size_t max_length = 0;
  bool force_length = false;
  bool mask_early_eos = true;
  // none | input | gold | fixed | random
  std::string length_policy = "none";
  std::size_t length = 0;
  std::string split = "test";
  std::string output;  // empty: decode/<mode>[-w<weight>].ndjson
  bool timing = false;
};

struct MetricsSection {
  std::vector<std::string> names{"bleu", "rouge2", "distinct1", "distinct2"};
  bool smoothing = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  TaskSection task;
  ModelSection model;
  TrainSection train;
  QSection q;
  DecodeSection decode;
  MetricsSection metrics;
};

nlohmann::json to_json(const ExperimentConfig& config);

// Strict: every key must exist in the defaults with a compatible type.
// Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const nlohmann::json& doc);

// Reads a JSON file; syntax errors become ConfigError.
nlohmann::json read_config_file(const std::string& path);

// Applies "a.b.c=value"; the value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// FNV-1a64 of the canonical resolved config without the output directory.
std::string config_hash(const ExperimentConfig& config);

// Semantic checks beyond types (task names, modes, fractions, ...).
void validate(const ExperimentConfig& config);

}  // namespace fdq::cli
