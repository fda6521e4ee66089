#include "fdq/cli/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fdq/decode.hpp"
#include "fdq/error.hpp"
#include "fdq/rng.hpp"
#include "fdq/rollout.hpp"
#include "fdq/tasks.hpp"

namespace fdq::cli {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TaskSection, name, vocab_size, min_length, max_length, pairs, source_file,
                                   target_file, min_count, split)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelSection, hidden, layers, attention)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainSection, epochs, batch_size, learning_rate, patience, stop_below_perplexity,
                                   sort_by_length, backward)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(QSection, family, hidden, epochs, batch_size, learning_rate, patience, metric,
                                   positions, samples, rollout_beam, gold_prefix, buckets, full_targets_only)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DecodeSection, mode, beam, weight, weights, modes, rerank_weight, nbest,
                                   max_length, force_length, mask_early_eos, length_policy, length, split, output,
                                   timing)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MetricsSection, names, smoothing)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ExperimentConfig, seed, out, task, model, train, q, decode, metrics)

namespace {

bool compatible(const json& expected, const json& given) {
  if (expected.is_number_unsigned()) return given.is_number_unsigned() || (given.is_number_integer() && given >= 0);
  if (expected.is_number()) return given.is_number();
  if (expected.is_array()) return given.is_array();
  return expected.type() == given.type();
}

void check_keys(const json& defaults, const json& given, const std::string& path) {
  if (!given.is_object()) throw ConfigError("config" + (path.empty() ? "" : " key '" + path + "'") + " must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    const json& expected = defaults.at(key);
    if (expected.is_object()) {
      check_keys(expected, value, where);
    } else if (!compatible(expected, value)) {
      throw ConfigError("config key '" + where + "' expects " + std::string(expected.type_name()) + ", got " +
                        std::string(value.type_name()));
    }
  }
}

}  // namespace

json to_json(const ExperimentConfig& config) {
  json j = config;
  return j;
}

ExperimentConfig parse_config(const json& doc) {
  const json defaults = to_json(ExperimentConfig{});
  check_keys(defaults, doc, "");
  json merged = defaults;
  merged.merge_patch(doc);
  try {
    return merged.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("bad override key '" + key + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("out");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

void validate(const ExperimentConfig& c) {
  if (c.task.name != "text") parse_task(c.task.name);
  if (c.task.name == "text" && (c.task.source_file.empty() || c.task.target_file.empty())) {
    throw ConfigError("task.name=text needs task.source_file and task.target_file");
  }
  double total = 0.0;
  for (double f : c.task.split) {
    if (!(f > 0.0)) throw ConfigError("task.split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("task.split fractions must sum to 1");
  if (c.model.hidden == 0 || c.model.layers == 0) throw ConfigError("model.hidden and model.layers must be positive");
  if (c.train.batch_size == 0 || c.q.batch_size == 0) throw ConfigError("batch sizes must be positive");
  if (c.train.backward != "auto" && c.train.backward != "yes" && c.train.backward != "no") {
    throw ConfigError("train.backward must be auto, yes or no");
  }
  if (c.q.family != "length" && c.q.family != "backward_opt1" && c.q.family != "backward_opt2" &&
      c.q.family != "outcome") {
    throw ConfigError("unknown q.family '" + c.q.family + "'");
  }
  parse_outcome_metric(c.q.metric);
  parse_decode_mode(c.decode.mode);
  for (const auto& m : c.decode.modes) parse_decode_mode(m);
  if (c.decode.beam == 0) throw ConfigError("decode.beam must be positive");
  const auto& p = c.decode.length_policy;
  if (p != "none" && p != "input" && p != "gold" && p != "fixed" && p != "random") {
    throw ConfigError("unknown decode.length_policy '" + p + "'");
  }
  if (p == "fixed" && c.decode.length == 0) throw ConfigError("decode.length_policy=fixed needs decode.length");
  if (c.decode.split != "train" && c.decode.split != "dev" && c.decode.split != "test") {
    throw ConfigError("decode.split must be train, dev or test");
  }
  for (const auto& name : c.metrics.names) {
    if (name != "bleu" && name != "rouge2" && name != "distinct1" && name != "distinct2" &&
        name != "exact_length" && name != "generic_rate" && name != "length") {
      throw ConfigError("unknown metric '" + name + "'");
    }
  }
}

}  // namespace fdq::cli
