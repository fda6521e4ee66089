#include <CLI/CLI11.hpp>
#include <iostream>
#include <optional>

#include "fdq/cli/commands.hpp"
#include "fdq/error.hpp"

namespace fdq::cli {

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config");
  cmd->add_option("--set", c.sets, "Override a config key, e.g. decode.weight=0.5 (repeatable)");
  cmd->add_option("--out", c.out, "Run directory (overrides the config's out)");
  cmd->add_option("--seed", c.seed, "Global seed (overrides the config's seed)");
}

ExperimentConfig resolve(const Common& c) {
  nlohmann::json doc = c.config.empty() ? nlohmann::json::object() : read_config_file(c.config);
  for (const auto& s : c.sets) apply_override(doc, s);
  if (!c.out.empty()) doc["out"] = c.out;
  if (c.seed) doc["seed"] = *c.seed;
  ExperimentConfig config = parse_config(doc);
  validate(config);
  return config;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Value-guided sequence decoding laboratory", "fdq"};
  app.require_subcommand(1);
  Common common;
  std::string input, hyp, ref;

  auto* train = app.add_subcommand("train", "Train the forward (and backward) model");
  auto* train_q = app.add_subcommand("train-q", "Train the Q estimator selected by q.family");
  auto* decode = app.add_subcommand("decode", "Decode a split or an input file");
  auto* eval = app.add_subcommand("eval", "Score a decode output against references");
  auto* compare = app.add_subcommand("compare", "Decode a mode x weight grid and tabulate metrics");
  auto* selftest = app.add_subcommand("selftest", "Gradient and oracle-equivalence suites");
  for (auto* cmd : {train, train_q, decode, eval, compare, selftest}) add_common(cmd, common);
  decode->add_option("--input", input, "NDJSON {\"src\": text, \"L\": int} or plain text lines");
  eval->add_option("--hyp", hyp, "Decode output (.ndjson) or plain text");
  eval->add_option("--ref", ref, "References: plain text, pairs .ndjson, or the run's split");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "fdq: " << e.what() << "\n";
    return kExitUser;
  }

  try {
    const ExperimentConfig config = resolve(common);
    if (*train) {
      cmd_train(config, out);
    } else if (*train_q) {
      cmd_train_q(config, out);
    } else if (*decode) {
      cmd_decode(config, input, out);
    } else if (*eval) {
      cmd_eval(config, hyp, ref, out);
    } else if (*compare) {
      cmd_compare(config, out);
    } else if (*selftest) {
      return cmd_selftest(config, out) ? kExitOk : kExitNumeric;
    }
    return kExitOk;
  } catch (const DivergenceError& e) {
    err << "fdq: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "fdq: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    err << "fdq: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace fdq::cli
