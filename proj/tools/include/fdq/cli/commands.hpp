#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fdq/cli/config.hpp"
#include "fdq/metrics.hpp"

namespace fdq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUser = 2;     // config, input or checkpoint problems
inline constexpr int kExitNumeric = 3;  // divergence, failed self-checks

// Run-directory layout, relative to config.out.
namespace layout {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kData = "data";
inline constexpr const char* kForward = "forward.fdq";
inline constexpr const char* kBackward = "backward.fdq";
inline constexpr const char* kQDir = "q";
inline constexpr const char* kRollouts = "rollouts";
inline constexpr const char* kDecode = "decode";
inline constexpr const char* kReports = "reports";
}  // namespace layout

void cmd_train(const ExperimentConfig& config, std::ostream& log);
void cmd_train_q(const ExperimentConfig& config, std::ostream& log);
// input: optional NDJSON of {"src": "text", "L": int} (or plain text lines);
// defaults to the configured split of the run's data. Returns the output path.
std::filesystem::path cmd_decode(const ExperimentConfig& config, const std::string& input, std::ostream& log);
// hyp: decode output (.ndjson) or plain text; ref: plain text, a pairs
// .ndjson, or (empty) the configured split of the run's data.
std::vector<MetricReport> cmd_eval(const ExperimentConfig& config, const std::string& hyp, const std::string& ref,
                                   std::ostream& log);
void cmd_compare(const ExperimentConfig& config, std::ostream& log);
// Gradient and oracle-equivalence suites; false if any check fails.
bool cmd_selftest(const ExperimentConfig& config, std::ostream& log);

std::filesystem::path default_decode_path(const ExperimentConfig& config, const std::string& mode, double weight);

// Parses argv, dispatches, maps errors onto exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fdq::cli
