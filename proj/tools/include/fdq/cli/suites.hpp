#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fdq::cli {

struct GradientCase {
  std::string name;
  double error = 0.0;
  double bound = 0.0;
  std::string worst;  // parameter with the largest error

  bool pass() const { return error < bound; }
};

// Finite-difference checks in double precision on the ops and graphs that
// carry every trainable parameter: affine, lstm_step, one attention decoder
// step, full seq2seq losses and each Q head. Single ops must stay below 1e-4,
// multi-component graphs below 1e-3.
std::vector<GradientCase> gradient_suite(std::uint64_t seed);

struct OracleSummary {
  std::size_t models = 0;
  std::size_t beam_matches = 0;
  std::size_t guided_matches = 0;
  std::string first_mismatch;

  bool pass() const { return models > 0 && beam_matches == models && guided_matches == models; }
};

// Random tiny models (4 decodable tokens, cap 4, B = 400): beam search and
// guided beam search under a bounded random scorer must return exactly the
// exhaustive argmax.
OracleSummary oracle_suite(std::size_t models, std::uint64_t seed);

}  // namespace fdq::cli
