#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fdq/vocab.hpp"

namespace fdq {

struct SequencePair {
  std::vector<int> source;
  std::vector<int> target;  // ends with kEos

  // N: target length without the closing EOS.
  std::size_t length() const { return target.empty() ? 0 : target.size() - 1; }

  bool operator==(const SequencePair&) const = default;
};

struct Corpus {
  std::vector<SequencePair> pairs;
  VocabPair vocab;
  std::string provenance;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Encodes token lists and appends EOS to the target.
SequencePair make_pair(const VocabPair& vocab, std::span<const std::string> source,
                       std::span<const std::string> target);

// Throws ContractError if an id is outside its vocab or a target lacks its EOS.
void validate(const Corpus& corpus);

struct VocabConfig {
  std::size_t min_count = 1;
};

// Line-aligned, whitespace-tokenized files. Vocabularies are built from the
// files themselves.
Corpus load_parallel_text(const std::string& source_path, const std::string& target_path,
                          const VocabConfig& config = {});

struct Splits {
  Corpus train;
  Corpus dev;
  Corpus test;
};

Splits split(const Corpus& corpus, std::array<double, 3> fractions, std::uint64_t seed);

struct Batch {
  std::vector<std::size_t> indices;         // positions in the corpus
  std::vector<std::vector<int>> source;     // padded with kPad
  std::vector<std::vector<int>> target;     // padded with kPad
  std::vector<std::vector<std::uint8_t>> target_mask;  // 1 where the loss applies
  std::size_t token_count = 0;              // number of unmasked target positions
};

std::vector<Batch> batch_iter(const Corpus& corpus, std::size_t batch_size, bool sort_by_length,
                              std::uint64_t seed);

// NDJSON of {"src": [...], "tgt": [...]} per line.
void save_pairs(const std::vector<SequencePair>& pairs, const std::string& path);
std::vector<SequencePair> load_pairs(const std::string& path);

// Writes <dir>/{train,dev,test}.ndjson plus src.vocab and tgt.vocab.
void save_splits(const Splits& splits, const std::string& dir);
Splits load_splits(const std::string& dir);

}  // namespace fdq
