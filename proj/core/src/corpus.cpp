#include "fdq/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "fdq/error.hpp"
#include "fdq/rng.hpp"

namespace fdq {

SequencePair make_pair(const VocabPair& vocab, std::span<const std::string> source,
                       std::span<const std::string> target) {
  SequencePair p;
  p.source = vocab.source.encode(source);
  p.target = vocab.target.encode(target);
  p.target.push_back(kEos);
  return p;
}

void validate(const Corpus& corpus) {
  auto check = [](const std::vector<int>& ids, const Vocab& v, std::size_t i) {
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= v.size()) {
        throw ContractError("pair " + std::to_string(i) + ": token id " + std::to_string(id) + " outside vocab");
      }
    }
  };
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto& p = corpus.pairs[i];
    check(p.source, corpus.vocab.source, i);
    check(p.target, corpus.vocab.target, i);
    if (p.target.empty() || p.target.back() != kEos) {
      throw ContractError("pair " + std::to_string(i) + ": target does not end with EOS");
    }
  }
}

namespace {

std::vector<std::vector<std::string>> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(tokenize(line));
  return lines;
}

Corpus subset(const Corpus& corpus, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
              const std::string& part) {
  Corpus out;
  out.vocab = corpus.vocab;
  out.provenance = corpus.provenance + "/" + part;
  for (std::size_t i = begin; i < end; ++i) out.pairs.push_back(corpus.pairs[order[i]]);
  return out;
}

}  // namespace

Corpus load_parallel_text(const std::string& source_path, const std::string& target_path,
                          const VocabConfig& config) {
  auto src = read_lines(source_path);
  auto tgt = read_lines(target_path);
  if (src.size() != tgt.size()) {
    throw LoadError("line count mismatch: " + source_path + " has " + std::to_string(src.size()) + ", " +
                    target_path + " has " + std::to_string(tgt.size()));
  }
  Corpus corpus;
  corpus.vocab.source = build_vocab(src, config.min_count);
  corpus.vocab.target = build_vocab(tgt, config.min_count);
  corpus.provenance = "files:" + source_path + "," + target_path;
  for (std::size_t i = 0; i < src.size(); ++i) corpus.pairs.push_back(make_pair(corpus.vocab, src[i], tgt[i]));
  return corpus;
}

Splits split(const Corpus& corpus, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  const std::size_t n = corpus.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n))));
  auto n_dev = std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  Splits s;
  s.train = subset(corpus, order, 0, n_train, "train");
  s.dev = subset(corpus, order, n_train, n_train + n_dev, "dev");
  s.test = subset(corpus, order, n_train + n_dev, n, "test");
  return s;
}

std::vector<Batch> batch_iter(const Corpus& corpus, std::size_t batch_size, bool sort_by_length,
                              std::uint64_t seed) {
  if (batch_size < 1) throw ContractError("batch size must be at least 1");
  Rng rng(seed);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  if (sort_by_length) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return corpus.pairs[a].target.size() < corpus.pairs[b].target.size();
    });
  }

  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    Batch b;
    std::size_t src_len = 0, tgt_len = 0;
    for (std::size_t i = begin; i < end; ++i) {
      b.indices.push_back(order[i]);
      src_len = std::max(src_len, corpus.pairs[order[i]].source.size());
      tgt_len = std::max(tgt_len, corpus.pairs[order[i]].target.size());
    }
    for (std::size_t idx : b.indices) {
      const auto& p = corpus.pairs[idx];
      auto s = p.source;
      s.resize(src_len, kPad);
      auto t = p.target;
      t.resize(tgt_len, kPad);
      std::vector<std::uint8_t> m(tgt_len, 0);
      std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(p.target.size()), 1);
      b.token_count += p.target.size();
      b.source.push_back(std::move(s));
      b.target.push_back(std::move(t));
      b.target_mask.push_back(std::move(m));
    }
    batches.push_back(std::move(b));
  }
  // Length-sorted batches are visited in shuffled order.
  if (sort_by_length) rng.shuffle(batches);
  return batches;
}

void save_pairs(const std::vector<SequencePair>& pairs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path);
  for (const auto& p : pairs) out << nlohmann::json{{"src", p.source}, {"tgt", p.target}}.dump() << '\n';
}

std::vector<SequencePair> load_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path);
  std::vector<SequencePair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      pairs.push_back({j.at("src").get<std::vector<int>>(), j.at("tgt").get<std::vector<int>>()});
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

void save_splits(const Splits& splits, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_vocab(splits.train.vocab.source, dir + "/src.vocab");
  save_vocab(splits.train.vocab.target, dir + "/tgt.vocab");
  save_pairs(splits.train.pairs, dir + "/train.ndjson");
  save_pairs(splits.dev.pairs, dir + "/dev.ndjson");
  save_pairs(splits.test.pairs, dir + "/test.ndjson");
}

Splits load_splits(const std::string& dir) {
  VocabPair vocab{load_vocab(dir + "/src.vocab"), load_vocab(dir + "/tgt.vocab")};
  Splits s;
  Corpus* parts[] = {&s.train, &s.dev, &s.test};
  const char* names[] = {"train", "dev", "test"};
  for (int i = 0; i < 3; ++i) {
    parts[i]->vocab = vocab;
    parts[i]->provenance = dir + "/" + names[i];
    parts[i]->pairs = load_pairs(dir + "/" + names[i] + ".ndjson");
    try {
      validate(*parts[i]);
    } catch (const ContractError& e) {
      throw LoadError(dir + "/" + names[i] + ".ndjson: " + e.what());
    }
  }
  return s;
}

}  // namespace fdq
