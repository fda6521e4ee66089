#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fdq {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kSpecialCount = 4;

inline bool is_special(int id) { return id == kPad || id == kBos || id == kEos; }

class Vocab {
 public:
  Vocab();

  // Appends a token if it is new; returns its id either way.
  int add(const std::string& token);

  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  // Text with EOS and anything after it dropped, PAD/BOS skipped.
  std::string render(std::span<const int> ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct VocabPair {
  Vocab source;
  Vocab target;
};

// Ids 0..3 are the specials; the rest are ordered by descending count, then
// lexicographically. Tokens seen fewer than min_count times are left out.
Vocab build_vocab(std::span<const std::vector<std::string>> sentences, std::size_t min_count = 1);

std::vector<std::string> tokenize(std::string_view text);
std::string join(std::span<const std::string> words);

// One token per line; the id is the line number.
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

}  // namespace fdq
