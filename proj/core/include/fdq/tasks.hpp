#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fdq/corpus.hpp"

namespace fdq {

enum class TaskKind { copy, reverse, num2words, dialogue };

TaskKind parse_task(const std::string& name);
std::string to_string(TaskKind kind);

struct TaskSpec {
  TaskKind task = TaskKind::copy;
  std::size_t vocab_size = 10;  // content tokens for copy/reverse
  std::size_t min_length = 1;   // digits for num2words; unused for dialogue
  std::size_t max_length = 6;
  std::size_t pairs = 1000;
  std::uint64_t seed = 0;
};

// Pure function of the spec: identical specs give identical corpora.
Corpus gen_task(const TaskSpec& spec);

// English words for 0..9999, e.g. 1204 -> "one thousand two hundred four".
std::vector<std::string> number_words(int n);

// Dialogue task layout. Every source starts with the two signature tokens of
// its template, followed by 1-3 filler tokens. Even templates are "focused":
// the generic reply "i dont know ." takes 40% and three specific replies take
// 20% each. Odd templates are "diffuse": the generic reply is split over four
// punctuation variants at 10% each, and twelve specific replies take 5% each.
// Specific replies are "o<j> t<k> w<j> ." for template k.
namespace dialogue {
inline constexpr int kTemplates = 20;
inline constexpr int kFillers = 10;
inline constexpr int kFocusedSpecifics = 3;
inline constexpr int kDiffuseSpecifics = 12;

bool is_focused(int template_id);
// Reply strings and their probabilities for one template.
std::vector<std::pair<std::vector<std::string>, double>> replies(int template_id);
bool is_generic(const std::vector<std::string>& reply);
// Template id from a source sentence, if it carries a signature.
std::optional<int> template_of(const std::vector<std::string>& source);
}  // namespace dialogue

}  // namespace fdq
