#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <unistd.h>

#include "fdq/corpus.hpp"
#include "fdq/seq2seq.hpp"
#include "fdq/tasks.hpp"
#include "fdq/train.hpp"

namespace fdq::testing {

// Directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fdq-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TrainedTask {
  Splits data;
  std::unique_ptr<Seq2Seq> model;
  TrainReport report;
};

// Copy task, 20 content tokens, 2000 pairs, trained once per process.
inline const TrainedTask& trained_copy() {
  static const TrainedTask task = [] {
    TaskSpec spec;
    spec.task = TaskKind::copy;
    spec.vocab_size = 20;
    spec.min_length = 1;
    spec.max_length = 8;
    spec.pairs = 2000;
    spec.seed = 7;
    TrainedTask t;
    t.data = split(gen_task(spec), {0.8, 0.1, 0.1}, 3);
    Seq2SeqConfig mc;
    mc.source_vocab = t.data.train.vocab.source.size();
    mc.target_vocab = t.data.train.vocab.target.size();
    mc.hidden = 64;
    t.model = std::make_unique<Seq2Seq>(mc, 5);
    TrainSchedule sch;
    sch.epochs = 30;
    sch.optim.learning_rate = 3e-3f;
    sch.stop_below_perplexity = 1.05;
    t.report = train_mle(*t.model, t.data.train, &t.data.dev, sch);
    return t;
  }();
  return task;
}

}  // namespace fdq::testing
