#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fdq/corpus.hpp"
#include "fdq/optim.hpp"
#include "fdq/seq2seq.hpp"

namespace fdq {

struct TrainSchedule {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  OptimConfig optim;
  std::uint64_t seed = 0;
  // Stop after this many epochs without a dev-perplexity improvement and keep
  // the best parameters; 0 disables.
  std::size_t patience = 0;
  // Stop as soon as dev perplexity (train perplexity without a dev set) falls
  // below this value; 0 disables.
  double stop_below_perplexity = 0.0;
  bool sort_by_length = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;      // mean per-token cross-entropy during the epoch
  double dev_perplexity = 0.0;  // 0 when there is no dev set
  double seconds = 0.0;
};

struct TrainReport {
  double initial_loss = 0.0;  // mean per-token cross-entropy before any update
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string stop_reason;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mean per-token cross-entropy of the corpus under the model.
double mean_token_loss(const Seq2Seq& model, const Corpus& corpus);
double perplexity(const Seq2Seq& model, const Corpus& corpus);

// 2 × the longest target (EOS excluded) + 5.
std::size_t length_cap(const Corpus& corpus);

// Teacher-forced maximum likelihood with per-batch optimizer steps. Throws
// DivergenceError on a non-finite loss or gradient.
TrainReport train_mle(Seq2Seq& model, const Corpus& train, const Corpus* dev, const TrainSchedule& schedule,
                      const EpochCallback& on_epoch = {});

// Sources and targets exchanged: target content becomes the source and the
// source (plus EOS) becomes the target.
Corpus swapped(const Corpus& corpus);

}  // namespace fdq
