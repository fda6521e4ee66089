#include "fdq/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "fdq/error.hpp"

namespace fdq {

double mean_token_loss(const Seq2Seq& model, const Corpus& corpus) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : corpus.pairs) {
    total -= model.sequence_logprob(encoder_input(p.source), p.target);
    tokens += p.target.size();
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

double perplexity(const Seq2Seq& model, const Corpus& corpus) { return std::exp(mean_token_loss(model, corpus)); }

std::size_t length_cap(const Corpus& corpus) {
  std::size_t longest = 0;
  for (const auto& p : corpus.pairs) longest = std::max(longest, p.length());
  return 2 * longest + 5;
}

TrainReport train_mle(Seq2Seq& model, const Corpus& train, const Corpus* dev, const TrainSchedule& schedule,
                      const EpochCallback& on_epoch) {
  if (train.empty()) throw ContractError("train_mle: empty training corpus");
  if (schedule.epochs < 1) throw ConfigError("train_mle: epochs must be at least 1");
  if (schedule.batch_size < 1) throw ConfigError("train_mle: batch size must be at least 1");

  model.set_max_length(std::max(model.config().max_length, length_cap(train)));
  TrainReport report;
  report.initial_loss = mean_token_loss(model, train);

  ParameterSet& params = model.params();
  Optimizer optimizer(schedule.optim);
  Tape tape;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    const auto batches =
        batch_iter(train, schedule.batch_size, schedule.sort_by_length, derive_seed(schedule.seed, "epoch", epoch));
    for (const Batch& batch : batches) {
      params.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t idx : batch.indices) {
        const SequencePair& p = train.pairs[idx];
        const std::vector<int> src = encoder_input(p.source);
        Var loss = model.graph(tape).loss(src, p.target);
        const double value = loss.item();
        if (!std::isfinite(value)) throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
        batch_loss += value;
        tape.backward(loss);
      }
      const float inv = 1.0f / static_cast<float>(batch.token_count);
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (float& g : params[i].grad.data()) g *= inv;
      }
      optimizer.step(params);
      epoch_loss += batch_loss;
      epoch_tokens += batch.token_count;
    }
    model.set_trained(true);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    if (dev && !dev->empty()) rec.dev_perplexity = perplexity(model, *dev);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double watched = rec.dev_perplexity > 0.0 ? rec.dev_perplexity : std::exp(rec.train_loss);
    if (watched < best) {
      best = watched;
      report.best_epoch = epoch;
      since_best = 0;
      if (schedule.patience > 0) {
        best_values.clear();
        for (std::size_t i = 0; i < params.size(); ++i) best_values.push_back(params[i].value);
      }
    } else {
      ++since_best;
    }
    if (schedule.stop_below_perplexity > 0.0 && watched < schedule.stop_below_perplexity) {
      report.stop_reason = "perplexity threshold";
      return report;
    }
    if (schedule.patience > 0 && since_best >= schedule.patience) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best_values[i];
      report.stop_reason = "early stop";
      return report;
    }
  }
  if (schedule.patience > 0 && report.best_epoch != schedule.epochs) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best_values[i];
  }
  report.stop_reason = "epoch limit";
  return report;
}

Corpus swapped(const Corpus& corpus) {
  Corpus out;
  out.vocab.source = corpus.vocab.target;
  out.vocab.target = corpus.vocab.source;
  out.provenance = corpus.provenance + "/swapped";
  out.pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    SequencePair s;
    s.source.assign(p.target.begin(), p.target.begin() + static_cast<std::ptrdiff_t>(p.length()));
    s.target = p.source;
    s.target.push_back(kEos);
    out.pairs.push_back(std::move(s));
  }
  return out;
}

}  // namespace fdq
