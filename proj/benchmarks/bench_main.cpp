#include <benchmark/benchmark.h>

#include "fdq/decode.hpp"
#include "fdq/ops.hpp"
#include "fdq/optim.hpp"
#include "fdq/scorers.hpp"
#include "fdq/seq2seq.hpp"
#include "fdq/tasks.hpp"

using namespace fdq;

namespace {

Seq2SeqConfig shape(std::size_t hidden) {
  return {.source_vocab = 30, .target_vocab = 30, .hidden = hidden, .layers = 1, .attention = true, .max_length = 20};
}

std::vector<int> tokens(std::size_t n) {
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(kSpecialCount + static_cast<int>(i * 7 % 26));
  return out;
}

void BM_LstmStep(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  ParameterSet ps;
  auto& w = ps.add("w", {4 * h, 2 * h});
  auto& b = ps.add("b", {4 * h});
  Rng rng(1);
  ps.init_uniform(rng, 0.08);
  const Tensor x({h}, 0.1f), h0({h}, 0.2f), c0({h}, -0.1f);
  Tape tape;
  for (auto _ : state) {
    tape.clear();
    auto s = lstm_step<float>({tape.param(w), tape.param(b)}, tape.constant(x), {tape.constant(h0), tape.constant(c0)});
    benchmark::DoNotOptimize(s.h.value().data().data());
  }
}
BENCHMARK(BM_LstmStep)->Arg(32)->Arg(64)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
  Seq2Seq model(shape(static_cast<std::size_t>(state.range(0))), 1);
  Optimizer opt;
  const auto src = tokens(8);
  auto tgt = tokens(8);
  tgt.push_back(kEos);
  Tape tape;
  for (auto _ : state) {
    tape.clear();
    auto g = model.graph(tape);
    auto loss = g.loss(src, tgt);
    tape.backward(loss);
    opt.step(model.params());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tgt.size()));
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64);

void BM_BeamSearch(benchmark::State& state) {
  Seq2Seq model(shape(64), 2);
  DecodeConfig cfg;
  cfg.beam = static_cast<std::size_t>(state.range(0));
  const auto src = tokens(8);
  for (auto _ : state) benchmark::DoNotOptimize(beam_search(model, src, cfg).hyps.size());
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(7)->Arg(20);

void BM_GuidedBeamSearch(benchmark::State& state) {
  Seq2Seq model(shape(64), 2);
  FunctionScorer scorer([](std::span<const int>, const ScoreQuery& q) { return -0.1 * static_cast<double>(q.prefix.size()); },
                        true);
  DecodeConfig cfg;
  cfg.mode = DecodeMode::mmi_q;
  cfg.weight = 1.0;
  cfg.beam = static_cast<std::size_t>(state.range(0));
  const auto src = tokens(8);
  for (auto _ : state) benchmark::DoNotOptimize(guided_beam_search(model, scorer, src, cfg).hyps.size());
}
BENCHMARK(BM_GuidedBeamSearch)->Arg(7);

}  // namespace

BENCHMARK_MAIN();
