#include "fdq/cli/suites.hpp"

#include <cmath>

#include "fdq/decode.hpp"
#include "fdq/gradcheck.hpp"
#include "fdq/ops.hpp"
#include "fdq/regressor.hpp"
#include "fdq/rng.hpp"
#include "fdq/scorers.hpp"
#include "fdq/seq2seq.hpp"
#include "fdq/value.hpp"
#include "fdq/vocab.hpp"

namespace fdq::cli {
namespace {

constexpr double kOpBound = 1e-4;
constexpr double kCompositeBound = 1e-3;

std::vector<ParameterD*> all_of(ParameterSetD& ps) {
  std::vector<ParameterD*> out;
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(&ps[i]);
  return out;
}

TensorD random_vector(Rng& rng, std::size_t n) {
  TensorD t({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

std::vector<int> random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(kSpecialCount + rng.below(vocab - kSpecialCount)));
  return out;
}

GradientCase run_case(std::string name, double bound, const BasicLossBuilder<double>& build, ParameterSetD& ps) {
  auto params = all_of(ps);
  auto r = fd_check<double>(build, params);
  return {std::move(name), r.max_relative_error, bound, r.worst};
}

GradientCase seq2seq_case(std::string name, Rng& rng, std::size_t layers, bool attention) {
  Seq2SeqConfig c{.source_vocab = 9, .target_vocab = 8, .hidden = 5, .layers = layers, .attention = attention};
  ParameterSetD ps;
  const auto layout = declare_seq2seq<double>(c, ps);
  ps.init_uniform(rng, 0.5);
  const auto src = random_tokens(rng, 4, c.source_vocab);
  auto tgt = random_tokens(rng, 3, c.target_vocab);
  tgt.push_back(kEos);
  BasicLossBuilder<double> f = [&](TapeD& t) {
    Seq2SeqGraph<double> g(c, layout, tape_params(t, ps));
    return g.loss(src, tgt);
  };
  return run_case(std::move(name), kCompositeBound, f, ps);
}

}  // namespace

std::vector<GradientCase> gradient_suite(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradient"));
  std::vector<GradientCase> out;

  {
    ParameterSetD ps;
    auto& w = ps.add("w", {5, 4});
    auto& b = ps.add("b", {5});
    auto& x = ps.add("x", {4});
    ps.init_uniform(rng, 0.8);
    out.push_back(run_case("affine", kOpBound, [&](TapeD& t) {
      return softmax_xent(affine(t.param(w), t.param(b), t.param(x)), 2);
    }, ps));
  }
  {
    const std::size_t h = 6, d = 5;
    ParameterSetD ps;
    auto& w = ps.add("w", {4 * h, d + h});
    auto& b = ps.add("b", {4 * h});
    auto& x = ps.add("x", {d});
    auto& h0 = ps.add("h0", {h});
    auto& c0 = ps.add("c0", {h});
    auto& r = ps.add("r", {h});
    ps.init_uniform(rng, 0.5);
    out.push_back(run_case("lstm_step", kOpBound, [&](TapeD& t) {
      auto s = lstm_step<double>({t.param(w), t.param(b)}, t.param(x), {t.param(h0), t.param(c0)});
      return add(softmax_xent(s.h, 1), dot(s.c, t.param(r)));
    }, ps));
  }
  {
    // Two decoder steps so the fed-forward attention vector is exercised.
    Seq2SeqConfig c{.source_vocab = 9, .target_vocab = 8, .hidden = 5, .layers = 1, .attention = true};
    ParameterSetD ps;
    const auto layout = declare_seq2seq<double>(c, ps);
    ps.init_uniform(rng, 0.5);
    const auto src = random_tokens(rng, 4, c.source_vocab);
    const int first = random_tokens(rng, 1, c.target_vocab)[0];
    out.push_back(run_case("attention_step", kOpBound, [&](TapeD& t) {
      Seq2SeqGraph<double> g(c, layout, tape_params(t, ps));
      auto enc = g.encode(src);
      auto state = g.initial_state(enc);
      g.step(state, kBos, enc);
      return softmax_xent(g.step(state, first, enc), kEos);
    }, ps));
  }
  out.push_back(seq2seq_case("seq2seq_loss_attention", rng, 2, true));
  out.push_back(seq2seq_case("seq2seq_loss_plain", rng, 1, false));

  for (const char* head : {"length_head", "backward_opt1_head"}) {
    ParameterSetD ps;
    const std::size_t width = 6;
    const auto layout = declare_mlp<double>(ps, "head/", width, width);
    ps.init_uniform(rng, 0.5);
    const auto x = random_vector(rng, width);
    const double label = rng.uniform(-1.0, 1.0);
    out.push_back(run_case(head, kOpBound, [&](TapeD& t) {
      auto p = tape_params(t, ps);
      return squared_error(mlp_forward<double>(p, layout, t.constant(x)), label);
    }, ps));
  }
  // A partial-target bucket model is a seq2seq model trained on y_{1:t} -> X.
  out.push_back(seq2seq_case("backward_opt2_bucket", rng, 1, true));
  {
    OutcomeConfig c{.source_vocab = 9, .target_vocab = 8, .hidden = 5};
    ParameterSetD ps;
    const auto layout = declare_outcome<double>(c, ps);
    ps.init_uniform(rng, 0.5);
    const auto src = random_tokens(rng, 4, c.source_vocab);
    const auto prefix = random_tokens(rng, 3, c.target_vocab);
    out.push_back(run_case("outcome_head", kCompositeBound, [&](TapeD& t) {
      auto p = tape_params(t, ps);
      return squared_error(outcome_forward<double>(p, layout, c.hidden, src, prefix), 0.4);
    }, ps));
  }
  return out;
}

OracleSummary oracle_suite(std::size_t models, std::uint64_t seed) {
  OracleSummary summary;
  for (std::size_t m = 0; m < models; ++m) {
    Rng rng(derive_seed(seed, "oracle", m));
    // Four decodable target tokens (EOS, UNK and two words): at most 340
    // sequences up to the cap, all of which fit in the beam.
    Seq2SeqConfig c{.source_vocab = kSpecialCount + 4,
                    .target_vocab = kSpecialCount + 2,
                    .hidden = 6,
                    .layers = 1,
                    .attention = rng.below(2) == 1,
                    .max_length = 4};
    Seq2Seq model(c, rng.next_u64());
    // Wider weights give peaked, less uniform distributions.
    Rng init(rng.next_u64());
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      for (auto& v : model.params()[i].value.data()) v = static_cast<float>(init.uniform(-1.5, 1.5));
    }
    const auto source = random_tokens(rng, 1 + rng.below(4), c.source_vocab);

    DecodeConfig cfg;
    cfg.beam = 400;
    cfg.max_length = 4;
    const auto beam = beam_search(model, source, cfg).best();
    const auto exact = exhaustive_decode(model, nullptr, source, cfg);
    if (beam.tokens == exact.tokens) {
      ++summary.beam_matches;
    } else if (summary.first_mismatch.empty()) {
      summary.first_mismatch = "model " + std::to_string(m) + " (sbs)";
    }

    const std::uint64_t salt = rng.next_u64();
    FunctionScorer scorer(
        [salt](std::span<const int>, const ScoreQuery& q) {
          std::string key(reinterpret_cast<const char*>(q.prefix.data()), q.prefix.size_bytes());
          const std::uint64_t h = fnv1a64(key) ^ salt;
          return static_cast<double>(derive_seed(h, "q") >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        },
        false, "random");
    cfg.mode = rng.below(2) == 1 ? DecodeMode::mmi_q : DecodeMode::outcome_q;
    cfg.weight = rng.uniform(0.5, 3.0);
    const auto guided = guided_beam_search(model, scorer, source, cfg).best();
    const auto guided_exact = exhaustive_decode(model, &scorer, source, cfg);
    if (guided.tokens == guided_exact.tokens) {
      ++summary.guided_matches;
    } else if (summary.first_mismatch.empty()) {
      summary.first_mismatch = "model " + std::to_string(m) + " (guided)";
    }
    ++summary.models;
  }
  return summary;
}

}  // namespace fdq::cli
