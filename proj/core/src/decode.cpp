#include "fdq/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fdq/error.hpp"
#include "fdq/value.hpp"
#include "fdq/vocab.hpp"

namespace fdq {

DecodeMode parse_decode_mode(const std::string& name) {
  if (name == "sbs") return DecodeMode::sbs;
  if (name == "length_q") return DecodeMode::length_q;
  if (name == "mmi_q") return DecodeMode::mmi_q;
  if (name == "outcome_q") return DecodeMode::outcome_q;
  if (name == "mmi_rerank") return DecodeMode::mmi_rerank;
  if (name == "exhaustive") return DecodeMode::exhaustive;
  throw ConfigError("unknown decode mode '" + name + "'");
}

std::string to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::sbs: return "sbs";
    case DecodeMode::length_q: return "length_q";
    case DecodeMode::mmi_q: return "mmi_q";
    case DecodeMode::outcome_q: return "outcome_q";
    case DecodeMode::mmi_rerank: return "mmi_rerank";
    case DecodeMode::exhaustive: return "exhaustive";
  }
  return "?";
}

bool ranks_before(double score_a, std::span<const int> a, double score_b, std::span<const int> b) {
  if (score_a != score_b) return score_a > score_b;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

namespace {

struct Live {
  std::vector<int> tokens;
  double logp = 0.0;
  StepOutput next;  // distribution over the token after `tokens`
};

struct Candidate {
  std::size_t parent = 0;
  int token = 0;
  double logp = 0.0;
  double q_term = 0.0;
  double combined = 0.0;
  std::ptrdiff_t child = -1;  // index into the step's speculative states
};

struct Protocol {
  bool active = false;
  std::size_t length = 0;
  bool mask = true;
};

std::size_t resolve_cap(const Seq2Seq& model, const DecodeConfig& config) {
  const std::size_t cap = config.max_length ? config.max_length : model.config().max_length;
  if (cap < 1) throw ConfigError("decode: max length must be at least 1");
  return cap;
}

void sort_hyps(std::vector<Hypothesis>& hyps, bool by_logp) {
  std::stable_sort(hyps.begin(), hyps.end(), [by_logp](const Hypothesis& a, const Hypothesis& b) {
    return by_logp ? ranks_before(a.logp, a.tokens, b.logp, b.tokens)
                   : ranks_before(a.combined, a.tokens, b.combined, b.tokens);
  });
}

NBestList run_beam(const Seq2Seq& model, std::span<const int> source, const DecodeConfig& config,
                   const Scorer* scorer, std::span<const int> prefix, const Protocol& protocol) {
  if (config.beam < 1) throw ConfigError("decode: beam size must be at least 1");
  if (!(config.weight >= 0.0)) throw ConfigError("decode: weight must be non-negative");
  std::size_t cap = resolve_cap(model, config);
  if (protocol.active) cap = std::max(cap, protocol.length + 1);
  const std::size_t beam = config.beam;
  const std::size_t vocab = model.config().target_vocab;

  const Encoded enc = model.encode(encoder_input(source));
  std::unique_ptr<ScorerSession> session = scorer ? scorer->open(source) : nullptr;
  const bool want_hidden = scorer && scorer->needs_hidden();

  Live root{{}, 0.0, model.start(enc)};
  for (int tok : prefix) {
    if (tok == kEos) throw ContractError("beam_search: forced prefix contains EOS");
    root.logp += root.next.logprobs.at(static_cast<std::size_t>(tok));
    root.tokens.push_back(tok);
    root.next = model.decode_step(root.next.state, tok, enc);
  }

  std::vector<Live> live;
  live.push_back(std::move(root));
  std::vector<Hypothesis> finished;
  bool first_eos_wins = false;
  std::vector<int> scratch;

  while (!live.empty() && finished.size() < beam) {
    const std::size_t step = live.front().tokens.size() + 1;
    const bool only_eos = step >= cap;
    const bool mask_eos = protocol.active && protocol.mask && step <= protocol.length && !only_eos;

    std::vector<Candidate> cands;
    std::vector<StepOutput> children;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Live& h = live[i];
      for (std::size_t v = 0; v < vocab; ++v) {
        const int tok = static_cast<int>(v);
        if (tok == kPad || tok == kBos) continue;
        if (only_eos && tok != kEos) continue;
        if (mask_eos && tok == kEos) continue;
        Candidate c;
        c.parent = i;
        c.token = tok;
        c.logp = h.logp + h.next.logprobs[v];
        c.combined = c.logp;
        if (session) {
          const Tensor* hidden = nullptr;
          if (want_hidden) {
            if (tok == kEos) {
              hidden = &h.next.state.hidden();
            } else {
              c.child = static_cast<std::ptrdiff_t>(children.size());
              children.push_back(model.decode_step(h.next.state, tok, enc));
              hidden = &children.back().state.hidden();
            }
          }
          scratch = h.tokens;
          scratch.push_back(tok);
          c.q_term = session->term({scratch, hidden, config.target_length});
          c.combined = c.logp + config.weight * c.q_term;
        }
        cands.push_back(std::move(c));
      }
    }

    const std::size_t keep = std::min(beam - finished.size(), cands.size());
    auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.combined != b.combined) return a.combined > b.combined;
      if (a.parent != b.parent) {
        const auto& ta = live[a.parent].tokens;
        const auto& tb = live[b.parent].tokens;
        if (ta != tb) return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
      }
      return a.token < b.token;
    };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

    std::vector<Live> next_live;
    std::vector<Hypothesis> step_finished;
    for (std::size_t k = 0; k < keep; ++k) {
      Candidate& c = cands[k];
      const Live& parent = live[c.parent];
      std::vector<int> tokens = parent.tokens;
      tokens.push_back(c.token);
      if (c.token == kEos) {
        step_finished.push_back({std::move(tokens), c.logp, c.q_term, c.combined, true});
      } else {
        StepOutput out = c.child >= 0 ? std::move(children[static_cast<std::size_t>(c.child)])
                                      : model.decode_step(parent.next.state, c.token, enc);
        next_live.push_back({std::move(tokens), c.logp, std::move(out)});
      }
    }

    if (protocol.active && (step == protocol.length + 1 || first_eos_wins)) {
      if (!step_finished.empty()) {
        sort_hyps(step_finished, true);
        return {std::move(step_finished)};
      }
      first_eos_wins = true;
    }
    for (auto& h : step_finished) finished.push_back(std::move(h));
    live = std::move(next_live);
  }

  sort_hyps(finished, protocol.active);
  return {std::move(finished)};
}

}  // namespace

NBestList beam_search(const Seq2Seq& model, std::span<const int> source, const DecodeConfig& config,
                      const Scorer* scorer, std::span<const int> prefix) {
  return run_beam(model, source, config, scorer, prefix, {});
}

NBestList guided_beam_search(const Seq2Seq& model, const Scorer& scorer, std::span<const int> source,
                             const DecodeConfig& config) {
  if (config.mode == DecodeMode::length_q && !config.target_length) {
    throw ConfigError("length_q decoding needs a target length L");
  }
  return run_beam(model, source, config, &scorer, {}, {});
}

NBestList length_forced_select(const Seq2Seq& model, const Scorer* scorer, std::span<const int> source,
                               const DecodeConfig& config) {
  if (!config.target_length || *config.target_length < 1) {
    throw ConfigError("length-forced selection needs a target length L >= 1");
  }
  return run_beam(model, source, config, scorer, {}, {true, *config.target_length, config.mask_early_eos});
}

NBestList mmi_rerank(const Seq2Seq& forward, const Seq2Seq& backward, std::span<const int> source,
                     const DecodeConfig& config) {
  NBestList list = beam_search(forward, source, config);
  if (config.nbest > 0 && config.nbest < list.hyps.size()) list.hyps.resize(config.nbest);
  for (auto& h : list.hyps) {
    const std::vector<int> content(h.tokens.begin(), h.tokens.end() - 1);
    h.q_term = backward_logprob(backward, source, content);
    h.combined = h.logp + config.weight * h.q_term;
  }
  sort_hyps(list.hyps, false);
  return list;
}

Hypothesis exhaustive_decode(const Seq2Seq& model, const Scorer* scorer, std::span<const int> source,
                             const DecodeConfig& config) {
  const std::size_t cap = resolve_cap(model, config);
  const std::size_t vocab = model.config().target_vocab;
  std::vector<int> decodable;
  for (std::size_t v = 0; v < vocab; ++v) {
    if (static_cast<int>(v) != kPad && static_cast<int>(v) != kBos) decodable.push_back(static_cast<int>(v));
  }
  const double space = std::pow(static_cast<double>(decodable.size()), static_cast<double>(cap));
  if (space > 1e6) {
    throw GuardError("exhaustive search over " + std::to_string(decodable.size()) + "^" + std::to_string(cap) +
                     " sequences refused (limit 10^6)");
  }
  const Encoded enc = model.encode(encoder_input(source));
  std::unique_ptr<ScorerSession> session = scorer ? scorer->open(source) : nullptr;
  const bool want_hidden = scorer && scorer->needs_hidden();

  Hypothesis best;
  bool have_best = false;
  std::vector<int> tokens;
  auto visit = [&](auto&& self, const StepOutput& out, double logp) -> void {
    const std::size_t step = tokens.size() + 1;
    for (int tok : decodable) {
      const double lp = logp + out.logprobs[static_cast<std::size_t>(tok)];
      if (tok == kEos) {
        tokens.push_back(kEos);
        Hypothesis h{tokens, lp, 0.0, lp, true};
        if (session) {
          h.q_term = session->term({tokens, want_hidden ? &out.state.hidden() : nullptr, config.target_length});
          h.combined = lp + config.weight * h.q_term;
        }
        if (!have_best || ranks_before(h.combined, h.tokens, best.combined, best.tokens)) {
          best = std::move(h);
          have_best = true;
        }
        tokens.pop_back();
      } else if (step < cap) {
        tokens.push_back(tok);
        self(self, model.decode_step(out.state, tok, enc), lp);
        tokens.pop_back();
      }
    }
  };
  visit(visit, model.start(enc), 0.0);
  return best;
}

Hypothesis decode_one(const DecodeResources& res, std::span<const int> source, const DecodeConfig& config) {
  if (!res.forward) throw ContractError("decode: no forward model");
  const Seq2Seq& model = *res.forward;
  auto need_scorer = [&]() -> const Scorer& {
    if (!res.scorer) throw ConfigError("decode mode " + to_string(config.mode) + " needs a Q estimator");
    return *res.scorer;
  };
  switch (config.mode) {
    case DecodeMode::sbs:
      if (config.force_length) return length_forced_select(model, nullptr, source, config).best();
      return beam_search(model, source, config).best();
    case DecodeMode::length_q:
    case DecodeMode::mmi_q:
    case DecodeMode::outcome_q: {
      const Scorer& scorer = need_scorer();
      if (config.force_length) return length_forced_select(model, &scorer, source, config).best();
      return guided_beam_search(model, scorer, source, config).best();
    }
    case DecodeMode::mmi_rerank:
      if (!res.backward) throw ConfigError("mmi_rerank needs a backward model");
      return mmi_rerank(model, *res.backward, source, config).best();
    case DecodeMode::exhaustive: return exhaustive_decode(model, res.scorer, source, config);
  }
  throw ContractError("unhandled decode mode");
}

std::vector<DecodeResult> decode_corpus(const DecodeResources& res, const std::vector<std::vector<int>>& sources,
                                        const DecodeConfig& config, std::span<const std::size_t> lengths) {
  if (!lengths.empty() && lengths.size() != sources.size()) {
    throw ContractError("decode_corpus: " + std::to_string(lengths.size()) + " lengths for " +
                        std::to_string(sources.size()) + " sources");
  }
  std::vector<DecodeResult> out;
  out.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    DecodeResult r;
    r.id = i;
    DecodeConfig c = config;
    if (!lengths.empty()) c.target_length = lengths[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.hyp = decode_one(res, sources[i], c);
    } catch (const Error& e) {
      r.error = e.what();
    }
    r.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fdq
