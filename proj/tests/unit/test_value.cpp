#include <doctest/doctest.h>

#include <cmath>
#include <numeric>

#include "fdq/metrics.hpp"
#include "fdq/rollout.hpp"
#include "fdq/value.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fdq;
using fdq::testing::trained_copy;

namespace {

std::vector<int> content_of(const SequencePair& p) {
  return {p.target.begin(), p.target.begin() + static_cast<std::ptrdiff_t>(p.length())};
}

struct Dialogue {
  Splits data;
  std::unique_ptr<Seq2Seq> forward, backward;
  std::unique_ptr<PartialBackwardEnsemble> ensemble;
  EnsembleReport ensemble_report;
  TrainReport backward_report;
};

TrainSchedule dialogue_schedule() {
  TrainSchedule s;
  s.epochs = 40;
  s.optim.learning_rate = 3e-3f;
  s.seed = 2;
  return s;
}

const Dialogue& dialogue_run() {
  static const Dialogue d = [] {
    TaskSpec spec;
    spec.task = TaskKind::dialogue;
    spec.pairs = 2000;
    spec.seed = 11;
    Dialogue out;
    out.data = split(gen_task(spec), {0.8, 0.1, 0.1}, 3);
    Seq2SeqConfig shape;
    shape.source_vocab = out.data.train.vocab.source.size();
    shape.target_vocab = out.data.train.vocab.target.size();
    shape.hidden = 32;
    out.forward = std::make_unique<Seq2Seq>(shape, 5);
    train_mle(*out.forward, out.data.train, &out.data.dev, dialogue_schedule());
    out.backward = std::make_unique<Seq2Seq>(
        train_backward_model(out.data.train, &out.data.dev, shape, dialogue_schedule(), 6, &out.backward_report));
    out.ensemble = std::make_unique<PartialBackwardEnsemble>(
        train_backward_q_option2(out.data.train, &out.data.dev, BucketSpec::standard(), false, shape,
                                 dialogue_schedule(), 7, &out.ensemble_report));
    return out;
  }();
  return d;
}

struct Outcome {
  Splits data;
  std::unique_ptr<Seq2Seq> model;
  std::vector<RolloutRecord> train, dev;
  std::unique_ptr<OutcomePredictor> q;
  RegressionReport report;
};

// Reverse task, model stopped early so rollouts carry signal.
const Outcome& outcome() {
  static const Outcome o = [] {
    TaskSpec spec;
    spec.task = TaskKind::reverse;
    spec.vocab_size = 10;
    spec.min_length = 2;
    spec.max_length = 6;
    spec.pairs = 600;
    spec.seed = 4;
    Outcome out;
    out.data = split(gen_task(spec), {0.7, 0.15, 0.15}, 1);
    Seq2SeqConfig mc;
    mc.source_vocab = out.data.train.vocab.source.size();
    mc.target_vocab = out.data.train.vocab.target.size();
    mc.hidden = 32;
    out.model = std::make_unique<Seq2Seq>(mc, 3);
    TrainSchedule s;
    s.epochs = 30;
    s.optim.learning_rate = 3e-3f;
    s.stop_below_perplexity = 2.0;
    train_mle(*out.model, out.data.train, &out.data.dev, s);
    RolloutConfig rc;
    rc.seed = 9;
    out.train = generate_rollouts(*out.model, out.data.train, rc);
    out.dev = generate_rollouts(*out.model, out.data.dev, rc);
    OutcomeConfig oc{mc.source_vocab, mc.target_vocab, 32};
    RegressionSchedule rs;
    rs.seed = 1;
    rs.epochs = 40;
    auto [q, rep] = train_outcome_q(out.train, out.dev, oc, rs);
    out.q = std::make_unique<OutcomePredictor>(std::move(q));
    out.report = rep;
    return out;
  }();
  return o;
}

}  // namespace

TEST_SUITE("value") {

TEST_CASE("length labels count the remaining tokens") {
  const auto& t = trained_copy();
  const auto ex = length_examples(*t.model, t.data.dev);
  REQUIRE(!ex.labels.empty());
  for (std::size_t i = 0; i < ex.labels.size(); ++i) {
    const std::size_t n = t.data.dev.pairs[ex.pair_index[i]].length();
    CHECK(ex.labels[i] == static_cast<double>(n - ex.position[i]));
    if (ex.position[i] == n) CHECK(ex.labels[i] == 0.0);
    if (n == 5 && ex.position[i] == 2) CHECK(ex.labels[i] == 3.0);
    // telescoping along one target
    if (i + 1 < ex.labels.size() && ex.pair_index[i + 1] == ex.pair_index[i]) {
      CHECK(ex.labels[i] == ex.labels[i + 1] + 1.0);
    }
  }
}

TEST_CASE("length regressor beats the constant baseline") {
  const auto& t = trained_copy();
  RegressionSchedule rs;
  rs.seed = 1;
  auto [q, rep] = train_length_q(*t.model, t.data.train, t.data.dev, rs);
  CHECK(rep.mse < rep.baseline_mse);

  // constant baseline recomputed independently
  const auto tr = length_examples(*t.model, t.data.train);
  const auto dv = length_examples(*t.model, t.data.dev);
  const double mean = std::accumulate(tr.labels.begin(), tr.labels.end(), 0.0) / static_cast<double>(tr.labels.size());
  double base = 0, mse = 0;
  for (std::size_t i = 0; i < dv.labels.size(); ++i) {
    base += (dv.labels[i] - mean) * (dv.labels[i] - mean);
    const double p = q.predict(dv.features[i]);
    CHECK(std::isfinite(p));
    mse += (dv.labels[i] - p) * (dv.labels[i] - p);
  }
  base /= static_cast<double>(dv.labels.size());
  mse /= static_cast<double>(dv.labels.size());
  CHECK(base == doctest::Approx(rep.baseline_mse).epsilon(1e-6));
  CHECK(mse == doctest::Approx(rep.mse).epsilon(1e-4));

  // source of length 6: about 5 tokens remain after the first
  int checked = 0;
  for (const auto& p : t.data.dev.pairs) {
    if (p.length() != 6) continue;
    const auto hs = t.model->hidden_states(p.source, content_of(p));
    CHECK(std::abs(q.predict(hs[0]) - 5.0) <= 1.5);
    CHECK(q.predict(hs[0]) == q.predict(hs[0]));
    ++checked;
  }
  CHECK(checked > 0);
  CHECK_THROWS_AS(q.predict(Tensor({3})), DimensionError);

  const auto back = LengthRegressor::from_checkpoint(Checkpoint::from_bytes(q.to_checkpoint().to_bytes()));
  CHECK(back.predict(dv.features[0]) == q.predict(dv.features[0]));
}

TEST_CASE("length regressor needs a trained model") {
  const auto& t = trained_copy();
  Seq2Seq fresh(t.model->config(), 1);
  CHECK_THROWS_AS(train_length_q(fresh, t.data.train, t.data.dev, {}), ContractError);
}

TEST_CASE("backward model trains on swapped pairs with its own parameters") {
  const auto& d = dialogue_run();
  const auto& r = d.backward_report;
  REQUIRE(r.epochs.size() >= 2);
  CHECK(r.epochs.back().dev_perplexity < r.epochs.front().dev_perplexity);
  for (const auto& p : d.data.dev.pairs) CHECK(std::isfinite(backward_logprob(*d.backward, p.source, content_of(p))));
  CHECK(d.backward->uid() != d.forward->uid());
  for (std::size_t i = 0; i < d.backward->params().size(); ++i) {
    for (std::size_t j = 0; j < d.forward->params().size(); ++j) {
      CHECK(&d.backward->params()[i].value != &d.forward->params()[j].value);
    }
  }
}

TEST_CASE("option 1 labels and regressor") {
  const auto& d = dialogue_run();
  const auto ex = backward_examples(*d.forward, *d.backward, d.data.dev);
  REQUIRE(!ex.labels.empty());
  for (std::size_t i = 0; i < ex.labels.size(); ++i) {
    const auto& p = d.data.dev.pairs[ex.pair_index[i]];
    // recomputed from scratch: X + EOS scored with Y content as the source
    std::vector<int> x = p.source;
    x.push_back(kEos);
    const double expect = d.backward->sequence_logprob(content_of(p), x);
    CHECK(std::abs(ex.labels[i] - expect) < 1e-5);
    if (i > 0 && ex.pair_index[i - 1] == ex.pair_index[i]) CHECK(ex.labels[i] == ex.labels[i - 1]);
  }
  RegressionSchedule rs;
  rs.seed = 3;
  auto [q, rep] = train_backward_q_option1(*d.forward, *d.backward, d.data.train, d.data.dev, rs);
  CHECK(rep.mse < rep.baseline_mse);
  CHECK(q.predict(ex.features[0]) == q.predict(ex.features[0]));
}

TEST_CASE("option 2 corpora and routing") {
  const auto& d = dialogue_run();
  const auto parts = partial_corpora(d.data.train, BucketSpec::standard(), false);
  std::size_t total = 0, expect = 0;
  for (const auto& c : parts) total += c.size();
  for (const auto& p : d.data.train.pairs) expect += p.length();
  CHECK(total == expect);
  const BucketSpec b = BucketSpec::standard();
  CHECK(b.bucket_of(3) == 1);
  CHECK(b.bucket_of(1) == 0);
  CHECK(b.bucket_of(13) == 4);
  CHECK(b.bucket_of(500) == 4);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (const auto& p : parts[i].pairs) CHECK(b.bucket_of(p.source.size()) == i);
  }
  BucketSpec gap{{{1, 2}, {4, 0}}};
  CHECK_THROWS_AS(gap.validate(), ConfigError);
}

TEST_CASE("option 2 full-target estimate is the bucket model's score") {
  const auto& d = dialogue_run();
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& p = d.data.dev.pairs[i];
    const auto y = content_of(p);
    const std::size_t bucket = d.ensemble->buckets().bucket_of(y.size());
    if (!d.ensemble->has_model(bucket)) continue;
    std::vector<int> x = p.source;
    x.push_back(kEos);
    CHECK(d.ensemble->estimate(p.source, y) == d.ensemble->model(bucket).sequence_logprob(y, x));
    std::vector<int> with_eos = y;
    with_eos.push_back(kEos);
    CHECK(d.ensemble->estimate(p.source, with_eos) == d.ensemble->estimate(p.source, y));
  }
}

TEST_CASE("option 2 ensemble tracks the true backward score") {
  const auto& d = dialogue_run();
  std::vector<double> est, truth;
  for (const auto& p : d.data.dev.pairs) {
    const auto y = content_of(p);
    if (!d.ensemble->has_model(d.ensemble->buckets().bucket_of(std::max<std::size_t>(y.size(), 1)))) continue;
    est.push_back(d.ensemble->estimate(p.source, y));
    truth.push_back(backward_logprob(*d.backward, p.source, y));
  }
  REQUIRE(est.size() >= 150);
  CHECK(fdq::testing::spearman(est, truth) > 0.5);
}

TEST_CASE("option 2 prefers a specific reply over the generic one") {
  const auto& d = dialogue_run();
  const auto& sv = d.data.train.vocab.source;
  const auto& tv = d.data.train.vocab.target;
  int wins = 0, total = 0;
  const auto generic = tv.encode(std::vector<std::string>{"i", "dont", "know", "."});
  for (int k = 0; k < dialogue::kTemplates; k += 2) {
    const auto specific = tv.encode(dialogue::replies(k)[1].first);
    double s = 0, g = 0;
    std::size_t n = 0;
    for (const auto& p : d.data.test.pairs) {
      if (dialogue::template_of(sv.decode(p.source)) != k) continue;
      for (std::size_t t = 1; t <= 4; ++t) {
        s += d.ensemble->estimate(p.source, std::span(specific).first(std::min(t, specific.size())));
        g += d.ensemble->estimate(p.source, std::span(generic).first(t));
      }
      ++n;
    }
    if (n == 0) continue;
    wins += s > g;
    ++total;
  }
  REQUIRE(total > 0);
  CHECK(wins == total);
}

TEST_CASE("full-target-only ensemble reproduces a plain backward model") {
  TaskSpec spec;
  spec.task = TaskKind::copy;
  spec.vocab_size = 8;
  spec.min_length = 1;
  spec.max_length = 4;
  spec.pairs = 150;
  spec.seed = 2;
  const Corpus c = gen_task(spec);
  Seq2SeqConfig shape;
  shape.hidden = 8;
  TrainSchedule s;
  s.epochs = 2;
  s.seed = 5;
  const BucketSpec one{{{1, 0}}};
  auto ens = train_backward_q_option2(c, nullptr, one, true, shape, s, 9);
  TrainSchedule plain = s;
  plain.seed = derive_seed(s.seed, "bucket", 0);
  const Seq2Seq bwd = train_backward_model(c, nullptr, shape, plain, derive_seed(9, "bucket", 0));
  for (const auto& p : c.pairs) {
    CHECK(ens.estimate(p.source, content_of(p)) == backward_logprob(bwd, p.source, content_of(p)));
  }
}

TEST_CASE("missing bucket model") {
  PartialBackwardEnsemble e(BucketSpec::standard(), std::vector<std::optional<Seq2Seq>>(5));
  CHECK_THROWS_AS(e.estimate(std::vector<int>{4}, std::vector<int>{5, 6, 7}), MissingModelError);
}

TEST_CASE("rollout records are self-consistent") {
  const auto& o = outcome();
  REQUIRE(!o.train.empty());
  BleuConfig smooth;
  smooth.smoothing = true;
  std::size_t expect = 0;
  for (const auto& p : o.data.train.pairs) expect += std::min<std::size_t>(4, p.length() + 1) * 2;
  CHECK(o.train.size() == expect);
  for (const auto& r : o.train) {
    CHECK(r.completed.back() == kEos);
    CHECK(std::equal(r.prefix.begin(), r.prefix.end(), r.completed.begin()));
    CHECK(r.prefix.size() == r.t);
  }
  // q recomputed by the reference BLEU against the pair's gold target
  std::size_t i = 0;
  for (std::size_t pi = 0; pi < o.data.train.size(); ++pi) {
    const auto& p = o.data.train.pairs[pi];
    const std::size_t per = std::min<std::size_t>(4, p.length() + 1) * 2;
    for (std::size_t k = 0; k < per; ++k, ++i) {
      const auto& r = o.train[i];
      CHECK(r.source == p.source);
      CHECK(std::abs(r.q - fdq::testing::ref_bleu({r.completed}, {p.target}, 4, true)) < 1e-6);
    }
  }
}

TEST_CASE("rollouts are reproducible and round-trip through NDJSON") {
  const auto& o = outcome();
  RolloutConfig rc;
  rc.seed = 9;
  Corpus head = o.data.dev;
  head.pairs.resize(10);
  const auto a = generate_rollouts(*o.model, head, rc);
  const auto b = generate_rollouts(*o.model, head, rc);
  CHECK(a == b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == o.dev[i]);
  fdq::testing::TempDir dir("rollouts");
  save_rollouts(a, dir / "r.ndjson");
  CHECK(load_rollouts(dir / "r.ndjson") == a);
  Corpus none = head;
  none.pairs.clear();
  CHECK(generate_rollouts(*o.model, none, rc).empty());
}

TEST_CASE("a rollout that samples EOS first scores zero") {
  const auto& o = outcome();
  Seq2Seq eos(o.model->config(), 1);
  eos.params().fill(0.0f);
  eos.params()[eos.layout().out_b].value[kEos] = 50.0f;
  Corpus one = o.data.dev;
  one.pairs.resize(1);
  RolloutConfig rc;
  rc.positions = 1;
  rc.samples = 1;
  const auto recs = generate_rollouts(eos, one, rc);
  REQUIRE(recs.size() == 1);
  if (recs[0].t == 1) {
    CHECK(recs[0].completed == std::vector<int>{kEos});
    CHECK(recs[0].q == 0.0);
  }
  CHECK(outcome_score(OutcomeMetric::bleu, std::vector<int>{kEos}, one.pairs[0].target) == 0.0);
  CHECK(outcome_score(OutcomeMetric::rouge2, std::vector<int>{kEos}, one.pairs[0].target) == 0.0);
}

TEST_CASE("outcome predictor learns rollout outcomes") {
  const auto& o = outcome();
  CHECK(o.report.mse < o.report.baseline_mse);
  double var = 0, mean = 0;
  for (const auto& r : o.train) mean += r.q;
  mean /= static_cast<double>(o.train.size());
  for (const auto& r : o.dev) var += (r.q - mean) * (r.q - mean);
  CHECK(o.report.baseline_mse == doctest::Approx(var / static_cast<double>(o.dev.size())).epsilon(1e-6));

  // gold prefixes against single-token corruptions
  Rng rng(5);
  const std::size_t vocab = o.q->config().target_vocab;
  double gold = 0, bad = 0, observed = 0;
  std::size_t n = 0;
  for (const auto& p : o.data.dev.pairs) {
    const auto y = content_of(p);
    std::vector<int> prefix(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(y.size() / 2 + 1));
    auto corrupt = prefix;
    const std::size_t pos = rng.below(corrupt.size());
    corrupt[pos] = kSpecialCount + static_cast<int>(rng.below(vocab - kSpecialCount));
    if (corrupt == prefix) continue;
    gold += o.q->predict(p.source, prefix);
    bad += o.q->predict(p.source, corrupt);
    ++n;
  }
  CHECK(gold / static_cast<double>(n) > bad / static_cast<double>(n));

  // mean prediction on the rollout prefixes against the mean observed outcome
  double pred_gold = 0;
  for (const auto& r : o.dev) {
    observed += r.q;
    pred_gold += o.q->predict(r.source, r.prefix);
  }
  CHECK(std::abs(pred_gold - observed) / static_cast<double>(o.dev.size()) <= 0.15);
}

TEST_CASE("outcome predictor contracts") {
  const auto& o = outcome();
  const auto& r = o.dev.front();
  const double a = o.q->predict(r.source, r.prefix);
  CHECK(a == o.q->predict(r.source, r.prefix));
  CHECK(std::isfinite(a));
  OutcomePredictor::Session s(*o.q, r.source);
  CHECK(s.predict(r.prefix) == doctest::Approx(a).epsilon(1e-6));
  CHECK_THROWS_AS(o.q->predict(r.source, std::vector<int>{}), ContractError);
  CHECK_THROWS_AS(o.q->predict(r.source, std::vector<int>{999}), ContractError);
  CHECK_THROWS_AS(o.q->predict(std::vector<int>{999}, r.prefix), ContractError);
  const auto back = OutcomePredictor::from_checkpoint(Checkpoint::from_bytes(o.q->to_checkpoint().to_bytes()));
  CHECK(back.predict(r.source, r.prefix) == a);
}

TEST_CASE("identical labels give a constant predictor") {
  std::vector<RolloutRecord> recs;
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    RolloutRecord r;
    r.source = {4 + static_cast<int>(rng.below(4)), 5};
    r.prefix = {4 + static_cast<int>(rng.below(4))};
    r.t = 1;
    r.completed = {r.prefix[0], kEos};
    r.q = 0.25;
    recs.push_back(r);
  }
  const std::vector<double> labels(recs.size(), 0.25);
  const auto scale = LabelScale::fit(labels);
  CHECK(scale.mean == doctest::Approx(0.25));
  CHECK(scale.scale == 1.0);
  RegressionSchedule rs;
  rs.epochs = 300;
  rs.patience = 0;
  auto [q, rep] = train_outcome_q(recs, recs, OutcomeConfig{8, 8, 8}, rs);
  CHECK(rep.baseline_mse < 1e-12);
  CHECK(rep.mse < 1e-4);
  for (const auto& r : recs) CHECK(std::abs(q.predict(r.source, r.prefix) - 0.25) < 0.01);
}

}  // TEST_SUITE
