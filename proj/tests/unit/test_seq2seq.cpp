#include <doctest/doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "fdq/checkpoint.hpp"
#include "fdq/seq2seq.hpp"
#include "fdq/train.hpp"
#include "fixtures.hpp"

using namespace fdq;
using fdq::testing::trained_copy;

namespace {

Seq2SeqConfig small(std::size_t vocab = 12, bool attention = true) {
  return {.source_vocab = vocab, .target_vocab = vocab, .hidden = 8, .layers = 1, .attention = attention};
}

double logsumexp(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Corpus tiny_corpus(TaskKind kind, std::size_t pairs, std::uint64_t seed) {
  TaskSpec spec;
  spec.task = kind;
  spec.vocab_size = 8;
  spec.min_length = 2;
  spec.max_length = 5;
  spec.pairs = pairs;
  spec.seed = seed;
  return gen_task(spec);
}

std::vector<int> ids(const Vocab& v, const std::string& text) {
  const auto words = tokenize(text);
  return v.encode(words);
}

}  // namespace

TEST_SUITE("seq2seq") {

TEST_CASE("encode shape and determinism") {
  Seq2Seq m(small(), 1);
  const std::vector<int> src{4, 5, 6, 7, 8};
  const Encoded a = m.encode(src);
  CHECK(a.outputs.size() == 5);
  for (const auto& o : a.outputs) CHECK(o.shape() == Shape{8});
  const Encoded b = m.encode(src);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a.outputs[i].value() == b.outputs[i].value());
  CHECK_THROWS_AS(m.encode(std::vector<int>{}), ContractError);
}

TEST_CASE("permuting the source changes a trained model's outputs") {
  const auto& t = trained_copy();
  const auto& v = t.data.train.vocab.source;
  const auto x = ids(v, "1 2 3 4");
  const auto y = ids(v, "4 3 2 1");
  const Encoded a = t.model->encode(x), b = t.model->encode(y);
  CHECK(a.outputs.back().value() != b.outputs.back().value());
  CHECK(t.model->start(a).logprobs != t.model->start(b).logprobs);
}

TEST_CASE("decode_step returns a log-distribution") {
  Rng rng(2);
  for (bool attention : {true, false}) {
    Seq2Seq m(small(12, attention), 3);
    const Encoded enc = m.encode(std::vector<int>{4, 9, 6});
    StepOutput s = m.start(enc);
    for (int step = 0; step < 6; ++step) {
      CHECK(std::abs(logsumexp(s.logprobs)) < 1e-5);
      CHECK(s.state.step == static_cast<std::size_t>(step));
      s = m.decode_step(s.state, 4 + static_cast<int>(rng.below(8)), enc);
    }
  }
}

TEST_CASE("zero-initialized model is uniform") {
  Seq2Seq m(small(10), 1);
  m.params().fill(0.0f);
  const Encoded enc = m.encode(std::vector<int>{4, 5});
  const StepOutput s = m.start(enc);
  for (double lp : s.logprobs) CHECK(lp == doctest::Approx(-std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("state from another model is rejected") {
  Seq2Seq a(small(), 1), b(small(), 1);
  const Encoded ea = a.encode(std::vector<int>{4, 5});
  const Encoded eb = b.encode(std::vector<int>{4, 5});
  const StepOutput sa = a.start(ea);
  CHECK_THROWS_AS(b.decode_step(sa.state, 4, eb), ContractError);
  CHECK_THROWS_AS(b.start(ea), ContractError);
}

TEST_CASE("trained copy model predicts the next source token") {
  const auto& t = trained_copy();
  const auto& tv = t.data.train.vocab.target;
  const auto src = ids(t.data.train.vocab.source, "3 9 4");
  const Encoded enc = t.model->encode(src);
  StepOutput s = t.model->start(enc);
  for (int tok : ids(tv, "3 9")) s = t.model->decode_step(s.state, tok, enc);
  const auto best = std::max_element(s.logprobs.begin(), s.logprobs.end()) - s.logprobs.begin();
  CHECK(tv.token(static_cast<int>(best)) == "4");
}

TEST_CASE("copy task trains to low perplexity") {
  const auto& t = trained_copy();
  REQUIRE(!t.report.epochs.empty());
  CHECK(t.report.epochs.size() <= 30);
  CHECK(t.report.epochs.back().dev_perplexity < 1.5);
  CHECK(t.model->trained());
}

TEST_CASE("sequence_logprob definitions") {
  Seq2Seq m(small(), 4);
  const std::vector<int> src{4, 7, 5};
  const Encoded enc = m.encode(src);
  const StepOutput first = m.start(enc);
  CHECK(m.sequence_logprob(src, std::vector<int>{kEos}) == doctest::Approx(first.logprobs[kEos]).epsilon(1e-6));

  const std::vector<int> y{6, 9, 4, kEos};
  double sum = 0;
  StepOutput s = first;
  double prev = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sum += s.logprobs[static_cast<std::size_t>(y[i])];
    CHECK(sum <= prev);
    prev = sum;
    if (i + 1 < y.size()) s = m.decode_step(s.state, y[i], enc);
  }
  CHECK(std::abs(m.sequence_logprob(src, y) - sum) < 1e-5);
  CHECK(m.sequence_logprob(src, y) <= 0.0);

  CHECK_THROWS_AS(m.sequence_logprob(src, std::vector<int>{4, 5}), ContractError);
  CHECK_THROWS_AS(m.sequence_logprob(src, std::vector<int>{40, kEos}), ContractError);
}

TEST_CASE("scoring is independent of batch context") {
  Corpus c = tiny_corpus(TaskKind::reverse, 12, 1);
  Seq2Seq m(small(c.vocab.target.size()), 2);
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& p : c.pairs) {
    Corpus one;
    one.vocab = c.vocab;
    one.pairs = {p};
    const double alone = m.sequence_logprob(p.source, p.target);
    CHECK(std::abs(-mean_token_loss(m, one) * static_cast<double>(p.target.size()) - alone) < 1e-5);
    total += alone;
    tokens += p.target.size();
  }
  CHECK(std::abs(-mean_token_loss(m, c) * static_cast<double>(tokens) - total) < 1e-4);

  // Taped loss of a pair equals its inference score.
  const auto& p = c.pairs[3];
  Tape tape;
  const double taped = m.graph(tape).loss(p.source, p.target).item();
  CHECK(std::abs(taped + m.sequence_logprob(p.source, p.target)) < 1e-5);
}

TEST_CASE("training loss drops and starts near uniform") {
  Corpus c = tiny_corpus(TaskKind::copy, 300, 2);
  Seq2Seq m(small(c.vocab.target.size()), 3);
  TrainSchedule sch;
  sch.epochs = 5;
  sch.optim.learning_rate = 3e-3f;
  sch.seed = 4;
  const TrainReport r = train_mle(m, c, nullptr, sch);
  CHECK(r.initial_loss == doctest::Approx(std::log(static_cast<double>(c.vocab.target.size()))).epsilon(0.05));
  REQUIRE(r.epochs.size() == 5);
  CHECK(r.epochs.back().train_loss <= 0.9 * r.epochs.front().train_loss);

  Seq2Seq again(small(c.vocab.target.size()), 3);
  const TrainReport r2 = train_mle(again, c, nullptr, sch);
  for (std::size_t i = 0; i < r.epochs.size(); ++i) CHECK(r.epochs[i].train_loss == r2.epochs[i].train_loss);
  CHECK(m.to_checkpoint().to_bytes() == again.to_checkpoint().to_bytes());
}

TEST_CASE("divergent training aborts") {
  Corpus c = tiny_corpus(TaskKind::copy, 40, 3);
  Seq2Seq m(small(c.vocab.target.size()), 3);
  TrainSchedule sch;
  sch.epochs = 3;
  sch.optim.learning_rate = 1e30f;
  sch.optim.clip_norm = 0.0f;
  CHECK_THROWS_AS(train_mle(m, c, nullptr, sch), DivergenceError);
}

TEST_CASE("the two attention parameter sets are distinct and train differently") {
  Corpus c = tiny_corpus(TaskKind::reverse, 16, 5);
  Seq2Seq m(small(c.vocab.target.size()), 6);
  const auto& l = m.layout();
  CHECK(l.att_out_w != l.att_feed_w);
  CHECK(&m.params()[l.att_out_w].value != &m.params()[l.att_feed_w].value);
  Tape tape;
  auto g = m.graph(tape);
  std::vector<Var> losses;
  for (const auto& p : c.pairs) losses.push_back(g.loss(p.source, p.target));
  tape.backward(add_n<float>(losses));
  CHECK(m.params()[l.att_out_w].grad != m.params()[l.att_feed_w].grad);
}

TEST_CASE("sample_continuation") {
  Seq2Seq m(small(20), 9);
  const std::vector<int> src{4, 5, 6};
  Rng rng(1);
  const std::vector<int> done{7, 8, kEos};
  CHECK(m.sample_continuation(src, done, rng) == done);

  const std::vector<int> prefix{7};
  std::set<std::vector<int>> seen;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng r(seed);
    const auto y = m.sample_continuation(src, prefix, r);
    CHECK(y.front() == 7);
    CHECK(y.back() == kEos);
    CHECK(y.size() <= m.config().max_length);
    for (int tok : y) {
      CHECK(tok >= 0);
      CHECK(tok < 20);
    }
    seen.insert(y);
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Seq2Seq m(small(), 11);
  const std::string bytes = m.to_checkpoint().to_bytes();
  CHECK(bytes.substr(0, 4) == "FDQ1");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == kCheckpointVersion);
  Seq2Seq back = Seq2Seq::from_checkpoint(Checkpoint::from_bytes(bytes));
  CHECK(back.config() == m.config());
  CHECK(back.to_checkpoint().to_bytes() == bytes);
  for (std::size_t i = 0; i < m.params().size(); ++i) CHECK(back.params()[i].value == m.params()[i].value);
  CHECK_THROWS_AS(Checkpoint::from_bytes("FDQ2"), LoadError);
  CHECK_THROWS_AS(Checkpoint::from_bytes(bytes.substr(0, bytes.size() - 3)), LoadError);
}

TEST_CASE("checkpoint layout") {
  Checkpoint c;
  c.add("w", Tensor::matrix(1, 2, {1.5f, -2.0f}));
  const std::string b = c.to_bytes();
  // magic 4 + version 4 + count 8 + name_bytes 4 + "w" 1 + rank 4 + dims 16 + payload 8
  REQUIRE(b.size() == 49);
  std::uint64_t count;
  std::memcpy(&count, b.data() + 8, 8);
  CHECK(count == 1);
  std::uint32_t name_len, rank;
  std::memcpy(&name_len, b.data() + 16, 4);
  CHECK(name_len == 1);
  CHECK(b[20] == 'w');
  std::memcpy(&rank, b.data() + 21, 4);
  CHECK(rank == 2);
  std::uint64_t d0, d1;
  std::memcpy(&d0, b.data() + 25, 8);
  std::memcpy(&d1, b.data() + 33, 8);
  CHECK(d0 == 1);
  CHECK(d1 == 2);
  float v[2];
  std::memcpy(v, b.data() + 41, 8);
  CHECK(v[0] == 1.5f);
  CHECK(v[1] == -2.0f);
}

}  // TEST_SUITE
