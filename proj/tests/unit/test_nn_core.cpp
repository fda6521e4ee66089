#include <doctest/doctest.h>

#include <cmath>
#include <limits>

#include "fdq/gradcheck.hpp"
#include "fdq/ops.hpp"
#include "fdq/optim.hpp"
#include "fdq/seq2seq.hpp"
#include "fdq/vocab.hpp"
#include "oracles.hpp"

using namespace fdq;

namespace {

std::vector<double> to_vec(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

TensorD rand_tensor(Rng& rng, Shape shape, double range) {
  TensorD t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-range, range);
  return t;
}

std::vector<ParameterD*> all(ParameterSetD& ps) {
  std::vector<ParameterD*> out;
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(&ps[i]);
  return out;
}

}  // namespace

TEST_SUITE("nn-core") {

TEST_CASE("affine hand cases") {
  auto w = constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  auto b = constant(Tensor::vector({0, 0}));
  auto y = affine(w, b, constant(Tensor::vector({3, 4})));
  CHECK(y.value() == Tensor::vector({3, 4}));

  auto w2 = constant(Tensor::matrix(2, 2, {2, 0, 0, 2}));
  auto b2 = constant(Tensor::vector({1, 1}));
  CHECK(affine(w2, b2, constant(Tensor::vector({1, 1}))).value() == Tensor::vector({3, 3}));
}

TEST_CASE("affine matches a brute-force dot product") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t out = 1 + rng.below(7), in = 1 + rng.below(9);
    TensorD w = rand_tensor(rng, {out, in}, 1.0), b = rand_tensor(rng, {out}, 1.0), x = rand_tensor(rng, {in}, 1.0);
    const auto y = affine(constant(w), constant(b), constant(x)).value();
    const auto ref = testing::ref_affine(to_vec(w), to_vec(b), to_vec(x));
    for (std::size_t i = 0; i < out; ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("affine batch input") {
  auto w = constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto b = constant(Tensor::vector({1, -1}));
  auto y = affine(w, b, constant(Tensor::matrix(2, 3, {1, 0, 0, 0, 1, 1})));
  CHECK(y.shape() == Shape{2, 2});
  CHECK(y.value() == Tensor::matrix(2, 2, {2, 3, 6, 10}));
}

TEST_CASE("affine shape mismatch names both shapes") {
  auto w = constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto b = constant(Tensor::vector({0, 0}));
  try {
    affine(w, b, constant(Tensor::vector({1, 2})));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[2]") != std::string::npos);
  }
}

TEST_CASE("lstm_step with zero parameters") {
  const std::size_t h = 4, d = 3;
  auto s = lstm_step<float>({constant(Tensor({4 * h, d + h})), constant(Tensor({4 * h}))},
                            constant(Tensor::vector({1, -2, 3})),
                            {constant(Tensor({h}, 0.7f)), constant(Tensor({h}, -0.3f))});
  // all gates are sigmoid(0) = 0.5 and the candidate is tanh(0) = 0
  for (float v : s.c.value().data()) CHECK(v == doctest::Approx(-0.15f));
  for (float v : s.h.value().data()) CHECK(v == doctest::Approx(0.5 * std::tanh(-0.15)));
}

TEST_CASE("lstm_step saturated forget gate keeps the cell") {
  const std::size_t h = 3, d = 2;
  Rng rng(3);
  TensorD w = rand_tensor(rng, {4 * h, d + h}, 0.1);
  for (std::size_t r = 0; r < 2 * h; ++r)
    for (std::size_t c = 0; c < d + h; ++c) w.at(r, c) = 0.0;
  TensorD b({4 * h});
  for (std::size_t k = 0; k < h; ++k) {
    b[k] = -50.0;     // input gate closed
    b[h + k] = 50.0;  // forget gate open
  }
  TensorD c0 = TensorD::vector({0.4, -0.9, 0.1});
  auto s = lstm_step<double>({constant(w), constant(b)}, constant(TensorD::vector({0.5, -0.5})),
                             {constant(TensorD::vector({0.2, 0.3, -0.1})), constant(c0)});
  for (std::size_t k = 0; k < h; ++k) CHECK(std::abs(s.c.value()[k] - c0[k]) < 1e-6);
}

TEST_CASE("lstm_step matches the reference implementation") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t h = 2 + rng.below(6), d = 1 + rng.below(6);
    TensorD w = rand_tensor(rng, {4 * h, d + h}, 0.3), b = rand_tensor(rng, {4 * h}, 0.3);
    TensorD x = rand_tensor(rng, {d}, 1.0), h0 = rand_tensor(rng, {h}, 1.0), c0 = rand_tensor(rng, {h}, 1.0);
    auto s = lstm_step<double>({constant(w), constant(b)}, constant(x), {constant(h0), constant(c0)});
    const auto ref = testing::ref_lstm_step(to_vec(w), to_vec(b), to_vec(x), to_vec(h0), to_vec(c0));
    for (std::size_t k = 0; k < h; ++k) {
      CHECK(std::abs(s.h.value()[k] - ref.h[k]) < 1e-6);
      CHECK(std::abs(s.c.value()[k] - ref.c[k]) < 1e-6);
    }
  }
}

TEST_CASE("lstm_step rejects a state of the wrong size") {
  const std::size_t h = 3, d = 2;
  CHECK_THROWS_AS(lstm_step<float>({constant(Tensor({4 * h, d + h})), constant(Tensor({4 * h}))},
                                   constant(Tensor({d})), {constant(Tensor({h + 1})), constant(Tensor({h + 1}))}),
                  DimensionError);
}

TEST_CASE("softmax_xent values") {
  CHECK(softmax_xent(constant(Tensor::vector({0, 0})), 0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  const double expected = std::log1p(std::exp(-10.0));
  CHECK(softmax_xent(constant(TensorD::vector({10, 0})), 0).item() == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected == doctest::Approx(4.54e-5).epsilon(1e-3));
  CHECK_THROWS_AS(softmax_xent(constant(Tensor::vector({0, 0})), 2), IndexError);
  CHECK_THROWS_AS(softmax_xent(constant(Tensor::vector({0, 0})), -1), IndexError);
}

TEST_CASE("softmax is a distribution") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits({1 + rng.below(30)});
    for (auto& v : logits.data()) v = static_cast<float>(rng.uniform(-20, 20));
    const auto p = softmax(constant(logits)).value();
    double total = 0;
    for (float v : p.data()) {
      CHECK(v >= 0.0f);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  // max subtraction keeps huge logits finite
  const auto big = log_softmax(constant(Tensor::vector({1000, 999}))).value();
  CHECK(big.all_finite());
}

TEST_CASE("backward simple gradients") {
  TapeD tape;
  auto x = tape.input(TensorD::vector({1, -2, 3}));
  tape.backward(sum(x));
  CHECK(x.grad() == TensorD::vector({1, 1, 1}));

  TapeD tape2;
  auto y = tape2.input(TensorD::vector({1.5, -2, 0.25}));
  tape2.backward(dot(y, y));
  CHECK(y.grad() == TensorD::vector({3, -4, 0.5}));
}

TEST_CASE("backward needs a scalar") {
  Tape tape;
  auto x = tape.input(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(scale(x, 2.0f)), ContractError);
}

TEST_CASE("backward clears the tape and parameter gradients accumulate") {
  ParameterSet ps;
  auto& p = ps.add("p", {2});
  p.value = Tensor::vector({1, 2});
  for (int round = 0; round < 2; ++round) {
    Tape tape;
    auto v = tape.param(p);
    tape.backward(dot(v, v));
    CHECK(tape.size() == 0);
  }
  CHECK(p.grad == Tensor::vector({4, 8}));
}

TEST_CASE("composite graph agrees with central differences") {
  Rng rng(8);
  ParameterSetD ps;
  auto& w = ps.add("w", {3, 4});
  auto& b = ps.add("b", {3});
  auto& x = ps.add("x", {4});
  ps.init_uniform(rng, 1.0);
  BasicLossBuilder<double> f = [&](TapeD& t) {
    auto hdn = tanh(affine(t.param(w), t.param(b), t.param(x)));
    return add(softmax_xent(mul(hdn, sigmoid(hdn)), 1), sum(concat(hdn, slice(t.param(x), 1, 2))));
  };
  auto params = all(ps);
  CHECK(fd_check<double>(f, params).max_relative_error < 1e-4);
}

TEST_CASE("fd_check on affine, lstm_step and a seq2seq loss") {
  Rng rng(9);
  {
    ParameterSetD ps;
    auto& w = ps.add("w", {4, 3});
    auto& b = ps.add("b", {4});
    auto& x = ps.add("x", {3});
    ps.init_uniform(rng, 1.0);
    auto params = all(ps);
    CHECK(fd_check<double>([&](TapeD& t) { return softmax_xent(affine(t.param(w), t.param(b), t.param(x)), 3); },
                           params)
              .max_relative_error < 1e-4);
  }
  {
    const std::size_t h = 4, d = 3;
    ParameterSetD ps;
    auto& w = ps.add("w", {4 * h, d + h});
    auto& b = ps.add("b", {4 * h});
    auto& x = ps.add("x", {d});
    auto& h0 = ps.add("h0", {h});
    auto& c0 = ps.add("c0", {h});
    ps.init_uniform(rng, 0.5);
    auto params = all(ps);
    CHECK(fd_check<double>(
              [&](TapeD& t) {
                auto s = lstm_step<double>({t.param(w), t.param(b)}, t.param(x), {t.param(h0), t.param(c0)});
                return add(sum(s.h), dot(s.c, s.c));
              },
              params)
              .max_relative_error < 1e-4);
  }
  {
    Seq2SeqConfig c{.source_vocab = 7, .target_vocab = 7, .hidden = 4, .layers = 1, .attention = true};
    ParameterSetD ps;
    const auto layout = declare_seq2seq<double>(c, ps);
    ps.init_uniform(rng, 0.5);
    const std::vector<int> src{4, 5, 6}, tgt{5, 4, kEos};
    auto params = all(ps);
    CHECK(fd_check<double>(
              [&](TapeD& t) {
                Seq2SeqGraph<double> g(c, layout, tape_params(t, ps));
                return g.loss(src, tgt);
              },
              params)
              .max_relative_error < 1e-3);
  }
}

TEST_CASE("float autodiff agrees with double autodiff") {
  Seq2SeqConfig c{.source_vocab = 8, .target_vocab = 8, .hidden = 6, .layers = 1, .attention = true};
  ParameterSetD psd;
  const auto layout = declare_seq2seq<double>(c, psd);
  Rng rng(4);
  psd.init_uniform(rng, 0.3);
  ParameterSet psf = psd.cast<float>();
  const std::vector<int> src{4, 6, 7, 5}, tgt{7, 6, 5, kEos};
  {
    TapeD t;
    Seq2SeqGraph<double> g(c, layout, tape_params(t, psd));
    t.backward(g.loss(src, tgt));
  }
  {
    Tape t;
    Seq2SeqGraph<float> g(c, layout, tape_params(t, psf));
    t.backward(g.loss(src, tgt));
  }
  for (std::size_t i = 0; i < psd.size(); ++i) {
    double num = 0, den = 0;
    for (std::size_t k = 0; k < psd[i].grad.size(); ++k) {
      const double d = psd[i].grad[k] - psf[i].grad[k];
      num += d * d;
      den += psd[i].grad[k] * psd[i].grad[k];
    }
    CHECK(std::sqrt(num) <= 1e-4 * (std::sqrt(den) + 1e-6));
  }
}

TEST_CASE("sgd step") {
  ParameterSet ps;
  auto& p = ps.add("p", {1});
  p.value[0] = 1.0f;
  p.grad = Tensor::vector({1.0f});
  Optimizer opt({.algorithm = OptimAlgorithm::sgd, .learning_rate = 0.1f});
  opt.step(ps);
  CHECK(p.value[0] == doctest::Approx(0.9f));
  CHECK(opt.state().step == 1);
}

TEST_CASE("gradient clipping scales by the global norm") {
  ParameterSet ps;
  auto& a = ps.add("a", {2});
  auto& b = ps.add("b", {1});
  a.grad = Tensor::vector({6, 0});
  b.grad = Tensor::vector({8});
  CHECK(global_grad_norm(ps) == doctest::Approx(10.0));
  Optimizer opt({.algorithm = OptimAlgorithm::sgd, .learning_rate = 1.0f, .clip_norm = 1.0f});
  CHECK(opt.step(ps) == doctest::Approx(10.0));
  CHECK(a.value[0] == doctest::Approx(-0.6f));
  CHECK(b.value[0] == doctest::Approx(-0.8f));
}

TEST_CASE("adam minimizes a quadratic") {
  ParameterSet ps;
  auto& p = ps.add("p", {1});
  p.value[0] = 1.0f;
  Optimizer opt({.algorithm = OptimAlgorithm::adam, .learning_rate = 0.01f});
  CHECK(opt.state().step == 0);
  int steps = 0;
  while (std::abs(p.value[0]) >= 0.01f && steps < 500) {
    Tape t;
    auto v = t.param(p);
    t.backward(dot(v, v));
    opt.step(ps);
    ++steps;
  }
  CHECK(std::abs(p.value[0]) < 0.01f);
  CHECK(steps <= 500);
}

TEST_CASE("non-finite gradients raise a divergence error") {
  ParameterSet ps;
  auto& p = ps.add("p", {2});
  p.value = Tensor::vector({1, 2});
  p.grad = Tensor::vector({std::numeric_limits<float>::quiet_NaN(), 1});
  Optimizer opt;
  CHECK_THROWS_AS(opt.step(ps), DivergenceError);
  CHECK(p.value == Tensor::vector({1, 2}));
}

TEST_CASE("tensor shape contract") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>{1, 2}), DimensionError);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
}

TEST_CASE("operations are deterministic") {
  Rng a(77), b(77);
  for (int i = 0; i < 5; ++i) CHECK(a.next_u64() == b.next_u64());
  Seq2SeqConfig c{.source_vocab = 9, .target_vocab = 9, .hidden = 8};
  Seq2Seq m1(c, 3), m2(c, 3);
  const std::vector<int> src{4, 5, 8};
  CHECK(m1.start(m1.encode(src)).logprobs == m2.start(m2.encode(src)).logprobs);
}

TEST_CASE("parameter initialization range") {
  Seq2SeqConfig c{.source_vocab = 9, .target_vocab = 9, .hidden = 8};
  Seq2Seq m(c, 1);
  float lo = 1, hi = -1;
  for (std::size_t i = 0; i < m.params().size(); ++i)
    for (float v : m.params()[i].value.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  CHECK(lo >= -0.08f);
  CHECK(hi <= 0.08f);
}

}  // TEST_SUITE
