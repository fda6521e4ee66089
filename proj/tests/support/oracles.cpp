#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fdq/vocab.hpp"

namespace fdq::testing {

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

std::map<std::vector<int>, int> ngrams(const std::vector<int>& s, int n) {
  std::map<std::vector<int>, int> m;
  for (int i = 0; i + n <= static_cast<int>(s.size()); ++i) ++m[std::vector<int>(s.begin() + i, s.begin() + i + n)];
  return m;
}

std::vector<int> strip(const std::vector<int>& s) {
  std::vector<int> out;
  for (int t : s) {
    if (t == kEos) break;
    if (t != kPad && t != kBos) out.push_back(t);
  }
  return out;
}

}  // namespace

RefLstm ref_lstm_step(const std::vector<double>& w, const std::vector<double>& b, const std::vector<double>& x,
                      const std::vector<double>& h, const std::vector<double>& c) {
  const std::size_t H = h.size();
  std::vector<double> in(x);
  in.insert(in.end(), h.begin(), h.end());
  const std::vector<double> z = ref_affine(w, b, in);
  RefLstm out{std::vector<double>(H), std::vector<double>(H)};
  for (std::size_t k = 0; k < H; ++k) {
    const double i = sig(z[k]), f = sig(z[H + k]), g = std::tanh(z[2 * H + k]), o = sig(z[3 * H + k]);
    out.c[k] = f * c[k] + i * g;
    out.h[k] = o * std::tanh(out.c[k]);
  }
  return out;
}

std::vector<double> ref_affine(const std::vector<double>& w, const std::vector<double>& b,
                               const std::vector<double>& x) {
  std::vector<double> out(b);
  const std::size_t in = x.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < in; ++j) out[i] += w[i * in + j] * x[j];
  }
  return out;
}

Enumerated enumerate_argmax(const Seq2Seq& model, std::span<const int> source, std::size_t cap, double weight,
                            const std::function<double(std::span<const int>)>& q) {
  std::vector<int> tokens;
  for (int v = 0; v < static_cast<int>(model.config().target_vocab); ++v) {
    if (v != kPad && v != kBos) tokens.push_back(v);
  }
  const Encoded enc = model.encode(encoder_input(source));
  Enumerated best;
  bool have = false;
  // Iterative depth-first walk with an explicit stack of (prefix, state, logp).
  struct Frame {
    std::vector<int> prefix;
    StepOutput out;
    double logp;
  };
  std::vector<Frame> stack;
  stack.push_back({{}, model.start(enc), 0.0});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    for (int tok : tokens) {
      const double lp = f.logp + f.out.logprobs[static_cast<std::size_t>(tok)];
      std::vector<int> seq = f.prefix;
      seq.push_back(tok);
      if (tok == kEos) {
        ++best.count;
        const double score = weight == 0.0 ? lp : lp + weight * q(seq);
        if (!have || score > best.score || (score == best.score && seq < best.tokens)) {
          best.tokens = seq;
          best.score = score;
          have = true;
        }
      } else if (seq.size() < cap) {
        stack.push_back({seq, model.decode_step(f.out.state, tok, enc), lp});
      }
    }
  }
  return best;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double ref_bleu(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs, int order,
                bool smoothing) {
  std::vector<double> match(order, 0.0), total(order, 0.0);
  double hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto h = strip(hyps[s]), r = strip(refs[s]);
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (int n = 1; n <= order; ++n) {
      const auto hn = ngrams(h, n), rn = ngrams(r, n);
      for (const auto& [g, cnt] : hn) {
        const auto it = rn.find(g);
        match[n - 1] += std::min(cnt, it == rn.end() ? 0 : it->second);
        total[n - 1] += cnt;
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < order; ++n) {
    double m = match[n], t = total[n];
    if (smoothing && n >= 1) {
      m += 1;
      t += 1;
    }
    if (m == 0 || t == 0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_sum / order);
}

}  // namespace fdq::testing
