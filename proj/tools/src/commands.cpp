#include "fdq/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "fdq/checkpoint.hpp"
#include "fdq/cli/suites.hpp"
#include "fdq/corpus.hpp"
#include "fdq/decode.hpp"
#include "fdq/error.hpp"
#include "fdq/rollout.hpp"
#include "fdq/scorers.hpp"
#include "fdq/tasks.hpp"
#include "fdq/train.hpp"
#include "fdq/value.hpp"

namespace fdq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path run_dir(const ExperimentConfig& c) { return fs::path(c.out); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

std::string weight_tag(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", w);
  return buf;
}

// ---- manifest -----------------------------------------------------------------

void update_manifest(const ExperimentConfig& c, const std::string& command, const std::vector<fs::path>& artifacts,
                     double seconds) {
  const fs::path dir = run_dir(c);
  const fs::path path = dir / layout::kManifest;
  json m = json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      m = json::parse(in);
    } catch (const json::exception&) {
      m = json::object();
    }
  }
  json list = json::array();
  for (const auto& a : artifacts) {
    if (!fs::exists(a)) throw Error("artifact missing at end of " + command + ": " + a.string());
    list.push_back(fs::relative(a, dir).generic_string());
  }
  m["config_hash"] = config_hash(c);
  m["seed"] = c.seed;
  m["versions"] = {{"fdq", "0.1.0"}, {"checkpoint_format", kCheckpointVersion},
#if defined(__VERSION__)
                   {"compiler", __VERSION__}
#else
                   {"compiler", "unknown"}
#endif
  };
  m["commands"][command] = {{"artifacts", list}, {"config_hash", config_hash(c)}, {"seconds", seconds}};
  write_json(path, m);
}

// ---- data ---------------------------------------------------------------------

Corpus build_corpus(const ExperimentConfig& c) {
  if (c.task.name == "text") {
    return load_parallel_text(c.task.source_file, c.task.target_file, VocabConfig{c.task.min_count});
  }
  TaskSpec spec;
  spec.task = parse_task(c.task.name);
  spec.vocab_size = c.task.vocab_size;
  spec.min_length = c.task.min_length;
  spec.max_length = c.task.max_length;
  spec.pairs = c.task.pairs;
  spec.seed = derive_seed(c.seed, "data");
  return gen_task(spec);
}

Splits load_run_data(const ExperimentConfig& c) {
  const fs::path dir = run_dir(c) / layout::kData;
  if (!fs::exists(dir)) throw LoadError("no data in " + dir.string() + "; run `fdq train` first");
  return load_splits(dir.string());
}

const Corpus& pick_split(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "dev") return s.dev;
  return s.test;
}

TrainSchedule train_schedule(const ExperimentConfig& c, std::uint64_t seed) {
  TrainSchedule ts;
  ts.epochs = c.train.epochs;
  ts.batch_size = c.train.batch_size;
  ts.optim.learning_rate = static_cast<float>(c.train.learning_rate);
  ts.seed = seed;
  ts.patience = c.train.patience;
  ts.stop_below_perplexity = c.train.stop_below_perplexity;
  ts.sort_by_length = c.train.sort_by_length;
  return ts;
}

RegressionSchedule regression_schedule(const ExperimentConfig& c) {
  RegressionSchedule rs;
  rs.epochs = c.q.epochs;
  rs.batch_size = c.q.batch_size;
  rs.optim.learning_rate = static_cast<float>(c.q.learning_rate);
  rs.seed = derive_seed(c.seed, "q");
  rs.patience = c.q.patience;
  return rs;
}

BucketSpec bucket_spec(const ExperimentConfig& c) {
  BucketSpec b;
  b.ranges = c.q.buckets;
  b.validate();
  return b;
}

bool mode_listed(const ExperimentConfig& c, const std::string& mode) {
  if (c.decode.mode == mode) return true;
  return std::find(c.decode.modes.begin(), c.decode.modes.end(), mode) != c.decode.modes.end();
}

bool wants_backward(const ExperimentConfig& c) {
  if (c.train.backward == "yes") return true;
  if (c.train.backward == "no") return false;
  return c.q.family == "backward_opt1" || mode_listed(c, "mmi_rerank");
}

json train_report_json(const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_perplexity", e.dev_perplexity}});
  }
  return {{"initial_loss", r.initial_loss}, {"epochs", epochs}, {"best_epoch", r.best_epoch},
          {"stop_reason", r.stop_reason}};
}

Seq2Seq load_model(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw LoadError("missing " + what + " checkpoint " + path.string());
  return Seq2Seq::from_checkpoint(Checkpoint::load(path.string()));
}

fs::path q_path(const ExperimentConfig& c, const std::string& name) { return run_dir(c) / layout::kQDir / name; }

// ---- decoding resources --------------------------------------------------------

struct Resources {
  std::unique_ptr<Seq2Seq> forward;
  std::unique_ptr<Seq2Seq> backward;
  std::unique_ptr<LengthRegressor> length;
  std::unique_ptr<BackwardRegressor> backward_q;
  std::unique_ptr<PartialBackwardEnsemble> ensemble;
  std::unique_ptr<OutcomePredictor> outcome;
  std::unique_ptr<Scorer> scorer;

  DecodeResources view() const { return {forward.get(), backward.get(), scorer.get()}; }
};

Checkpoint load_q(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("missing Q checkpoint " + path.string() + "; run `fdq train-q` first");
  return Checkpoint::load(path.string());
}

Resources load_resources(const ExperimentConfig& c, DecodeMode mode) {
  Resources r;
  r.forward = std::make_unique<Seq2Seq>(load_model(run_dir(c) / layout::kForward, "forward"));
  switch (mode) {
    case DecodeMode::sbs:
    case DecodeMode::exhaustive:
      break;
    case DecodeMode::mmi_rerank: {
      const fs::path p = run_dir(c) / layout::kBackward;
      if (!fs::exists(p)) throw ConfigError("mmi_rerank needs " + p.string() + "; train with train.backward=yes");
      r.backward = std::make_unique<Seq2Seq>(Seq2Seq::from_checkpoint(Checkpoint::load(p.string())));
      break;
    }
    case DecodeMode::length_q:
      r.length = std::make_unique<LengthRegressor>(LengthRegressor::from_checkpoint(load_q(q_path(c, "length.fdq"))));
      r.scorer = std::make_unique<LengthScorer>(*r.length);
      break;
    case DecodeMode::mmi_q:
      if (c.q.family == "backward_opt1") {
        r.backward_q = std::make_unique<BackwardRegressor>(
            BackwardRegressor::from_checkpoint(load_q(q_path(c, "backward_opt1.fdq"))));
        r.scorer = std::make_unique<BackwardRegressorScorer>(*r.backward_q);
      } else if (c.q.family == "backward_opt2") {
        const fs::path dir = q_path(c, "backward_opt2");
        if (!fs::exists(dir)) throw ConfigError("missing Q checkpoints in " + dir.string() + "; run `fdq train-q`");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
          if (e.path().extension() == ".fdq") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        std::vector<Checkpoint> parts;
        for (const auto& f : files) parts.push_back(Checkpoint::load(f.string()));
        r.ensemble = std::make_unique<PartialBackwardEnsemble>(PartialBackwardEnsemble::from_checkpoints(parts));
        r.scorer = std::make_unique<PartialBackwardScorer>(*r.ensemble);
      } else {
        throw ConfigError("mode mmi_q needs q.family backward_opt1 or backward_opt2, not " + c.q.family);
      }
      break;
    case DecodeMode::outcome_q:
      r.outcome = std::make_unique<OutcomePredictor>(OutcomePredictor::from_checkpoint(load_q(q_path(c, "outcome.fdq"))));
      r.scorer = std::make_unique<OutcomeScorer>(*r.outcome);
      break;
  }
  return r;
}

DecodeConfig decode_config(const ExperimentConfig& c, DecodeMode mode, double weight) {
  DecodeConfig d;
  d.mode = mode;
  d.beam = c.decode.beam;
  d.weight = weight;
  d.nbest = c.decode.nbest;
  d.max_length = c.decode.max_length;
  d.force_length = c.decode.force_length;
  d.mask_early_eos = c.decode.mask_early_eos;
  return d;
}

struct DecodeItem {
  std::vector<int> source;
  std::optional<std::size_t> length;  // L column of an input file
  std::optional<std::vector<int>> reference;
};

std::vector<DecodeItem> split_items(const Corpus& corpus) {
  std::vector<DecodeItem> items;
  for (const auto& p : corpus.pairs) items.push_back({p.source, std::nullopt, p.target});
  return items;
}

std::vector<DecodeItem> file_items(const std::string& path, const Vocab& source_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read input " + path);
  std::vector<DecodeItem> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    DecodeItem item;
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string::npos && line[first] == '{') {
      try {
        const json j = json::parse(line);
        item.source = source_vocab.encode(tokenize(j.at("src").get<std::string>()));
        if (j.contains("L")) item.length = j.at("L").get<std::size_t>();
      } catch (const json::exception& e) {
        throw LoadError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    } else {
      item.source = source_vocab.encode(tokenize(line));
    }
    items.push_back(std::move(item));
  }
  return items;
}

// L per item according to decode.length_policy; empty when no L applies.
std::vector<std::size_t> target_lengths(const ExperimentConfig& c, const std::vector<DecodeItem>& items,
                                        const Corpus& train) {
  const auto& policy = c.decode.length_policy;
  std::vector<std::size_t> out;
  if (policy == "none") return out;
  std::optional<Rng> rng;
  std::size_t lo = 0, hi = 0;
  if (policy == "random") {
    if (train.empty()) throw ConfigError("length_policy=random needs training data");
    lo = train.pairs.front().length();
    hi = lo;
    for (const auto& p : train.pairs) {
      lo = std::min(lo, p.length());
      hi = std::max(hi, p.length());
    }
    lo = std::max<std::size_t>(lo, 1);
    hi = std::max(hi, lo);
    rng.emplace(derive_seed(c.seed, "decode"));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    if (policy == "input") {
      if (!item.length) throw ConfigError("length_policy=input but input line " + std::to_string(i + 1) + " has no L");
      out.push_back(*item.length);
    } else if (policy == "gold") {
      if (!item.reference) throw ConfigError("length_policy=gold needs references");
      out.push_back(item.reference->empty() ? 0 : item.reference->size() - 1);
    } else if (policy == "fixed") {
      out.push_back(c.decode.length);
    } else {
      out.push_back(static_cast<std::size_t>(rng->between(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi))));
    }
  }
  return out;
}

std::vector<DecodeResult> decode_items(const ExperimentConfig& c, const Resources& r, DecodeMode mode, double weight,
                                       const std::vector<DecodeItem>& items, std::span<const std::size_t> lengths) {
  if (mode == DecodeMode::length_q && lengths.empty()) {
    throw ConfigError("mode length_q needs a target length; set decode.length_policy");
  }
  std::vector<std::vector<int>> sources;
  for (const auto& it : items) sources.push_back(it.source);
  return decode_corpus(r.view(), sources, decode_config(c, mode, weight), lengths);
}

// ---- metrics --------------------------------------------------------------------

// Metrics run over token strings, so hypotheses and references from any
// source (vocab ids, text files) share one id space.
class TokenIndex {
 public:
  Sentence ids(const std::vector<std::string>& words) {
    Sentence out;
    for (const auto& w : words) {
      auto [it, inserted] = index_.try_emplace(w, static_cast<int>(kSpecialCount + index_.size()));
      out.push_back(it->second);
    }
    return out;
  }

 private:
  std::map<std::string, int> index_;
};

struct Scored {
  std::vector<std::vector<std::string>> hyps;
  std::vector<std::vector<std::string>> refs;
  std::vector<std::size_t> lengths;  // empty unless every line carries L
};

MetricReport compute_metric(const std::string& name, const Scored& s, const MetricsSection& m) {
  TokenIndex index;
  std::vector<Sentence> hyps, refs;
  for (const auto& h : s.hyps) hyps.push_back(index.ids(h));
  for (const auto& r : s.refs) refs.push_back(index.ids(r));

  MetricReport rep;
  rep.metric = name;
  if (name == "bleu") {
    BleuConfig bc;
    bc.smoothing = m.smoothing;
    rep.value = bleu(hyps, refs, bc);
    for (std::size_t i = 0; i < hyps.size(); ++i) rep.per_sentence.push_back(sentence_bleu(hyps[i], refs[i], bc));
    rep.config = {{"max_order", bc.max_order}, {"smoothing", bc.smoothing}};
  } else if (name == "rouge2") {
    double total = 0.0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      rep.per_sentence.push_back(rouge2(hyps[i], refs[i]));
      total += rep.per_sentence.back();
    }
    rep.value = hyps.empty() ? 0.0 : total / static_cast<double>(hyps.size());
    rep.config = {{"alpha", 0.5}, {"aggregate", "mean"}};
  } else if (name == "distinct1" || name == "distinct2") {
    const int n = name == "distinct1" ? 1 : 2;
    rep.value = distinct_n(hyps, n);
    rep.config = {{"n", n}, {"denominator", "tokens"}};
  } else if (name == "exact_length") {
    if (s.lengths.size() != hyps.size()) throw ConfigError("metric exact_length needs an L for every hypothesis");
    rep.value = exact_length_rate(hyps, s.lengths);
    for (std::size_t i = 0; i < hyps.size(); ++i) rep.per_sentence.push_back(hyps[i].size() == s.lengths[i] ? 1.0 : 0.0);
  } else if (name == "generic_rate") {
    std::size_t generic = 0;
    for (const auto& h : s.hyps) {
      const bool g = dialogue::is_generic(h);
      generic += g ? 1 : 0;
      rep.per_sentence.push_back(g ? 1.0 : 0.0);
    }
    rep.value = s.hyps.empty() ? 0.0 : static_cast<double>(generic) / static_cast<double>(s.hyps.size());
  } else if (name == "length") {
    double total = 0.0;
    for (const auto& h : hyps) {
      rep.per_sentence.push_back(static_cast<double>(h.size()));
      total += static_cast<double>(h.size());
    }
    rep.value = hyps.empty() ? 0.0 : total / static_cast<double>(hyps.size());
  } else {
    throw ConfigError("unknown metric '" + name + "'");
  }
  return rep;
}

bool lower_is_better(const std::string& metric) { return metric == "generic_rate"; }

std::vector<std::string> words_of(const Vocab& vocab, std::span<const int> ids) {
  return tokenize(vocab.render(ids));
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool is_ndjson(const std::string& path) { return fs::path(path).extension() == ".ndjson"; }

nlohmann::ordered_json decode_record(const Splits& data, std::size_t index, const DecodeItem& item, const DecodeResult& r,
                   std::span<const std::size_t> lengths, bool timing) {
  const auto& tokens = r.hyp.tokens;
  const std::size_t len = content(tokens).size();
  nlohmann::ordered_json j = {{"id", r.id},
            {"src", data.train.vocab.source.render(item.source)},
            {"hyp", data.train.vocab.target.render(tokens)},
            {"logp", r.hyp.logp},
            {"q_term", r.hyp.q_term},
            {"combined", r.hyp.combined},
            {"len", len},
            {"ms", timing ? r.ms : 0.0}};
  if (!lengths.empty()) j["L"] = lengths[index];
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

std::string metric_cell(const json& row, const std::string& metric) {
  if (!row.contains("metrics") || !row["metrics"].contains(metric)) return "";
  return fmt(row["metrics"][metric].get<double>());
}

}  // namespace

// ---- commands --------------------------------------------------------------------

void cmd_train(const ExperimentConfig& c, std::ostream& log) {
  const auto start = Clock::now();
  const fs::path dir = run_dir(c);
  fs::create_directories(dir);
  write_json(dir / layout::kConfig, to_json(c));
  log << "config_hash " << config_hash(c) << "\n";

  Corpus corpus = build_corpus(c);
  Splits s = split(corpus, c.task.split, derive_seed(c.seed, "split"));
  save_splits(s, (dir / layout::kData).string());
  log << "data train " << s.train.size() << " dev " << s.dev.size() << " test " << s.test.size() << "\n";

  Seq2SeqConfig mc;
  mc.source_vocab = s.train.vocab.source.size();
  mc.target_vocab = s.train.vocab.target.size();
  mc.hidden = c.model.hidden;
  mc.layers = c.model.layers;
  mc.attention = c.model.attention;
  Seq2Seq forward(mc, derive_seed(c.seed, "init"));
  const Corpus* dev = s.dev.empty() ? nullptr : &s.dev;
  auto report = train_mle(forward, s.train, dev, train_schedule(c, derive_seed(c.seed, "train")),
                          [&](const EpochRecord& e) {
                            log << "epoch " << e.epoch << " train_loss " << fmt(e.train_loss) << " dev_perplexity "
                                << fmt(e.dev_perplexity) << "\n";
                          });
  const fs::path fpath = dir / layout::kForward;
  forward.to_checkpoint().save(fpath.string());
  const double final_ppl = report.epochs.empty() ? 0.0 : report.epochs.back().dev_perplexity;
  log << "forward " << fpath.string() << " dev_perplexity " << fmt(final_ppl) << " (" << report.stop_reason << ")\n";

  std::vector<fs::path> artifacts{dir / layout::kConfig, dir / layout::kData, fpath};
  const fs::path reports = dir / layout::kReports;
  std::vector<std::pair<double, double>> curve;
  for (const auto& e : report.epochs) curve.emplace_back(static_cast<double>(e.epoch), e.dev_perplexity);
  write_json(reports / "train.json", train_report_json(report));
  write_plot_csv((reports / "train_perplexity.csv").string(), "epoch", "dev_perplexity", curve);
  artifacts.push_back(reports / "train.json");
  artifacts.push_back(reports / "train_perplexity.csv");

  if (wants_backward(c)) {
    TrainReport brep;
    Seq2Seq backward = train_backward_model(s.train, dev, mc, train_schedule(c, derive_seed(c.seed, "train", 1)),
                                            derive_seed(c.seed, "init", 1), &brep);
    const fs::path bpath = dir / layout::kBackward;
    backward.to_checkpoint().save(bpath.string());
    const double bppl = brep.epochs.empty() ? 0.0 : brep.epochs.back().dev_perplexity;
    log << "backward " << bpath.string() << " dev_perplexity " << fmt(bppl) << "\n";
    write_json(reports / "train_backward.json", train_report_json(brep));
    artifacts.push_back(bpath);
    artifacts.push_back(reports / "train_backward.json");
  }
  update_manifest(c, "train", artifacts, seconds_since(start));
}

void cmd_train_q(const ExperimentConfig& c, std::ostream& log) {
  const auto start = Clock::now();
  const fs::path dir = run_dir(c);
  Splits s = load_run_data(c);
  Seq2Seq forward = load_model(dir / layout::kForward, "forward");
  const RegressionSchedule rs = regression_schedule(c);
  const fs::path qdir = dir / layout::kQDir;
  fs::create_directories(qdir);
  std::vector<fs::path> artifacts;
  json report;

  auto log_regression = [&](const RegressionReport& r) {
    log << "mse " << fmt(r.mse, 6) << " baseline_mse " << fmt(r.baseline_mse, 6) << " epochs " << r.epochs << "\n";
    report = {{"family", c.q.family}, {"mse", r.mse}, {"baseline_mse", r.baseline_mse},
              {"train_mse", r.train_mse}, {"epochs", r.epochs}};
  };

  if (c.q.family == "length") {
    auto [q, r] = train_length_q(forward, s.train, s.dev, rs);
    q.to_checkpoint().save((qdir / "length.fdq").string());
    artifacts.push_back(qdir / "length.fdq");
    log_regression(r);
  } else if (c.q.family == "backward_opt1") {
    const fs::path bpath = dir / layout::kBackward;
    if (!fs::exists(bpath)) {
      throw ConfigError("q.family=backward_opt1 needs a backward model; rerun train with train.backward=yes");
    }
    Seq2Seq backward = load_model(bpath, "backward");
    auto [q, r] = train_backward_q_option1(forward, backward, s.train, s.dev, rs);
    q.to_checkpoint().save((qdir / "backward_opt1.fdq").string());
    artifacts.push_back(qdir / "backward_opt1.fdq");
    log_regression(r);
  } else if (c.q.family == "backward_opt2") {
    EnsembleReport er;
    auto ensemble = train_backward_q_option2(s.train, s.dev.empty() ? nullptr : &s.dev, bucket_spec(c),
                                             c.q.full_targets_only, forward.config(),
                                             train_schedule(c, derive_seed(c.seed, "q")),
                                             derive_seed(c.seed, "q", 1), &er);
    const fs::path odir = qdir / "backward_opt2";
    fs::create_directories(odir);
    json buckets = json::array();
    std::size_t trained = 0;
    for (std::size_t b = 0; b < ensemble.buckets().ranges.size(); ++b) {
      json entry = {{"bucket", b}, {"examples", er.examples.at(b)}, {"trained", ensemble.has_model(b)}};
      if (ensemble.has_model(b)) {
        char name[32];
        std::snprintf(name, sizeof name, "bucket_%02zu.fdq", b);
        ensemble.bucket_checkpoint(b).save((odir / name).string());
        artifacts.push_back(odir / name);
        const auto& tr = er.reports.at(trained++);
        const double ppl = tr.epochs.empty() ? 0.0 : tr.epochs.back().dev_perplexity;
        entry["dev_perplexity"] = ppl;
        log << "bucket " << b << " examples " << er.examples[b] << " dev_perplexity " << fmt(ppl) << "\n";
      } else {
        log << "bucket " << b << " empty\n";
      }
      buckets.push_back(entry);
    }
    report = {{"family", c.q.family}, {"buckets", buckets}};
  } else {
    const fs::path rdir = dir / layout::kRollouts;
    const fs::path rtrain = rdir / "train.ndjson", rdev = rdir / "dev.ndjson";
    std::vector<RolloutRecord> train_records, dev_records;
    if (fs::exists(rtrain) && fs::exists(rdev)) {
      train_records = load_rollouts(rtrain.string());
      dev_records = load_rollouts(rdev.string());
      log << "rollouts loaded " << train_records.size() << "/" << dev_records.size() << "\n";
    } else {
      RolloutConfig rc;
      rc.positions = c.q.positions;
      rc.samples = c.q.samples;
      rc.beam = c.q.rollout_beam;
      rc.metric = parse_outcome_metric(c.q.metric);
      rc.gold_prefix = c.q.gold_prefix;
      rc.seed = derive_seed(c.seed, "rollout");
      train_records = generate_rollouts(forward, s.train, rc);
      rc.seed = derive_seed(c.seed, "rollout", 1);
      dev_records = generate_rollouts(forward, s.dev, rc);
      fs::create_directories(rdir);
      save_rollouts(train_records, rtrain.string());
      save_rollouts(dev_records, rdev.string());
      log << "rollouts generated " << train_records.size() << "/" << dev_records.size() << "\n";
    }
    artifacts.push_back(rtrain);
    artifacts.push_back(rdev);
    if (train_records.empty() || dev_records.empty()) throw ConfigError("outcome Q needs non-empty rollouts");
    OutcomeConfig oc;
    oc.source_vocab = forward.config().source_vocab;
    oc.target_vocab = forward.config().target_vocab;
    oc.hidden = c.q.hidden;
    auto [q, r] = train_outcome_q(train_records, dev_records, oc, rs);
    q.to_checkpoint().save((qdir / "outcome.fdq").string());
    artifacts.push_back(qdir / "outcome.fdq");
    log_regression(r);
  }
  const fs::path rpath = dir / layout::kReports / ("q_" + c.q.family + ".json");
  write_json(rpath, report);
  artifacts.push_back(rpath);
  update_manifest(c, "train-q", artifacts, seconds_since(start));
}

fs::path default_decode_path(const ExperimentConfig& c, const std::string& mode, double weight) {
  if (!c.decode.output.empty()) return fs::path(c.decode.output);
  const bool weighted = mode != "sbs" && mode != "exhaustive";
  return run_dir(c) / layout::kDecode / (weighted ? mode + "-w" + weight_tag(weight) + ".ndjson" : mode + ".ndjson");
}

fs::path cmd_decode(const ExperimentConfig& c, const std::string& input, std::ostream& log) {
  const auto start = Clock::now();
  Splits data = load_run_data(c);
  const DecodeMode mode = parse_decode_mode(c.decode.mode);
  Resources r = load_resources(c, mode);
  const auto items = input.empty() ? split_items(pick_split(data, c.decode.split))
                                   : file_items(input, data.train.vocab.source);
  const auto lengths = target_lengths(c, items, data.train);
  const auto results = decode_items(c, r, mode, c.decode.weight, items, lengths);

  const fs::path out = default_decode_path(c, c.decode.mode, c.decode.weight);
  std::string text;
  std::size_t failed = 0;
  double total_ms = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    text += decode_record(data, i, items[i], results[i], lengths, c.decode.timing).dump() + "\n";
    failed += results[i].error.empty() ? 0 : 1;
    total_ms += results[i].ms;
  }
  write_text(out, text);
  log << "decoded " << results.size() << " (" << failed << " failed) mode " << c.decode.mode << " weight "
      << weight_tag(c.decode.weight) << " -> " << out.string() << " [" << fmt(total_ms, 1) << " ms]\n";
  update_manifest(c, "decode", {out}, seconds_since(start));
  return out;
}

std::vector<MetricReport> cmd_eval(const ExperimentConfig& c, const std::string& hyp, const std::string& ref,
                                   std::ostream& log) {
  const auto start = Clock::now();
  const std::string hyp_path =
      hyp.empty() ? default_decode_path(c, c.decode.mode, c.decode.weight).string() : hyp;
  Scored s;
  bool all_lengths = true;
  if (is_ndjson(hyp_path)) {
    std::size_t lineno = 0;
    for (const auto& line : read_lines(hyp_path)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        s.hyps.push_back(tokenize(j.at("hyp").get<std::string>()));
        if (j.contains("L")) {
          s.lengths.push_back(j.at("L").get<std::size_t>());
        } else {
          all_lengths = false;
        }
      } catch (const json::exception& e) {
        throw LoadError(hyp_path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  } else {
    for (const auto& line : read_lines(hyp_path)) s.hyps.push_back(tokenize(line));
    all_lengths = false;
  }
  if (!all_lengths) s.lengths.clear();

  std::string ref_name = ref;
  if (ref.empty() || is_ndjson(ref)) {
    Splits data = load_run_data(c);
    const Vocab& tv = data.train.vocab.target;
    if (ref.empty()) {
      ref_name = (run_dir(c) / layout::kData / (c.decode.split + ".ndjson")).string();
      for (const auto& p : pick_split(data, c.decode.split).pairs) s.refs.push_back(words_of(tv, p.target));
    } else {
      for (const auto& p : load_pairs(ref)) s.refs.push_back(words_of(tv, p.target));
    }
  } else {
    for (const auto& line : read_lines(ref)) s.refs.push_back(tokenize(line));
  }
  if (s.hyps.size() != s.refs.size()) {
    throw ConfigError("hypotheses and references are not aligned: " + std::to_string(s.hyps.size()) + " vs " +
                      std::to_string(s.refs.size()) + " lines");
  }

  std::vector<std::string> names = c.metrics.names;
  if (c.task.name == "dialogue") {
    for (const char* extra : {"distinct1", "distinct2", "generic_rate"}) {
      if (std::find(names.begin(), names.end(), extra) == names.end()) names.push_back(extra);
    }
  }
  std::vector<MetricReport> reports;
  json doc = {{"hyp", hyp_path}, {"ref", ref_name}, {"count", s.hyps.size()}, {"metrics", json::object()}};
  const std::string stem = fs::path(hyp_path).stem().string();
  const fs::path rdir = run_dir(c) / layout::kReports;
  std::vector<fs::path> artifacts;
  for (const auto& name : names) {
    MetricReport rep = compute_metric(name, s, c.metrics);
    log << name << " " << fmt(rep.value) << "\n";
    doc["metrics"][name] = to_json(rep);
    if (!rep.per_sentence.empty()) {
      std::vector<std::pair<double, double>> pts;
      for (std::size_t i = 0; i < rep.per_sentence.size(); ++i) pts.emplace_back(static_cast<double>(i), rep.per_sentence[i]);
      const fs::path csv = rdir / ("eval-" + stem + "-" + name + ".csv");
      fs::create_directories(rdir);
      write_plot_csv(csv.string(), "sentence", name, pts);
      artifacts.push_back(csv);
    }
    reports.push_back(std::move(rep));
  }
  const fs::path jpath = rdir / ("eval-" + stem + ".json");
  write_json(jpath, doc);
  artifacts.push_back(jpath);
  update_manifest(c, "eval", artifacts, seconds_since(start));
  return reports;
}

void cmd_compare(const ExperimentConfig& c, std::ostream& log) {
  const auto start = Clock::now();
  if (c.decode.weights.empty()) throw ConfigError("compare needs a non-empty decode.weights grid");
  Splits data = load_run_data(c);
  const Corpus& corpus = pick_split(data, c.decode.split);
  const auto items = split_items(corpus);
  const auto lengths = target_lengths(c, items, data.train);
  const Vocab& tv = data.train.vocab.target;

  std::vector<std::string> metrics = c.metrics.names;
  if (!lengths.empty() && std::find(metrics.begin(), metrics.end(), "exact_length") == metrics.end()) {
    metrics.push_back("exact_length");
  }
  if (c.task.name == "dialogue" && std::find(metrics.begin(), metrics.end(), "generic_rate") == metrics.end()) {
    metrics.push_back("generic_rate");
  }

  struct Cell {
    std::string mode;
    double weight;
    std::string role;
  };
  std::vector<Cell> cells{{"sbs", 0.0, "baseline"}, {"mmi_rerank", c.decode.rerank_weight, "baseline"}};
  const std::vector<std::string> modes = c.decode.modes.empty() ? std::vector<std::string>{c.decode.mode} : c.decode.modes;
  for (const auto& m : modes) {
    for (double w : c.decode.weights) cells.push_back({m, w, "grid"});
  }

  std::map<std::string, std::unique_ptr<Resources>> cache;
  std::vector<std::vector<std::string>> references;
  for (const auto& p : corpus.pairs) references.push_back(words_of(tv, p.target));

  json rows = json::array();
  for (const auto& cell : cells) {
    json row = {{"mode", cell.mode}, {"weight", cell.weight}, {"role", cell.role}};
    try {
      const DecodeMode mode = parse_decode_mode(cell.mode);
      auto& res = cache[cell.mode];
      if (!res) res = std::make_unique<Resources>(load_resources(c, mode));
      const auto results = decode_items(c, *res, mode, cell.weight, items, lengths);
      for (const auto& r : results) {
        if (!r.error.empty()) throw Error("pair " + std::to_string(r.id) + ": " + r.error);
      }
      Scored s;
      for (const auto& r : results) s.hyps.push_back(words_of(tv, r.hyp.tokens));
      s.refs = references;
      s.lengths = lengths;
      json values = json::object();
      for (const auto& name : metrics) values[name] = compute_metric(name, s, c.metrics).value;
      row["status"] = "ok";
      row["metrics"] = values;
    } catch (const Error& e) {
      row["status"] = std::string("failed: ") + e.what();
    }
    log << cell.mode << " w=" << weight_tag(cell.weight) << " " << row["status"].get<std::string>() << "\n";
    rows.push_back(row);
  }

  json winners = json::object();
  for (const auto& name : metrics) {
    std::optional<double> best;
    for (const auto& row : rows) {
      if (row["status"] != "ok") continue;
      const double v = row["metrics"][name].get<double>();
      if (!best || (lower_is_better(name) ? v < *best : v > *best)) best = v;
    }
    json idx = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (best && rows[i]["status"] == "ok" && rows[i]["metrics"][name].get<double>() == *best) idx.push_back(i);
    }
    winners[name] = idx;
  }

  const fs::path rdir = run_dir(c) / layout::kReports;
  json doc = {{"split", c.decode.split}, {"metrics", metrics}, {"rows", rows}, {"winners", winners},
              {"cells", rows.size()}};
  write_json(rdir / "compare.json", doc);

  std::string csv = "mode,weight,role,status";
  for (const auto& m : metrics) csv += "," + m;
  csv += "\n";
  std::string md = "| mode | weight |";
  std::string rule = "|---|---|";
  for (const auto& m : metrics) {
    md += " " + m + " |";
    rule += "---|";
  }
  md += "\n" + rule + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const bool ok = row["status"] == "ok";
    std::string status = row["status"].get<std::string>();
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    csv += row["mode"].get<std::string>() + "," + weight_tag(row["weight"].get<double>()) + "," +
           row["role"].get<std::string>() + "," + status;
    md += "| " + row["mode"].get<std::string>() + " | " + weight_tag(row["weight"].get<double>()) + " |";
    for (const auto& m : metrics) {
      const std::string v = ok ? metric_cell(row, m) : "";
      csv += "," + v;
      if (!ok) {
        md += " failed |";
        continue;
      }
      const auto& w = winners[m];
      const bool win = std::find(w.begin(), w.end(), json(i)) != w.end();
      md += win ? " **" + v + "** |" : " " + v + " |";
    }
    csv += "\n";
    md += "\n";
  }
  write_text(rdir / "compare.csv", csv);
  write_text(rdir / "compare.md", md);
  log << md;
  update_manifest(c, "compare", {rdir / "compare.json", rdir / "compare.csv", rdir / "compare.md"},
                  seconds_since(start));
}

bool cmd_selftest(const ExperimentConfig& c, std::ostream& log) {
  bool ok = true;
  for (const auto& g : gradient_suite(c.seed)) {
    log << (g.pass() ? "PASS" : "FAIL") << " gradient " << g.name << " error " << std::scientific
        << std::setprecision(2) << g.error << " bound " << g.bound << std::defaultfloat << "\n";
    ok = ok && g.pass();
  }
  const auto o = oracle_suite(50, c.seed);
  log << (o.pass() ? "PASS" : "FAIL") << " oracle models " << o.models << " beam " << o.beam_matches << " guided "
      << o.guided_matches;
  if (!o.first_mismatch.empty()) log << " first mismatch " << o.first_mismatch;
  log << "\n";
  return ok && o.pass();
}

}  // namespace fdq::cli
