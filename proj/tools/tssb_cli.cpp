// Command-line front end: sample-prior, fit, evaluate, export, geweke.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tssb/tssb.hpp"

namespace fs = std::filesystem;
using namespace tssb;
using io::json;

namespace {

// --- configuration -------------------------------------------------------------

struct RunConfig {
  std::string model = "bernoulli";
  bool model_given = false;
  std::string data;
  std::string labels;  // optional: one name per datum (bernoulli) or per word (topics)
  std::string output = "tssb_out";
  std::uint64_t seed = 1;

  Hyperparams hp;
  bool hp_values_given = false;

  double eta = 1.0;
  double lambda_init = 0.5;

  std::size_t topics = 10;
  double topic_word_conc = 0.1;
  double doc_topic_conc = 0.0;  // 0 means 50/K
  double kappa = 0.0;           // 0 means K
  std::size_t lda_sweeps = 1000;
  std::size_t frozen_sweeps = 500;

  SweepConfig sweep;
  Schedule schedule{100, 500, 100, 50};
  std::size_t checkpoint_every = 1;

  std::size_t folds = 10;
  std::size_t fold_limit = 0;  // 0 runs every fold
  std::vector<std::size_t> topic_grid{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::size_t components = 1000;
  bool average_samples = false;

  std::int64_t threshold = 0;
  std::size_t top_items = 10;

  std::size_t prior_n = 50;
  std::size_t prior_replicates = 1000;
  std::vector<Hyperparams> prior_grid;

  GewekeConfig geweke;

  void validate() const {
    if (model != "bernoulli" && model != "topics") throw config_error("model must be 'bernoulli' or 'topics'");
    hp.bounds.validate();
    if (hp_values_given) hp.validate();
    if (!(lambda_init > 0.0)) throw config_error("kernel lambda_init must be > 0");
    if (!(eta >= 0.0 && eta <= 1.0)) throw config_error("kernel eta must lie in [0, 1]");
    if (topics < 1) throw config_error("topics.K must be >= 1");
    if (!(topic_word_conc > 0.0)) throw config_error("topic_word_conc must be > 0");
    if (doc_topic_conc < 0.0 || kappa < 0.0) throw config_error("concentrations must be positive");
    sweep.validate();
    schedule.validate();
    if (checkpoint_every < 1) throw config_error("checkpoint_every must be >= 1");
    if (folds < 2) throw config_error("evaluate.folds must be >= 2");
    if (components < 1) throw config_error("evaluate.components must be >= 1");
    for (auto k : topic_grid)
      if (k < 1) throw config_error("topic grid entries must be >= 1");
    for (const auto& h : prior_grid) h.validate();
    geweke.bounds.validate();
    geweke.sweep.validate();
  }
};

std::vector<Hyperparams> default_prior_grid() {
  // Shallow to deep, narrow to bushy.
  const double v[8][3] = {{1, 0.5, 0.2}, {1, 1, 0.2}, {1, 1, 1},   {5, 0.5, 0.2},
                          {5, 1, 0.2},   {5, 0.5, 1}, {25, 0.5, 0.2}, {25, 0.5, 1}};
  std::vector<Hyperparams> g;
  for (const auto& r : v) g.push_back(Hyperparams{r[0], r[1], r[2], {}});
  return g;
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw config_error(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw config_error("unknown key '" + k + "' in " + where);
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void take_interval(const json& j, const char* key, Interval& out) {
  if (j.contains(key)) out = io::interval_from_json(j.at(key));
}

PsiCounts parse_psi_counts(const std::string& s) {
  if (s == "subtree") return PsiCounts::SubtreeTotal;
  if (s == "strict") return PsiCounts::StrictDescendants;
  throw config_error("psi_counts must be 'subtree' or 'strict'");
}

FaultInjection parse_fault(const std::string& s) {
  if (s == "none") return FaultInjection::None;
  if (s == "swapped-nu") return FaultInjection::SwappedNuPosterior;
  if (s == "skip-sbp") return FaultInjection::SkipSbp;
  if (s == "stale-counts") return FaultInjection::StaleCounts;
  throw config_error("fault must be one of none, swapped-nu, skip-sbp, stale-counts");
}

void read_sweep(const json& j, SweepConfig& s) {
  check_keys(j, "sweep",
             {"leapfrog_steps", "step_jitter", "step_scale", "slice_theta_every", "max_shrink", "psi_counts",
              "lambda_bounds", "update_kernel", "update_kappa", "kappa_bounds", "shuffle_data", "moves"});
  take(j, "leapfrog_steps", s.leapfrog_steps);
  take_interval(j, "step_jitter", s.step_jitter);
  take(j, "step_scale", s.step_scale);
  take(j, "slice_theta_every", s.slice_theta_every);
  take(j, "max_shrink", s.max_shrink);
  if (j.contains("psi_counts")) s.psi_counts = parse_psi_counts(j["psi_counts"].get<std::string>());
  take_interval(j, "lambda_bounds", s.lambda_diag_bounds);
  take(j, "update_kernel", s.update_kernel);
  take(j, "update_kappa", s.update_kappa);
  take_interval(j, "kappa_bounds", s.kappa_bounds);
  take(j, "shuffle_data", s.shuffle_data);
  if (j.contains("moves")) {
    const json& m = j["moves"];
    check_keys(m, "sweep.moves", {"assignments", "sticks", "order", "hyperparams", "parameters"});
    take(m, "assignments", s.update_assignments);
    take(m, "sticks", s.update_sticks);
    take(m, "order", s.update_order);
    take(m, "hyperparams", s.update_hyperparams);
    take(m, "parameters", s.update_parameters);
  }
}

void read_bounds(const json& j, HyperBounds& b, const std::string& where) {
  check_keys(j, where, {"alpha0", "lambda", "gamma"});
  take_interval(j, "alpha0", b.alpha0);
  take_interval(j, "lambda", b.lambda);
  take_interval(j, "gamma", b.gamma);
}

RunConfig read_config(const std::string& path) {
  RunConfig c;
  c.prior_grid = default_prior_grid();
  if (path.empty()) return c;
  json j;
  {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config " + path);
    try {
      j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
      throw config_error(path + ": " + e.what());
    }
  }
  try {
    check_keys(j, "config",
               {"model", "data", "labels", "output", "seed", "hyperparams", "kernel", "topics", "sweep",
                "schedule", "evaluate", "export", "prior", "geweke"});
    if (j.contains("model")) c.model_given = true;
    take(j, "model", c.model);
    take(j, "data", c.data);
    take(j, "labels", c.labels);
    take(j, "output", c.output);
    take(j, "seed", c.seed);
    if (j.contains("hyperparams")) {
      const json& h = j["hyperparams"];
      check_keys(h, "hyperparams", {"alpha0", "lambda", "gamma", "bounds"});
      if (h.contains("bounds")) read_bounds(h["bounds"], c.hp.bounds, "hyperparams.bounds");
      bool any = h.contains("alpha0") || h.contains("lambda") || h.contains("gamma");
      if (any) {
        Hyperparams mid = Hyperparams::centered(c.hp.bounds);
        c.hp.alpha0 = h.value("alpha0", mid.alpha0);
        c.hp.lambda = h.value("lambda", mid.lambda);
        c.hp.gamma = h.value("gamma", mid.gamma);
        c.hp_values_given = true;
      }
    }
    if (j.contains("kernel")) {
      const json& k = j["kernel"];
      check_keys(k, "kernel", {"eta", "lambda_init", "kappa"});
      take(k, "eta", c.eta);
      take(k, "lambda_init", c.lambda_init);
      take(k, "kappa", c.kappa);
    }
    if (j.contains("topics")) {
      const json& t = j["topics"];
      check_keys(t, "topics", {"K", "topic_word_conc", "doc_topic_conc", "lda_sweeps", "frozen_sweeps"});
      take(t, "K", c.topics);
      take(t, "topic_word_conc", c.topic_word_conc);
      take(t, "doc_topic_conc", c.doc_topic_conc);
      take(t, "lda_sweeps", c.lda_sweeps);
      take(t, "frozen_sweeps", c.frozen_sweeps);
    }
    if (j.contains("sweep")) read_sweep(j["sweep"], c.sweep);
    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      check_keys(s, "schedule", {"warmup", "burn_in", "samples", "thin", "checkpoint_every"});
      take(s, "warmup", c.schedule.warmup);
      take(s, "burn_in", c.schedule.burn_in);
      take(s, "samples", c.schedule.samples);
      take(s, "thin", c.schedule.thin);
      take(s, "checkpoint_every", c.checkpoint_every);
    }
    if (j.contains("evaluate")) {
      const json& e = j["evaluate"];
      check_keys(e, "evaluate", {"folds", "fold_limit", "topic_grid", "components", "average_samples"});
      take(e, "folds", c.folds);
      take(e, "fold_limit", c.fold_limit);
      take(e, "topic_grid", c.topic_grid);
      take(e, "components", c.components);
      take(e, "average_samples", c.average_samples);
    }
    if (j.contains("export")) {
      const json& e = j["export"];
      check_keys(e, "export", {"threshold", "top_items"});
      take(e, "threshold", c.threshold);
      take(e, "top_items", c.top_items);
    }
    if (j.contains("prior")) {
      const json& p = j["prior"];
      check_keys(p, "prior", {"n", "replicates", "grid"});
      take(p, "n", c.prior_n);
      take(p, "replicates", c.prior_replicates);
      if (p.contains("grid")) {
        c.prior_grid.clear();
        for (const auto& cell : p["grid"]) {
          check_keys(cell, "prior.grid entry", {"alpha0", "lambda", "gamma"});
          c.prior_grid.push_back(Hyperparams{cell.at("alpha0").get<double>(), cell.at("lambda").get<double>(),
                                             cell.at("gamma").get<double>(), {}});
        }
      }
    }
    if (j.contains("geweke")) {
      const json& g = j["geweke"];
      check_keys(g, "geweke",
                 {"n_data", "dim", "samples", "sweeps_per_sample", "alpha", "bounds", "eta", "sweep", "fault"});
      take(g, "n_data", c.geweke.n_data);
      take(g, "dim", c.geweke.dim);
      take(g, "samples", c.geweke.samples);
      take(g, "sweeps_per_sample", c.geweke.sweeps_per_sample);
      take(g, "alpha", c.geweke.alpha);
      take(g, "eta", c.geweke.eta);
      if (g.contains("bounds")) read_bounds(g["bounds"], c.geweke.bounds, "geweke.bounds");
      if (g.contains("sweep")) read_sweep(g["sweep"], c.geweke.sweep);
      if (g.contains("fault")) c.geweke.sweep.fault = parse_fault(g["fault"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw config_error(path + ": " + e.what());
  }
  return c;
}

Hyperparams starting_hyperparams(const RunConfig& c) {
  if (c.hp_values_given) return c.hp;
  return Hyperparams::centered(c.hp.bounds);
}

// --- files -------------------------------------------------------------------------

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw config_error("cannot create output directory " + dir);
}

/// Write through a temporary file so a crash never leaves half a checkpoint.
void write_json_atomic(const std::string& path, const json& j) {
  std::string tmp = path + ".tmp";
  {
    auto f = io::open_out(tmp);
    f << j.dump() << '\n';
    if (!f) throw config_error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

/// Keep the first `n` lines of a file (used when resuming).
void truncate_lines(const std::string& path, std::size_t n) {
  if (!fs::exists(path)) return;
  auto lines = read_lines(path);
  if (lines.size() < n) throw data_error(path + " has fewer records than the checkpoint expects");
  auto f = io::open_out(path);
  for (std::size_t i = 0; i < n; ++i) f << lines[i] << '\n';
}

BinaryMatrix load_binary(const RunConfig& c) {
  if (c.data.empty()) throw config_error("no data file given");
  return io::read_binary_file(c.data);
}

Corpus load_corpus(const RunConfig& c) {
  if (c.data.empty()) throw config_error("no data file given");
  return io::read_corpus_file(c.data);
}

// --- model parameters and annotations -------------------------------------------------

json model_params(const BernoulliTreeModel& m, bool) {
  return {{"eta", m.kernel().eta}, {"lambda_diag", m.kernel().lambda_diag}};
}

void restore_params(BernoulliTreeModel& m, const json& j) {
  m.kernel().eta = j.at("eta").get<double>();
  m.kernel().lambda_diag = j.at("lambda_diag").get<std::vector<double>>();
  m.kernel().validate();
}

json model_params(const TopicTreeModel& m, bool with_labels) {
  const TopicModel& t = m.topics();
  json j = {{"kappa", m.kernel().kappa}, {"K", t.K}, {"V", t.V},
            {"topic_word_conc", t.topic_word_conc}, {"topic_word", t.topic_word}};
  if (with_labels) j["z"] = t.z;
  return j;
}

void restore_params(TopicTreeModel& m, const json& j) {
  m.kernel().kappa = j.at("kappa").get<double>();
  TopicModel& t = m.topics();
  if (j.at("K").get<std::size_t>() != t.K || j.at("V").get<std::size_t>() != t.V)
    throw data_error("checkpoint topic dimensions do not match");
  t.topic_word = j.at("topic_word").get<std::vector<double>>();
  if (j.contains("z")) t.z = j["z"].get<std::vector<std::vector<std::uint32_t>>>();
  t.recount();
}

std::vector<std::string> top_items(const BernoulliTreeModel& m, const TreeState& s, const NodePath& p,
                                   std::size_t k, const std::vector<std::string>& names) {
  std::vector<std::pair<double, std::size_t>> scored;
  const Theta& th = s.at(p).theta;
  for (std::size_t n = 0; n < s.num_data(); ++n)
    if (s.assignment(n) && *s.assignment(n) == p) scored.push_back({m.loglik(n, th), n});
  std::sort(scored.begin(), scored.end(), [](auto a, auto b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) {
    std::size_t n = scored[i].second;
    out.push_back(n < names.size() ? names[n] : "#" + std::to_string(n));
  }
  return out;
}

std::vector<std::string> top_items(const TopicTreeModel& m, const TreeState& s, const NodePath& p, std::size_t k,
                                   const std::vector<std::string>& vocab) {
  auto dist = mix_topics(s.at(p).theta, m.topics().topic_word, m.topics().V);
  std::vector<std::size_t> idx(dist.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t kk = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(kk), idx.end(),
                    [&](auto a, auto b) { return dist[a] > dist[b] || (dist[a] == dist[b] && a < b); });
  std::vector<std::string> out;
  if (kk == 0) return out;
  std::string line;
  for (std::size_t i = 0; i < kk; ++i) {
    std::size_t w = idx[i];
    if (i) line += ' ';
    line += w < vocab.size() ? vocab[w] : "w" + std::to_string(w);
  }
  out.push_back(line);
  return out;
}

template <class Model>
void write_tree_outputs(const std::string& stem, const TreeState& s, const Hyperparams& hp, const Model& m,
                        std::int64_t threshold, std::size_t k, const std::vector<std::string>& labels) {
  TreeState shown = io::filter_tree(s, threshold);
  json j = io::tree_to_json(shown);
  j["hyperparams"] = io::hyperparams_to_json(hp);
  j["params"] = model_params(m, false);
  write_json_atomic(stem + ".json", j);
  io::DotOptions opt;
  opt.threshold = threshold;
  opt.annotate = [&](const NodePath& p) { return top_items(m, s, p, k, labels); };
  auto f = io::open_out(stem + ".dot");
  io::write_dot(f, s, opt);
}

// --- chains -------------------------------------------------------------------------------

/// A retained sample kept for export and evaluation.
struct Sample {
  std::size_t sweep = 0;
  double score = 0.0;
  double assignment_score = 0.0;
  Hyperparams hp;
  TreeState state;
  json params;
};

json sample_to_json(const Sample& s) {
  return {{"sweep", s.sweep}, {"score", s.score}, {"assignment_score", s.assignment_score},
          {"hp", io::hyperparams_to_json(s.hp)}, {"tree", io::tree_to_json(s.state)}, {"params", s.params}};
}

Sample sample_from_json(const json& j) {
  Sample s;
  s.sweep = j.at("sweep").get<std::size_t>();
  s.score = j.at("score").get<double>();
  s.assignment_score = j.at("assignment_score").get<double>();
  s.hp = io::hyperparams_from_json(j.at("hp"));
  s.state = io::tree_from_json(j.at("tree"));
  s.params = j.at("params");
  return s;
}

/// Everything fit needs besides the model: where to write and what to keep.
struct FitSink {
  std::string dir;
  std::size_t frozen = 0;  // leading sweeps with word topics frozen (topic model)
  bool keep_samples = false;
  std::optional<Sample> best;
  std::vector<Sample> samples;
  std::size_t records = 0;
};

template <class Model>
json checkpoint_json(const Chain<Model>& ch, const RunConfig& c, const FitSink& sink) {
  auto adapt = ch.adapt.save();
  json j = {{"format", "tssb-checkpoint"},
            {"version", 1},
            {"model", c.model},
            {"data", c.data},
            {"n_data", ch.model.num_data()},
            {"dim", ch.model.kernel().dim()},
            {"seed", c.seed},
            {"next_sweep", ch.next_sweep},
            {"records", sink.records},
            {"rng", ch.rng.serialize()},
            {"step_scale", ch.cfg.step_scale},
            {"adapt", std::vector<double>(adapt.begin(), adapt.end())},
            {"hp", io::hyperparams_to_json(ch.hp)},
            {"tree", io::tree_to_json(ch.state)},
            {"params", model_params(ch.model, true)}};
  if (sink.best) j["best"] = sample_to_json(*sink.best);
  if (sink.keep_samples) {
    json arr = json::array();
    for (const auto& s : sink.samples) arr.push_back(sample_to_json(s));
    j["samples"] = std::move(arr);
  }
  return j;
}

template <class Model>
void restore_checkpoint(Chain<Model>& ch, const json& j, const RunConfig& c, FitSink& sink) {
  try {
    if (j.at("format") != "tssb-checkpoint") throw data_error("not a checkpoint file");
    if (j.at("model").get<std::string>() != c.model || j.at("n_data").get<std::size_t>() != ch.model.num_data() ||
        j.at("dim").get<std::size_t>() != ch.model.kernel().dim() || j.at("seed").get<std::uint64_t>() != c.seed)
      throw config_error("checkpoint does not match this run (model, data shape or seed differ)");
    ch.next_sweep = j.at("next_sweep").get<std::size_t>();
    sink.records = j.at("records").get<std::size_t>();
    ch.rng.deserialize(j.at("rng").get<std::string>());
    ch.cfg.step_scale = j.at("step_scale").get<double>();
    auto a = j.at("adapt").get<std::vector<double>>();
    if (a.size() != 6) throw data_error("bad adaptation state in checkpoint");
    ch.adapt.load({a[0], a[1], a[2], a[3], a[4], a[5]});
    ch.hp = io::hyperparams_from_json(j.at("hp"));
    ch.state = io::tree_from_json(j.at("tree"));
    if (ch.state.num_data() != ch.model.num_data()) throw data_error("checkpoint tree has the wrong number of data");
    restore_params(ch.model, j.at("params"));
    if (j.contains("best")) sink.best = sample_from_json(j["best"]);
    sink.samples.clear();
    if (j.contains("samples"))
      for (const auto& s : j["samples"]) sink.samples.push_back(sample_from_json(s));
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed checkpoint: ") + e.what());
  }
}

/// Run the chain to completion, logging every sweep to trace.jsonl and every
/// retained sample to chain.jsonl, with periodic checkpoints.
template <class Model>
void drive_chain(Chain<Model>& ch, const RunConfig& c, FitSink& sink, bool quiet) {
  const std::string trace_path = sink.dir + "/trace.jsonl", log_path = sink.dir + "/chain.jsonl",
                    ckpt_path = sink.dir + "/checkpoint.json";
  truncate_lines(trace_path, ch.next_sweep);
  truncate_lines(log_path, sink.records);
  auto trace = io::open_out(trace_path, std::ios::app);
  auto log = io::open_out(log_path, std::ios::app);
  std::size_t since_ckpt = 0;
  while (!ch.done()) {
    ch.cfg.freeze_word_topics = ch.next_sweep < sink.frozen;
    auto [rec, keep] = ch.step();
    trace << io::record_to_json(rec).dump() << '\n';
    if (!keep) continue;
    log << io::record_to_json(rec).dump() << '\n';
    log.flush();
    trace.flush();
    ++sink.records;
    Sample s{rec.sweep, rec.complete_loglik, rec.assignment_loglik, ch.hp, ch.state, model_params(ch.model, false)};
    if (!sink.best || s.score > sink.best->score) sink.best = s;
    if (sink.keep_samples) sink.samples.push_back(std::move(s));
    if (!quiet)
      std::cerr << "sweep " << rec.sweep + 1 << "/" << ch.schedule.total() << "  loglik " << rec.complete_loglik
                << "  nodes " << rec.node_count << "\n";
    if (++since_ckpt >= c.checkpoint_every) {
      write_json_atomic(ckpt_path, checkpoint_json(ch, c, sink));
      since_ckpt = 0;
    }
  }
  write_json_atomic(ckpt_path, checkpoint_json(ch, c, sink));
}

Schedule topic_schedule(const RunConfig& c) {
  Schedule s = c.schedule;
  s.warmup = 0;
  s.burn_in += c.frozen_sweeps;
  return s;
}

double doc_topic_conc(const RunConfig& c, std::size_t K) {
  return c.doc_topic_conc > 0.0 ? c.doc_topic_conc : 50.0 / static_cast<double>(K);
}

LdaState train_lda(const Corpus& corpus, std::size_t K, const RunConfig& c, Rng& rng, bool quiet) {
  LdaState lda = LdaState::random(corpus, K, rng, doc_topic_conc(c, K), c.topic_word_conc);
  for (std::size_t i = 0; i < c.lda_sweeps; ++i) {
    lda_gibbs_sweep(lda, corpus, rng);
    if (!quiet && (i + 1) % 100 == 0) std::cerr << "lda sweep " << i + 1 << "/" << c.lda_sweeps << "\n";
  }
  return lda;
}

TopicTreeModel make_topic_model(const Corpus& corpus, const LdaState& lda, std::size_t K, const RunConfig& c) {
  double kappa = c.kappa > 0.0 ? c.kappa : static_cast<double>(K);
  return TopicTreeModel(corpus, lda_init_tssb(lda, corpus, K), DirichletKernel(K, kappa));
}

// --- subcommands ------------------------------------------------------------------------------

int cmd_sample_prior(const RunConfig& c) {
  ensure_dir(c.output);
  auto csv = io::open_out(c.output + "/prior_stats.csv");
  csv << std::setprecision(8);
  csv << "cell,alpha0,lambda,gamma,n,replicates,mean_depth,mean_max_depth,max_depth,mean_nodes,mean_children,"
         "occupied_internal,occupied_nodes\n";
  for (std::size_t i = 0; i < c.prior_grid.size(); ++i) {
    const Hyperparams& hp = c.prior_grid[i];
    Rng rng(c.seed + 7919 * i);
    TreeState t = sample_prior_tree(c.prior_n, hp, NullKernel{}, rng);
    std::ostringstream name;
    name << c.output << "/prior_" << i << "_a" << hp.alpha0 << "_l" << hp.lambda << "_g" << hp.gamma << ".dot";
    {
      auto f = io::open_out(name.str());
      io::write_dot(f, t);
    }
    PriorStats s = prior_stats(hp, c.prior_n, c.prior_replicates, rng);
    csv << i << ',' << hp.alpha0 << ',' << hp.lambda << ',' << hp.gamma << ',' << c.prior_n << ','
        << c.prior_replicates << ',' << s.mean_depth << ',' << s.mean_max_depth << ',' << s.max_depth << ','
        << s.mean_nodes << ',' << s.mean_children << ',' << s.occupied_internal << ',' << s.occupied_nodes << '\n';
    std::cout << "cell " << i << " (alpha0=" << hp.alpha0 << ", lambda=" << hp.lambda << ", gamma=" << hp.gamma
              << "): mean depth " << s.mean_depth << ", nodes " << s.mean_nodes << "\n";
  }
  return 0;
}

template <class Model>
int finish_fit(Chain<Model>& ch, const RunConfig& c, FitSink& sink, const std::string& resume, bool quiet) {
  if (!resume.empty()) restore_checkpoint(ch, io::read_json_file(resume), c, sink);
  drive_chain(ch, c, sink, quiet);
  auto labels = read_lines(c.labels);
  if (sink.best) {
    Model best_model = ch.model;
    restore_params(best_model, sink.best->params);
    write_tree_outputs(sink.dir + "/best", sink.best->state, sink.best->hp, best_model, c.threshold, c.top_items,
                       labels);
    std::cout << "best sample: sweep " << sink.best->sweep << ", complete-data log likelihood " << sink.best->score
              << "\n";
  }
  std::cout << "records: " << sink.records << ", output: " << sink.dir << "\n";
  return 0;
}

int cmd_fit(const RunConfig& c, const std::string& resume, bool quiet) {
  ensure_dir(c.output);
  FitSink sink;
  sink.dir = c.output;
  if (c.model == "bernoulli") {
    BinaryMatrix x = load_binary(c);
    BernoulliTreeModel model(std::move(x), GaussianKernel(x.cols(), c.lambda_init, c.eta));
    Chain ch(std::move(model), starting_hyperparams(c), c.sweep, c.schedule, c.seed);
    return finish_fit(ch, c, sink, resume, quiet);
  }
  Corpus corpus = load_corpus(c);
  Rng lda_rng(c.seed ^ 0x5bd1e995ULL);
  LdaState lda = resume.empty() ? train_lda(corpus, c.topics, c, lda_rng, quiet)
                                : LdaState::random(corpus, c.topics, lda_rng, doc_topic_conc(c, c.topics),
                                                   c.topic_word_conc);
  sink.frozen = c.frozen_sweeps;
  Chain ch(make_topic_model(corpus, lda, c.topics, c), starting_hyperparams(c), c.sweep, topic_schedule(c), c.seed);
  return finish_fit(ch, c, sink, resume, quiet);
}

int cmd_evaluate(const RunConfig& c, bool reuse, bool quiet) {
  if (c.model != "topics") throw config_error("evaluate needs model 'topics'");
  Corpus corpus = load_corpus(c);
  if (corpus.size() < c.folds) throw data_error("fewer documents than folds");
  const std::string dir = c.output + "/eval";
  ensure_dir(dir);
  auto folds = make_folds(corpus.size(), c.folds, c.seed);
  const std::size_t run_folds = c.fold_limit ? std::min(c.fold_limit, c.folds) : c.folds;
  auto csv = io::open_out(c.output + "/perplexity.csv");
  csv << "fold,topics,method,perplexity,log_likelihood,tokens,components\n";
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> summary;

  for (std::size_t f = 0; f < run_folds; ++f) {
    auto [train, test] = split_corpus(corpus, folds[f]);
    if (test.total_tokens() == 0) throw data_error("fold " + std::to_string(f) + " has no held-out tokens");
    for (std::size_t K : c.topic_grid) {
      const std::string cell = dir + "/fold" + std::to_string(f) + "_K" + std::to_string(K);
      const std::uint64_t cell_seed = c.seed * 1000003ULL + f * 1009ULL + K;
      json ckpt;
      if (reuse) {
        if (!fs::exists(cell + ".json")) throw data_error("missing checkpoint " + cell + ".json");
        ckpt = io::read_json_file(cell + ".json");
      } else {
        RunConfig rc = c;
        rc.output = cell;
        rc.seed = cell_seed;
        rc.topics = K;
        ensure_dir(cell);
        Rng lda_rng(cell_seed ^ 0x5bd1e995ULL);
        LdaState lda = train_lda(train, K, rc, lda_rng, true);
        FitSink sink;
        sink.dir = cell;
        sink.frozen = c.frozen_sweeps;
        sink.keep_samples = c.average_samples;
        Chain ch(make_topic_model(train, lda, K, rc), starting_hyperparams(rc), rc.sweep, topic_schedule(rc),
                 cell_seed);
        drive_chain(ch, rc, sink, true);
        ckpt = io::read_json_file(cell + "/checkpoint.json");
        ckpt["lda"] = {{"alpha", lda.alpha}, {"beta", lda.beta}, {"nkw", lda.nkw}, {"nk", lda.nk}, {"K", lda.K},
                       {"V", lda.V}};
        write_json_atomic(cell + ".json", ckpt);
      }
      try {
        // TSSB: components from the best sample or spread over retained samples.
        std::vector<Sample> use;
        if (c.average_samples && ckpt.contains("samples") && !ckpt["samples"].empty()) {
          for (const auto& s : ckpt["samples"]) use.push_back(sample_from_json(s));
        } else {
          if (!ckpt.contains("best")) throw data_error("checkpoint " + cell + " has no retained sample");
          use.push_back(sample_from_json(ckpt["best"]));
        }
        Rng rng(cell_seed ^ 0xa5a5a5a5ULL);
        std::vector<std::vector<double>> comps;
        for (std::size_t i = 0; i < use.size(); ++i) {
          std::size_t n = c.components / use.size() + (i < c.components % use.size() ? 1 : 0);
          if (n == 0) continue;
          const json& p = use[i].params;
          TopicModel tm;
          tm.K = p.at("K").get<std::size_t>();
          tm.V = p.at("V").get<std::size_t>();
          tm.topic_word = p.at("topic_word").get<std::vector<double>>();
          DirichletKernel kern(tm.K, p.at("kappa").get<double>());
          auto part = tssb_pseudo_documents(use[i].state, use[i].hp, kern, tm, n, rng);
          comps.insert(comps.end(), part.begin(), part.end());
        }
        auto tr = perplexity_empirical(comps, test);
        tr.topics = K;

        const json& l = ckpt.at("lda");
        LdaState lda;
        lda.K = l.at("K").get<std::size_t>();
        lda.V = l.at("V").get<std::size_t>();
        lda.alpha = l.at("alpha").get<double>();
        lda.beta = l.at("beta").get<double>();
        lda.nkw = l.at("nkw").get<std::vector<double>>();
        lda.nk = l.at("nk").get<std::vector<double>>();
        auto lr = perplexity_empirical(lda_pseudo_documents(lda, c.components, rng), test);

        for (auto [name, r] : {std::pair<const char*, PerplexityReport*>{"tssb", &tr}, {"lda", &lr}}) {
          csv << f << ',' << K << ',' << name << ',' << r->perplexity << ',' << r->log_likelihood << ','
              << r->tokens << ',' << r->components << '\n';
          summary[{K, name}].push_back(r->perplexity);
        }
        csv.flush();
        if (!quiet)
          std::cerr << "fold " << f << " K=" << K << ": tssb " << tr.perplexity << ", lda " << lr.perplexity << "\n";
      } catch (const json::exception& e) {
        throw data_error("malformed checkpoint " + cell + ".json: " + e.what());
      }
    }
  }

  auto cmp = io::open_out(c.output + "/comparison.csv");
  cmp << std::setprecision(8);
  cmp << "topics,method,folds,mean_perplexity,sd_perplexity\n";
  std::cout << "topics  method  folds  mean perplexity\n";
  for (const auto& [key, v] : summary) {
    double m = mean(v), sd = v.size() > 1 ? std::sqrt(variance(v)) : 0.0;
    cmp << key.first << ',' << key.second << ',' << v.size() << ',' << m << ',' << sd << '\n';
    std::cout << key.first << "  " << key.second << "  " << v.size() << "  " << m << "\n";
  }
  return 0;
}

int cmd_export(const RunConfig& c, const std::string& checkpoint, bool current) {
  json j = io::read_json_file(checkpoint);
  ensure_dir(c.output);
  auto labels = read_lines(c.labels);
  TreeState state;
  Hyperparams hp;
  json params;
  try {
    if (j.contains("format")) {
      const json& src = (!current && j.contains("best")) ? j["best"] : j;
      state = io::tree_from_json(src.at("tree"));
      hp = io::hyperparams_from_json(src.at("hp"));
      params = src.at("params");
    } else {
      state = io::tree_from_json(j);
      if (j.contains("hyperparams")) hp = io::hyperparams_from_json(j["hyperparams"]);
      if (j.contains("params")) params = j["params"];
    }
  } catch (const json::exception& e) {
    throw data_error(std::string("unreadable checkpoint: ") + e.what());
  }
  const std::string stem = c.output + "/export";
  const std::string model = j.value("model", params.contains("topic_word") ? "topics" : "bernoulli");
  if (!c.data.empty() && model == "bernoulli" && params.contains("lambda_diag")) {
    BinaryMatrix x = load_binary(c);
    if (x.rows() != state.num_data()) throw data_error("data file does not match the checkpoint");
    BernoulliTreeModel m(std::move(x), GaussianKernel(x.cols(), 1.0));
    restore_params(m, params);
    write_tree_outputs(stem, state, hp, m, c.threshold, c.top_items, labels);
  } else if (model == "topics" && params.contains("topic_word")) {
    Corpus empty;
    empty.vocab = params.at("V").get<std::size_t>();
    TopicModel tm;
    tm.K = params.at("K").get<std::size_t>();
    tm.V = empty.vocab;
    TopicTreeModel m(empty, tm, DirichletKernel(tm.K, 1.0));
    restore_params(m, params);
    write_tree_outputs(stem, state, hp, m, c.threshold, c.top_items, labels);
  } else {
    TreeState shown = io::filter_tree(state, c.threshold);
    json out = io::tree_to_json(shown);
    out["hyperparams"] = io::hyperparams_to_json(hp);
    if (!params.is_null()) out["params"] = params;
    write_json_atomic(stem + ".json", out);
    io::DotOptions opt;
    opt.threshold = c.threshold;
    auto f = io::open_out(stem + ".dot");
    io::write_dot(f, state, opt);
  }
  std::cout << "wrote " << stem << ".json and " << stem << ".dot\n";
  return 0;
}

int cmd_geweke(const RunConfig& c, bool require_pass, bool quiet) {
  GewekeConfig g = c.geweke;
  g.seed = c.seed;
  auto rep = run_geweke(g, [&](std::size_t i) {
    if (!quiet && (i + 1) % 1000 == 0) std::cerr << "sample " << i + 1 << "/" << g.samples << "\n";
  });
  std::printf("%-16s %10s %12s %12s %12s\n", "statistic", "KS", "p", "forward", "chain");
  for (const auto& s : rep.stats)
    std::printf("%-16s %10.4f %12.3g %12.4f %12.4f\n", s.name.c_str(), s.ks, s.p_value, s.forward_mean, s.chain_mean);
  std::printf("per-statistic threshold %.3g, min p %.3g: %s\n", rep.threshold, rep.min_p(),
              rep.passed() ? "PASS" : "FAIL");
  if (!c.output.empty()) {
    ensure_dir(c.output);
    auto f = io::open_out(c.output + "/geweke.csv");
    f << "statistic,ks,p_value,forward_mean,chain_mean\n";
    for (const auto& s : rep.stats)
      f << s.name << ',' << s.ks << ',' << s.p_value << ',' << s.forward_mean << ',' << s.chain_mean << '\n';
  }
  return (require_pass && !rep.passed()) ? 4 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-structured stick-breaking: prior draws, MCMC fitting, evaluation and export"};
  app.require_subcommand(1);

  std::string config_path, out, data, labels, resume, checkpoint, model, fault_name, topic_list;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> burn_in, samples, thin, warmup, folds, fold_limit, components, topics, top, n,
      replicates, lda_sweeps, frozen, g_samples, g_thin;
  std::optional<std::int64_t> threshold;
  bool quiet = false, reuse = false, average = false, current = false, require_pass = false;

  auto common = [&](CLI::App* s) {
    s->add_option("-c,--config", config_path, "JSON config file");
    s->add_option("-o,--out", out, "output directory");
    s->add_option("--seed", seed, "random seed");
    s->add_flag("-q,--quiet", quiet, "no progress output");
  };
  auto* prior = app.add_subcommand("sample-prior", "draw trees from the prior and summarize them");
  common(prior);
  prior->add_option("-n,--n", n, "data per tree");
  prior->add_option("--replicates", replicates, "Monte Carlo replicates per cell");

  auto* fit = app.add_subcommand("fit", "run the sampler on a dataset");
  common(fit);
  fit->add_option("-d,--data", data, "binary CSV / bit-packed file, or corpus triplets");
  fit->add_option("--model", model, "bernoulli or topics");
  fit->add_option("--labels", labels, "item names (bernoulli) or vocabulary (topics), one per line");
  fit->add_option("--warmup", warmup, "step-size adaptation sweeps");
  fit->add_option("--burn-in", burn_in, "burn-in sweeps");
  fit->add_option("--samples", samples, "retained samples");
  fit->add_option("--thin", thin, "sweeps per retained sample");
  fit->add_option("-K,--topics", topics, "topic count");
  fit->add_option("--lda-sweeps", lda_sweeps, "LDA initialization sweeps");
  fit->add_option("--frozen-sweeps", frozen, "tree sweeps with fixed word topics");
  fit->add_option("--resume", resume, "continue from a checkpoint");
  fit->add_option("--threshold", threshold, "minimum subtree size in the best-tree export");

  auto* eval = app.add_subcommand("evaluate", "held-out perplexity of the tree model and LDA across folds");
  common(eval);
  eval->add_option("-d,--data", data, "corpus triplets");
  eval->add_option("--folds", folds, "number of folds");
  eval->add_option("--fold-limit", fold_limit, "only run the first k folds");
  eval->add_option("--topics", topic_list, "comma-separated topic grid, e.g. 10,20,30");
  eval->add_option("--components", components, "mixture components in the estimator");
  eval->add_option("--lda-sweeps", lda_sweeps, "LDA initialization sweeps");
  eval->add_option("--frozen-sweeps", frozen, "tree sweeps with fixed word topics");
  eval->add_option("--burn-in", burn_in, "burn-in sweeps");
  eval->add_option("--samples", samples, "retained samples");
  eval->add_option("--thin", thin, "sweeps per retained sample");
  eval->add_flag("--reuse", reuse, "score existing per-fold checkpoints instead of training");
  eval->add_flag("--average-samples", average, "spread components over all retained samples");

  auto* exp = app.add_subcommand("export", "write a filtered, annotated tree from a checkpoint");
  common(exp);
  exp->add_option("checkpoint", checkpoint, "checkpoint or exported tree JSON")->required();
  exp->add_option("-d,--data", data, "dataset, for per-node items");
  exp->add_option("--labels", labels, "item names or vocabulary");
  exp->add_option("--threshold", threshold, "minimum subtree size");
  exp->add_option("--top", top, "items listed per node");
  exp->add_flag("--current", current, "export the last state instead of the best sample");

  auto* gw = app.add_subcommand("geweke", "joint-distribution test of the Bernoulli sampler");
  common(gw);
  gw->add_option("--samples", g_samples, "samples per side");
  gw->add_option("--thin", g_thin, "sweeps between chain samples (0: identical sides)");
  gw->add_option("--fault", fault_name, "none, swapped-nu, skip-sbp, stale-counts");
  gw->add_flag("--require-pass", require_pass, "exit with status 4 if any statistic fails");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig c = read_config(config_path);
    if (!out.empty()) c.output = out;
    if (!data.empty()) c.data = data;
    if (!labels.empty()) c.labels = labels;
    if (!model.empty()) {
      c.model = model;
      c.model_given = true;
    }
    if (*eval && !c.model_given) c.model = "topics";
    if (seed) c.seed = *seed;
    if (warmup) c.schedule.warmup = *warmup;
    if (burn_in) c.schedule.burn_in = *burn_in;
    if (c.schedule.warmup > c.schedule.burn_in) c.schedule.warmup = c.schedule.burn_in;
    if (samples) c.schedule.samples = *samples;
    if (thin) c.schedule.thin = *thin;
    if (topics) c.topics = *topics;
    if (lda_sweeps) c.lda_sweeps = *lda_sweeps;
    if (frozen) c.frozen_sweeps = *frozen;
    if (threshold) c.threshold = *threshold;
    if (top) c.top_items = *top;
    if (folds) c.folds = *folds;
    if (fold_limit) c.fold_limit = *fold_limit;
    if (components) c.components = *components;
    if (average) c.average_samples = true;
    if (n) c.prior_n = *n;
    if (replicates) c.prior_replicates = *replicates;
    if (g_samples) c.geweke.samples = *g_samples;
    if (g_thin) c.geweke.sweeps_per_sample = *g_thin;
    if (!fault_name.empty()) c.geweke.sweep.fault = parse_fault(fault_name);
    if (!topic_list.empty()) {
      c.topic_grid.clear();
      std::stringstream ss(topic_list);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          c.topic_grid.push_back(std::stoul(tok));
        } catch (const std::exception&) {
          throw config_error("bad topic grid entry '" + tok + "'");
        }
      }
    }
    c.validate();

    if (*prior) return cmd_sample_prior(c);
    if (*fit) return cmd_fit(c, resume, quiet);
    if (*eval) return cmd_evaluate(c, reuse, quiet);
    if (*exp) return cmd_export(c, checkpoint, current);
    if (*gw) return cmd_geweke(c, require_pass, quiet);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
