#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sei/iq_io.hpp"
#include "sei/select.hpp"
#include "sei/train.hpp"

namespace sei {

namespace fs = std::filesystem;

// Flat key=value experiment configuration. Every key can come from a config
// file or a CLI flag of the same name.
struct ExperimentConfig {
  std::string dataset = "synthetic";  // "synthetic" or a dataset file path
  int num_emitters = 4;
  int length = 256;
  int per_emitter = 64;
  int test_per_emitter = 16;
  double snr_db = 10.0;
  std::string channel = "flat";  // flat | multipath3
  int initial_labeled = 16;
  int rounds = 4;
  int budget = 16;  // labels revealed per round
  std::string strategy = "kcenter";  // bald | kcenter | random
  int stage1_epochs = 50;
  int stage2_epochs = 100;
  double lr = 0.001;
  int batch = 64;
  double tau = 0.2;
  int queue_depth = 512;
  double momentum = 0.99;
  double alpha = 0.1;
  int mc_passes = 16;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/experiment";
  bool pretrain = true;
  bool pretrain_each_round = false;
  bool warm_start = true;
  bool cl_term = true;  // off: pure cross-entropy stage 2
  std::string pretrain_checkpoint;
  std::string aug_angles = "1.5707963267948966,3.141592653589793";
};

struct RoundReport {
  int round = 0;
  int labeled_count = 0;
  double test_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::string selector;
  double wall_time_s = 0.0;
};

struct ExperimentResult {
  std::vector<RoundReport> rounds;
  std::string status;
  fs::path run_dir;
};

// ---- config file handling -------------------------------------------------

namespace detail {

struct ConfigField {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': expected number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': expected unsigned integer, got '" + v + "'");
  }
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  auto str_field = [](std::string ExperimentConfig::* member) {
    return ConfigField{[member](ExperimentConfig& c, const std::string& v) { c.*member = v; },
                       [member](const ExperimentConfig& c) { return c.*member; }};
  };
  auto int_field = [](int ExperimentConfig::* member) {
    return ConfigField{[member](ExperimentConfig& c, const std::string& v) { c.*member = parse_int("", v); },
                       [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
  };
  auto dbl_field = [](double ExperimentConfig::* member) {
    return ConfigField{[member](ExperimentConfig& c, const std::string& v) { c.*member = parse_double("", v); },
                       [member](const ExperimentConfig& c) { return fmt_double(c.*member); }};
  };
  auto bool_field = [](bool ExperimentConfig::* member) {
    return ConfigField{[member](ExperimentConfig& c, const std::string& v) { c.*member = parse_bool("", v); },
                       [member](const ExperimentConfig& c) { return c.*member ? "true" : "false"; }};
  };
  static const std::vector<std::pair<std::string, ConfigField>> fields = {
      {"dataset", str_field(&ExperimentConfig::dataset)},
      {"num_emitters", int_field(&ExperimentConfig::num_emitters)},
      {"length", int_field(&ExperimentConfig::length)},
      {"per_emitter", int_field(&ExperimentConfig::per_emitter)},
      {"test_per_emitter", int_field(&ExperimentConfig::test_per_emitter)},
      {"snr_db", dbl_field(&ExperimentConfig::snr_db)},
      {"channel", str_field(&ExperimentConfig::channel)},
      {"initial_labeled", int_field(&ExperimentConfig::initial_labeled)},
      {"rounds", int_field(&ExperimentConfig::rounds)},
      {"budget", int_field(&ExperimentConfig::budget)},
      {"strategy", str_field(&ExperimentConfig::strategy)},
      {"stage1_epochs", int_field(&ExperimentConfig::stage1_epochs)},
      {"stage2_epochs", int_field(&ExperimentConfig::stage2_epochs)},
      {"lr", dbl_field(&ExperimentConfig::lr)},
      {"batch", int_field(&ExperimentConfig::batch)},
      {"tau", dbl_field(&ExperimentConfig::tau)},
      {"queue_depth", int_field(&ExperimentConfig::queue_depth)},
      {"momentum", dbl_field(&ExperimentConfig::momentum)},
      {"alpha", dbl_field(&ExperimentConfig::alpha)},
      {"mc_passes", int_field(&ExperimentConfig::mc_passes)},
      {"seed", ConfigField{[](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                           [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      {"out_dir", str_field(&ExperimentConfig::out_dir)},
      {"pretrain", bool_field(&ExperimentConfig::pretrain)},
      {"pretrain_each_round", bool_field(&ExperimentConfig::pretrain_each_round)},
      {"warm_start", bool_field(&ExperimentConfig::warm_start)},
      {"cl_term", bool_field(&ExperimentConfig::cl_term)},
      {"pretrain_checkpoint", str_field(&ExperimentConfig::pretrain_checkpoint)},
      {"aug_angles", str_field(&ExperimentConfig::aug_angles)},
  };
  return fields;
}

}  // namespace detail

inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : detail::config_fields()) {
    if (name == key) {
      try {
        field.set(cfg, value);
      } catch (const config_error&) {
        throw config_error("config key '" + key + "': invalid value '" + value + "'");
      }
      return;
    }
  }
  throw config_error("unknown config key '" + key + "'");
}

inline ExperimentConfig parse_config_file(const fs::path& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw parse_error(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    apply_config_entry(base, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
  }
  return base;
}

inline std::string config_to_string(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const auto& [name, field] : detail::config_fields()) os << name << " = " << field.get(cfg) << "\n";
  return os.str();
}

inline std::vector<double> parse_aug_angles(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = detail::trim(tok);
    if (!tok.empty()) out.push_back(detail::parse_double("aug_angles", tok));
  }
  if (out.empty()) throw config_error("aug_angles: no angles in '" + spec + "'");
  return out;
}

// ---- dataset assembly -----------------------------------------------------

// Stratified split of fully labeled records into labeled/unlabeled/test
// pools; unlabeled records keep only their hidden truth.
inline DatasetPools split_records(std::vector<IQRecord> records, int num_classes, int initial_labeled,
                                  int test_per_class, std::uint64_t seed) {
  std::vector<std::vector<IQRecord>> by_class(static_cast<std::size_t>(num_classes));
  for (IQRecord& r : records) {
    if (!r.label) throw config_error("dataset file must be fully labeled to drive an experiment");
    if (*r.label < 1 || *r.label > num_classes)
      throw config_error("dataset label " + std::to_string(*r.label) + " outside 1.." + std::to_string(num_classes));
    by_class[static_cast<std::size_t>(*r.label - 1)].push_back(std::move(r));
  }
  Rng rng(derive_seed(seed, "split"));
  for (auto& v : by_class) rng.shuffle(v);

  DatasetPools pools;
  for (auto& v : by_class) {
    if (static_cast<int>(v.size()) <= test_per_class)
      throw config_error("class with " + std::to_string(v.size()) + " records cannot spare " + std::to_string(test_per_class) + " test records");
    for (int i = 0; i < test_per_class; ++i) {
      pools.test.push_back(std::move(v.back()));
      v.pop_back();
    }
  }
  int taken = 0;
  while (taken < initial_labeled) {
    bool any = false;
    for (auto& v : by_class) {
      if (taken >= initial_labeled) break;
      if (v.empty()) continue;
      pools.labeled.push_back(std::move(v.front()));
      v.erase(v.begin());
      ++taken;
      any = true;
    }
    if (!any) throw config_error("initial_labeled exceeds available records");
  }
  bool left = true;
  while (left) {
    left = false;
    for (auto& v : by_class) {
      if (v.empty()) continue;
      IQRecord r = std::move(v.front());
      v.erase(v.begin());
      r.label.reset();  // hide; emitter_truth stays for the oracle
      pools.unlabeled.push_back(std::move(r));
      left = left || !v.empty();
    }
  }
  rng.shuffle(pools.unlabeled);
  return pools;
}

inline DatasetPools build_pools(const ExperimentConfig& cfg) {
  if (cfg.test_per_emitter < 1) throw config_error("test_per_emitter must be >= 1 to evaluate rounds");
  if (cfg.dataset == "synthetic") {
    SimConfig sim;
    sim.num_emitters = cfg.num_emitters;
    sim.per_emitter = cfg.per_emitter;
    sim.length = cfg.length;
    sim.channel = make_channel(cfg.channel, cfg.snr_db, cfg.seed);
    sim.seed = derive_seed(cfg.seed, "dataset");
    sim.initial_labeled = cfg.initial_labeled;
    sim.test_per_emitter = cfg.test_per_emitter;
    return generate_dataset(sim).pools;
  }
  IqFile file = load_iq_file(cfg.dataset);
  for (const IQRecord& r : file.records)
    if (static_cast<int>(r.samples.size()) != cfg.length)
      throw config_error("dataset record length " + std::to_string(r.samples.size()) + " does not match config length " + std::to_string(cfg.length));
  return split_records(std::move(file.records), cfg.num_emitters, cfg.initial_labeled, cfg.test_per_emitter, cfg.seed);
}

// ---- run artifacts ----------------------------------------------------------

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw parse_error("cannot write " + path.string());
  out << text;
}

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline void write_history_csv(const fs::path& path, const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,L_CL,L_CE,L,train_acc\n";
  for (const EpochStats& e : history)
    os << e.epoch << "," << csv_num(e.l_cl) << "," << csv_num(e.l_ce) << "," << csv_num(e.l_total) << ","
       << csv_num(e.train_acc) << "\n";
  write_text(path, os.str());
}

inline void write_selection_csv(const fs::path& path, int round, const CandidateScores& sel) {
  std::ostringstream os;
  os << "round,strategy,index,score\n";
  for (std::size_t i = 0; i < sel.indices.size(); ++i)
    os << round << "," << sel.strategy << "," << sel.indices[i] << "," << csv_num(sel.scores[i]) << "\n";
  write_text(path, os.str());
}

inline void write_rounds_csv(const fs::path& path, const std::vector<RoundReport>& rounds, int num_classes) {
  std::ostringstream os;
  os << "round,labeled_count,test_accuracy";
  for (int m = 1; m <= num_classes; ++m) os << ",acc_class_" << m;
  os << ",selector,wall_time_s\n";
  for (const RoundReport& r : rounds) {
    os << r.round << "," << r.labeled_count << "," << csv_num(r.test_accuracy);
    for (double a : r.per_class_accuracy) os << "," << csv_num(a);
    os << "," << r.selector << "," << csv_num(r.wall_time_s) << "\n";
  }
  write_text(path, os.str());
}

struct TestEval {
  double accuracy = 0.0;
  std::vector<double> per_class;
};

inline TestEval evaluate_test(NetworkParams& params, const std::vector<IQRecord>& test, double aug_angle) {
  TestEval ev;
  Tensor probs = classify_records_eval(params, test, iota_indices(test.size()), aug_angle);
  int m = params.arch.num_classes;
  std::vector<int> correct(static_cast<std::size_t>(m)), count(static_cast<std::size_t>(m));
  int total_correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    int truth = test[i].label.value_or(test[i].emitter_truth);
    if (truth < 1 || truth > m) throw config_error("test record without valid label");
    ++count[static_cast<std::size_t>(truth - 1)];
    if (argmax_row(probs, static_cast<int>(i)) + 1 == truth) {
      ++correct[static_cast<std::size_t>(truth - 1)];
      ++total_correct;
    }
  }
  ev.accuracy = static_cast<double>(total_correct) / static_cast<double>(test.size());
  for (int c = 0; c < m; ++c)
    ev.per_class.push_back(count[static_cast<std::size_t>(c)] ? static_cast<double>(correct[static_cast<std::size_t>(c)]) / count[static_cast<std::size_t>(c)]
                                                              : std::numeric_limits<double>::quiet_NaN());
  return ev;
}

}  // namespace detail

// ---- the three-stage loop ---------------------------------------------------

// Stage 1 once up front, then per AL round: stage-2 training on the current
// labels, test evaluation, and (between rounds) selection + label reveal.
// Deterministic per (config, seed) apart from wall times.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.rounds < 0) throw config_error("rounds must be >= 0");
  if (cfg.strategy != "bald" && cfg.strategy != "kcenter" && cfg.strategy != "random")
    throw config_error("unknown strategy '" + cfg.strategy + "' (expected bald, kcenter or random)");
  std::vector<double> angles = parse_aug_angles(cfg.aug_angles);
  if (cfg.initial_labeled < cfg.num_emitters)
    log_warn("initial_labeled " + std::to_string(cfg.initial_labeled) + " below num_emitters " + std::to_string(cfg.num_emitters) + "; some classes start unseen");

  ExperimentResult result;
  result.run_dir = fs::path(cfg.out_dir);
  fs::create_directories(result.run_dir);
  detail::write_text(result.run_dir / "config.txt", config_to_string(cfg));

  DatasetPools pools = build_pools(cfg);
  if (static_cast<std::size_t>(cfg.budget) * static_cast<std::size_t>(cfg.rounds) > pools.unlabeled.size())
    log_warn("budget*rounds exceeds unlabeled pool of " + std::to_string(pools.unlabeled.size()) + "; run will stop early");

  Arch arch;
  arch.num_classes = cfg.num_emitters;
  arch.input_length = cfg.length;
  NetworkParams params = init_params(arch, derive_seed(cfg.seed, "params"));
  KeyQueue queue(cfg.queue_depth);

  TrainConfig tc;
  tc.batch = cfg.batch;
  tc.lr = cfg.lr;
  tc.tau = cfg.tau;
  tc.momentum = cfg.momentum;
  tc.alpha = cfg.alpha;
  tc.compute_cl = cfg.cl_term;
  tc.aug_angles = angles;

  auto pretrain_once = [&](const std::string& tag, std::uint64_t seed) {
    TrainConfig s1 = tc;
    s1.epochs = cfg.stage1_epochs;
    s1.batch = std::min<int>(cfg.batch, static_cast<int>(pools.unlabeled.size()));
    s1.seed = seed;
    std::vector<EpochStats> history = pretrain_stage1(params, pools.unlabeled, queue, s1);
    detail::write_history_csv(result.run_dir / (tag + "_history.csv"), history);
    CheckpointMeta meta{cfg.seed, tag};
    save_checkpoint(params, result.run_dir / (tag + ".ckpt"), meta);
  };

  if (cfg.pretrain) {
    if (!cfg.pretrain_checkpoint.empty()) {
      params = load_checkpoint(cfg.pretrain_checkpoint, arch);
    } else if (!pools.unlabeled.empty()) {
      pretrain_once("stage1", derive_seed(cfg.seed, "stage1"));
    }
  }
  NetworkParams stage1_params = params;  // cold-start restore point

  result.status = "completed";
  for (int round = 0; round <= cfg.rounds; ++round) {
    auto t0 = std::chrono::steady_clock::now();
    if (!cfg.warm_start && round > 0) params = stage1_params;
    if (cfg.pretrain && cfg.pretrain_each_round && round > 0 && !pools.unlabeled.empty())
      pretrain_once("stage1_round" + std::to_string(round), derive_seed(cfg.seed, "stage1_round", static_cast<std::uint64_t>(round)));

    // Fresh optimizer per fine-tuning round; parameters warm-start.
    params.query_encoder_state = {};
    params.query_projection_state = {};
    params.predictor_state = {};
    params.classifier_state = {};
    TrainConfig s2 = tc;
    s2.epochs = cfg.stage2_epochs;
    s2.seed = derive_seed(cfg.seed, "stage2_round", static_cast<std::uint64_t>(round));
    std::vector<EpochStats> history = train_stage2(params, pools.labeled, queue, s2);
    detail::write_history_csv(result.run_dir / ("round" + std::to_string(round) + "_history.csv"), history);
    CheckpointMeta meta{cfg.seed, "round" + std::to_string(round)};
    save_checkpoint(params, result.run_dir / ("round" + std::to_string(round) + ".ckpt"), meta);

    detail::TestEval ev = detail::evaluate_test(params, pools.test, angles[0]);
    RoundReport report;
    report.round = round;
    report.labeled_count = static_cast<int>(pools.labeled.size());
    report.test_accuracy = ev.accuracy;
    report.per_class_accuracy = ev.per_class;
    report.selector = cfg.strategy;
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rounds.push_back(report);

    if (round == cfg.rounds) break;
    if (static_cast<std::size_t>(cfg.budget) > pools.unlabeled.size()) {
      result.status = "stopped_early: budget " + std::to_string(cfg.budget) + " exceeds unlabeled pool of " +
                      std::to_string(pools.unlabeled.size()) + " after round " + std::to_string(round);
      log_warn(result.status);
      break;
    }
    CandidateScores sel;
    if (cfg.strategy == "bald") {
      std::vector<double> scores = bald_scores(params, pools.unlabeled, cfg.mc_passes,
                                               derive_seed(cfg.seed, "bald", static_cast<std::uint64_t>(round)), angles[0]);
      sel = select_bald(scores, cfg.budget);
    } else if (cfg.strategy == "kcenter") {
      auto pool_emb = selection_embeddings(params, pools.unlabeled, angles[0]);
      auto center_emb = selection_embeddings(params, pools.labeled, angles[0]);
      sel = kcenter_greedy(pool_emb, center_emb, cfg.budget);
    } else {
      sel = select_random(static_cast<int>(pools.unlabeled.size()), cfg.budget,
                          derive_seed(cfg.seed, "random", static_cast<std::uint64_t>(round)));
    }
    detail::write_selection_csv(result.run_dir / ("selection_round" + std::to_string(round) + ".csv"), round, sel);
    reveal_label(pools, sel.indices);
  }

  detail::write_rounds_csv(result.run_dir / "rounds.csv", result.rounds, cfg.num_emitters);
  detail::write_text(result.run_dir / "status.txt", result.status + "\n");
  return result;
}

// Conventional supervised reference: no pretraining, no contrastive term,
// random selection. Report schema matches run_experiment.
inline ExperimentResult run_baseline_cnn(ExperimentConfig cfg) {
  cfg.strategy = "random";
  cfg.alpha = 0.0;
  cfg.pretrain = false;
  cfg.pretrain_each_round = false;
  cfg.cl_term = false;
  return run_experiment(cfg);
}

// ---- aggregation ------------------------------------------------------------

struct CurvePoint {
  int round = 0;
  int labeled_count = 0;
  double mean_accuracy = 0.0;
  int num_runs = 0;
};

struct Curve {
  std::string key;  // strategy name or alpha value
  std::vector<CurvePoint> points;
};

struct ReportSummary {
  std::vector<Curve> strategy_curves;
  std::vector<Curve> alpha_curves;  // only when several alphas are present
};

namespace detail {

struct ParsedRun {
  ExperimentConfig config;
  std::vector<RoundReport> rounds;
  std::string status;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

inline ParsedRun parse_run_dir(const fs::path& dir) {
  ParsedRun run;
  if (!fs::exists(dir / "rounds.csv")) throw report_error("run " + dir.string() + " has no rounds.csv");
  run.config = parse_config_file(dir / "config.txt");
  std::ifstream in(dir / "rounds.csv");
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() < 5) throw report_error("run " + dir.string() + ": malformed rounds.csv row '" + line + "'");
    RoundReport r;
    r.round = parse_int("round", f[0]);
    r.labeled_count = parse_int("labeled_count", f[1]);
    r.test_accuracy = parse_double("test_accuracy", f[2]);
    r.selector = f[f.size() - 2];
    r.wall_time_s = parse_double("wall_time_s", f.back());
    run.rounds.push_back(r);
  }
  std::ifstream st(dir / "status.txt");
  std::getline(st, run.status);

  // A completed run must cover rounds 0..R and carry every per-round file.
  std::vector<std::string> gaps;
  int expect = run.status.rfind("completed", 0) == 0 ? run.config.rounds : static_cast<int>(run.rounds.size()) - 1;
  for (int r = 0; r <= expect; ++r) {
    bool have_row = false;
    for (const RoundReport& row : run.rounds) have_row = have_row || row.round == r;
    if (!have_row) gaps.push_back("round " + std::to_string(r) + " row");
    if (!fs::exists(dir / ("round" + std::to_string(r) + "_history.csv")))
      gaps.push_back("round" + std::to_string(r) + "_history.csv");
  }
  if (!gaps.empty()) throw report_error("run " + dir.string() + " is missing: " + join(gaps, ", "));
  return run;
}

inline std::vector<Curve> aggregate(const std::vector<ParsedRun>& runs,
                                    const std::function<std::string(const ParsedRun&)>& key_of) {
  std::map<std::string, std::map<int, CurvePoint>> acc;
  for (const ParsedRun& run : runs) {
    for (const RoundReport& r : run.rounds) {
      CurvePoint& p = acc[key_of(run)][r.round];
      p.round = r.round;
      p.labeled_count = r.labeled_count;
      p.mean_accuracy += r.test_accuracy;
      p.num_runs += 1;
    }
  }
  std::vector<Curve> out;
  for (auto& [key, points] : acc) {
    Curve c;
    c.key = key;
    for (auto& [round, p] : points) {
      p.mean_accuracy /= p.num_runs;
      c.points.push_back(p);
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline void write_curves_csv(const fs::path& path, const std::string& key_header, const std::vector<Curve>& curves) {
  std::ostringstream os;
  os << key_header << ",round,labeled_count,mean_test_accuracy,num_runs\n";
  for (const Curve& c : curves)
    for (const CurvePoint& p : c.points)
      os << c.key << "," << p.round << "," << p.labeled_count << "," << csv_num(p.mean_accuracy) << "," << p.num_runs << "\n";
  write_text(path, os.str());
}

}  // namespace detail

// Aggregates one or more run directories into accuracy-vs-round curves per
// strategy (and per alpha when several alphas are present), written as
// plot-ready CSVs under out_dir.
inline ReportSummary report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw report_error("report: no run directories given");
  std::vector<detail::ParsedRun> runs;
  runs.reserve(run_dirs.size());
  for (const fs::path& dir : run_dirs) runs.push_back(detail::parse_run_dir(dir));

  ReportSummary summary;
  summary.strategy_curves = detail::aggregate(runs, [](const detail::ParsedRun& r) { return r.config.strategy; });
  std::set<std::string> alphas;
  for (const detail::ParsedRun& r : runs) alphas.insert(detail::fmt_double(r.config.alpha));
  if (alphas.size() > 1)
    summary.alpha_curves = detail::aggregate(runs, [](const detail::ParsedRun& r) { return detail::fmt_double(r.config.alpha); });

  fs::create_directories(out_dir);
  detail::write_curves_csv(out_dir / "accuracy_vs_round.csv", "strategy", summary.strategy_curves);
  if (!summary.alpha_curves.empty()) detail::write_curves_csv(out_dir / "alpha_sweep.csv", "alpha", summary.alpha_curves);
  return summary;
}

inline std::string summary_table(const ReportSummary& summary) {
  std::ostringstream os;
  for (const Curve& c : summary.strategy_curves) {
    os << c.key << ":";
    for (const CurvePoint& p : c.points) {
      os.precision(4);
      os << "  r" << p.round << "(" << p.labeled_count << ")=" << p.mean_accuracy;
    }
    os << "\n";
  }
  for (const Curve& c : summary.alpha_curves) {
    os << "alpha=" << c.key << ":";
    for (const CurvePoint& p : c.points) {
      os.precision(4);
      os << "  r" << p.round << "=" << p.mean_accuracy;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace sei
