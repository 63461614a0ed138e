// Command-line front end: dataset simulation, the individual training
// stages, query-strategy selection, full experiments and report
// aggregation.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sei/experiment.hpp"

namespace fs = std::filesystem;

namespace {

int infer_num_classes(const std::vector<sei::IQRecord>& records, int flag_value) {
  if (flag_value > 0) return flag_value;
  int m = 0;
  for (const sei::IQRecord& r : records)
    if (r.label) m = std::max(m, *r.label);
  if (m < 2) throw sei::config_error("cannot infer class count from unlabeled data; pass --num_emitters");
  return m;
}

sei::TrainConfig train_config_from(const sei::ExperimentConfig& cfg) {
  sei::TrainConfig tc;
  tc.batch = cfg.batch;
  tc.lr = cfg.lr;
  tc.tau = cfg.tau;
  tc.momentum = cfg.momentum;
  tc.alpha = cfg.alpha;
  tc.compute_cl = cfg.cl_term;
  tc.aug_angles = sei::parse_aug_angles(cfg.aug_angles);
  return tc;
}

void add_simulate(CLI::App& app) {
  auto* cmd = app.add_subcommand("simulate", "Generate a synthetic labeled I/Q dataset file");
  auto cfg = std::make_shared<sei::SimConfig>();
  auto out = std::make_shared<std::string>("dataset.iq");
  auto channel = std::make_shared<std::string>("flat");
  auto snr = std::make_shared<double>(10.0);
  auto seed = std::make_shared<std::uint64_t>(0);
  cmd->add_option("--num_emitters", cfg->num_emitters, "number of emitters M")->capture_default_str();
  cmd->add_option("--per_emitter", cfg->per_emitter, "records per emitter")->capture_default_str();
  cmd->add_option("--length", cfg->length, "samples per record L")->capture_default_str();
  cmd->add_option("--snr_db", *snr, "channel SNR in dB (inf for noise-free)")->capture_default_str();
  cmd->add_option("--channel", *channel, "flat | multipath3")->capture_default_str();
  cmd->add_option("--samples_per_symbol", cfg->samples_per_symbol)->capture_default_str();
  cmd->add_option("--seed", *seed, "generation seed")->required();
  cmd->add_option("--out", *out, "output dataset file")->capture_default_str();
  cmd->callback([cfg, out, channel, snr, seed]() {
    cfg->seed = *seed;
    cfg->channel = sei::make_channel(*channel, *snr, *seed);
    sei::Dataset ds = sei::generate_dataset(*cfg);
    std::vector<sei::IQRecord> records;
    auto take = [&](std::vector<sei::IQRecord>& pool) {
      for (sei::IQRecord& r : pool) {
        r.label = r.emitter_truth;
        records.push_back(std::move(r));
      }
    };
    take(ds.pools.labeled);
    take(ds.pools.unlabeled);
    take(ds.pools.test);
    sei::save_iq_file(records, *out);
    std::cout << "wrote " << records.size() << " records (" << cfg->num_emitters << " emitters, L=" << cfg->length
              << ") to " << *out << "\n";
  });
}

void add_pretrain(CLI::App& app) {
  auto* cmd = app.add_subcommand("pretrain", "Stage 1: contrastive pretraining on a dataset file");
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("stage1.ckpt");
  auto history = std::make_shared<std::string>("stage1_history.csv");
  auto cfg = std::make_shared<sei::ExperimentConfig>();
  auto num_classes = std::make_shared<int>(0);
  cmd->add_option("--data", *data, "I/Q dataset file")->required();
  cmd->add_option("--out", *out, "checkpoint to write")->capture_default_str();
  cmd->add_option("--history", *history, "loss history CSV")->capture_default_str();
  cmd->add_option("--num_emitters", *num_classes, "class count (default: infer from labels)");
  cmd->add_option("--epochs", cfg->stage1_epochs)->capture_default_str();
  cmd->add_option("--batch", cfg->batch)->capture_default_str();
  cmd->add_option("--lr", cfg->lr)->capture_default_str();
  cmd->add_option("--tau", cfg->tau)->capture_default_str();
  cmd->add_option("--queue_depth", cfg->queue_depth)->capture_default_str();
  cmd->add_option("--momentum", cfg->momentum)->capture_default_str();
  cmd->add_option("--aug_angles", cfg->aug_angles)->capture_default_str();
  cmd->add_option("--seed", cfg->seed, "training seed")->required();
  cmd->callback([data, out, history, cfg, num_classes]() {
    sei::IqFile file = sei::load_iq_file(*data);
    sei::Arch arch;
    arch.num_classes = infer_num_classes(file.records, *num_classes);
    arch.input_length = file.records.empty() ? 0 : static_cast<int>(file.records.front().samples.size());
    sei::NetworkParams params = sei::init_params(arch, sei::derive_seed(cfg->seed, "params"));
    sei::KeyQueue queue(cfg->queue_depth);
    sei::TrainConfig tc = train_config_from(*cfg);
    tc.epochs = cfg->stage1_epochs;
    tc.batch = std::min<int>(tc.batch, static_cast<int>(file.records.size()));
    tc.seed = sei::derive_seed(cfg->seed, "stage1");
    auto stats = sei::pretrain_stage1(params, file.records, queue, tc);
    sei::detail::write_history_csv(*history, stats);
    sei::save_checkpoint(params, *out, {cfg->seed, "stage1"});
    std::cout << "pretrained " << stats.size() << " epochs on " << file.records.size() << " records; final L_CL="
              << (stats.empty() ? 0.0 : stats.back().l_cl) << "\n";
  });
}

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Stage 2: supervised joint-loss training on labeled data");
  auto data = std::make_shared<std::string>();
  auto ckpt_in = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("stage2.ckpt");
  auto history = std::make_shared<std::string>("stage2_history.csv");
  auto cfg = std::make_shared<sei::ExperimentConfig>();
  auto num_classes = std::make_shared<int>(0);
  cmd->add_option("--data", *data, "labeled I/Q dataset file")->required();
  cmd->add_option("--checkpoint", *ckpt_in, "warm-start checkpoint (default: fresh init)");
  cmd->add_option("--out", *out)->capture_default_str();
  cmd->add_option("--history", *history)->capture_default_str();
  cmd->add_option("--num_emitters", *num_classes, "class count (default: infer from labels)");
  cmd->add_option("--epochs", cfg->stage2_epochs)->capture_default_str();
  cmd->add_option("--alpha", cfg->alpha)->capture_default_str();
  cmd->add_option("--batch", cfg->batch)->capture_default_str();
  cmd->add_option("--lr", cfg->lr)->capture_default_str();
  cmd->add_option("--tau", cfg->tau)->capture_default_str();
  cmd->add_option("--queue_depth", cfg->queue_depth)->capture_default_str();
  cmd->add_option("--momentum", cfg->momentum)->capture_default_str();
  cmd->add_option("--aug_angles", cfg->aug_angles)->capture_default_str();
  cmd->add_flag("!--no-cl_term", cfg->cl_term, "drop the contrastive term (pure cross-entropy)");
  cmd->add_option("--seed", cfg->seed, "training seed")->required();
  cmd->callback([data, ckpt_in, out, history, cfg, num_classes]() {
    sei::IqFile file = sei::load_iq_file(*data);
    sei::Arch arch;
    arch.num_classes = infer_num_classes(file.records, *num_classes);
    arch.input_length = file.records.empty() ? 0 : static_cast<int>(file.records.front().samples.size());
    sei::NetworkParams params = ckpt_in->empty() ? sei::init_params(arch, sei::derive_seed(cfg->seed, "params"))
                                                 : sei::load_checkpoint(*ckpt_in, arch);
    sei::KeyQueue queue(cfg->queue_depth);
    sei::TrainConfig tc = train_config_from(*cfg);
    tc.epochs = cfg->stage2_epochs;
    tc.seed = sei::derive_seed(cfg->seed, "stage2");
    auto stats = sei::train_stage2(params, file.records, queue, tc);
    sei::detail::write_history_csv(*history, stats);
    sei::save_checkpoint(params, *out, {cfg->seed, "stage2"});
    std::cout << "trained " << stats.size() << " epochs on " << file.records.size() << " records; final train_acc="
              << (stats.empty() ? 0.0 : stats.back().train_acc) << "\n";
  });
}

void add_select(CLI::App& app) {
  auto* cmd = app.add_subcommand("select", "Score an unlabeled pool and pick a labeling batch");
  auto data = std::make_shared<std::string>();
  auto labeled = std::make_shared<std::string>();
  auto ckpt = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("selection.csv");
  auto strategy = std::make_shared<std::string>("kcenter");
  auto budget = std::make_shared<int>(16);
  auto passes = std::make_shared<int>(16);
  auto seed = std::make_shared<std::uint64_t>(0);
  auto num_classes = std::make_shared<int>(0);
  cmd->add_option("--data", *data, "pool I/Q dataset file")->required();
  cmd->add_option("--labeled", *labeled, "labeled I/Q file (k-center centers)");
  cmd->add_option("--checkpoint", *ckpt, "model checkpoint")->required();
  cmd->add_option("--strategy", *strategy, "bald | kcenter | random")->capture_default_str();
  cmd->add_option("--budget", *budget, "K records to select")->capture_default_str();
  cmd->add_option("--mc_passes", *passes, "MC dropout passes (bald)")->capture_default_str();
  cmd->add_option("--num_emitters", *num_classes, "class count (default: infer from labels)");
  cmd->add_option("--seed", *seed)->required();
  cmd->add_option("--out", *out)->capture_default_str();
  cmd->callback([data, labeled, ckpt, out, strategy, budget, passes, seed, num_classes]() {
    sei::IqFile pool = sei::load_iq_file(*data);
    sei::Arch arch;
    arch.num_classes = infer_num_classes(pool.records, *num_classes);
    arch.input_length = pool.records.empty() ? 0 : static_cast<int>(pool.records.front().samples.size());
    sei::NetworkParams params = sei::load_checkpoint(*ckpt, arch);
    double angle = sei::default_aug_angles()[0];
    sei::CandidateScores sel;
    if (*strategy == "bald") {
      sel = sei::select_bald(sei::bald_scores(params, pool.records, *passes, sei::derive_seed(*seed, "bald"), angle), *budget);
    } else if (*strategy == "kcenter") {
      if (labeled->empty()) throw sei::config_error("kcenter needs --labeled for the center set");
      sei::IqFile centers = sei::load_iq_file(*labeled);
      sel = sei::kcenter_greedy(sei::selection_embeddings(params, pool.records, angle),
                                sei::selection_embeddings(params, centers.records, angle), *budget);
    } else if (*strategy == "random") {
      sel = sei::select_random(static_cast<int>(pool.records.size()), *budget, sei::derive_seed(*seed, "random"));
    } else {
      throw sei::config_error("unknown strategy '" + *strategy + "'");
    }
    sei::detail::write_selection_csv(*out, 0, sel);
    std::cout << "selected " << sel.indices.size() << " of " << pool.records.size() << " records by " << sel.strategy
              << " -> " << *out << "\n";
  });
}

void add_run(CLI::App& app) {
  auto* cmd = app.add_subcommand("run", "Run the full three-stage experiment across AL rounds");
  auto config_path = std::make_shared<std::string>();
  auto overrides = std::make_shared<std::vector<std::pair<std::string, std::string>>>();
  auto seed = std::make_shared<std::uint64_t>(0);
  cmd->add_option("--config", *config_path, "flat key=value config file");
  cmd->add_option("--seed", *seed, "experiment seed")->required();
  // Every config key doubles as a flag; flags win over the file.
  for (const auto& [name, field] : sei::detail::config_fields()) {
    if (name == "seed") continue;
    cmd->add_option_function<std::string>(
        "--" + name, [overrides, key = name](const std::string& v) { overrides->emplace_back(key, v); });
  }
  cmd->callback([config_path, overrides, seed]() {
    sei::ExperimentConfig cfg;
    if (!config_path->empty()) cfg = sei::parse_config_file(*config_path);
    for (const auto& [key, value] : *overrides) sei::apply_config_entry(cfg, key, value);
    cfg.seed = *seed;
    sei::ExperimentResult result = sei::run_experiment(cfg);
    std::cout << "status: " << result.status << "\n";
    for (const sei::RoundReport& r : result.rounds)
      std::cout << "round " << r.round << ": labeled=" << r.labeled_count << " test_acc=" << r.test_accuracy
                << " selector=" << r.selector << "\n";
    std::cout << "artifacts in " << result.run_dir.string() << "\n";
  });
}

void add_report(CLI::App& app) {
  auto* cmd = app.add_subcommand("report", "Aggregate run directories into plot-ready CSV curves");
  auto dirs = std::make_shared<std::vector<std::string>>();
  auto out = std::make_shared<std::string>("report");
  cmd->add_option("runs", *dirs, "run directories")->required();
  cmd->add_option("--out", *out, "output directory")->capture_default_str();
  cmd->callback([dirs, out]() {
    std::vector<fs::path> paths(dirs->begin(), dirs->end());
    sei::ReportSummary summary = sei::report(paths, *out);
    std::cout << sei::summary_table(summary);
    std::cout << "curves written to " << *out << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active-learning specific emitter identification"};
  app.require_subcommand(1);
  add_simulate(app);
  add_pretrain(app);
  add_train(app);
  add_select(app);
  add_run(app);
  add_report(app);
  try {
    CLI11_PARSE(app, argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
