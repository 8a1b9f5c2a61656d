// Command-line front end: synthesize hermetic databases, simulate mixture
// datasets, train/evaluate the mask-estimation baseline, and run the
// cross-validated generalization-gap experiment.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "gengap/crossval.hpp"
#include "gengap/metrics.hpp"
#include "gengap/model.hpp"
#include "gengap/registry.hpp"
#include "gengap/rng.hpp"
#include "gengap/scene.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

using nlohmann::json;

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

uint64_t default_seed() {
  if (const char* env = std::getenv("GENGAP_SEED")) return std::stoull(env);
  return 0;
}

// Written before any stage runs and rewritten atomically (tmp + rename) as
// stages change status, so an interrupted run still has a valid manifest.
class RunManifest {
 public:
  RunManifest(std::filesystem::path out_dir, const std::string& command, json config,
              uint64_t seed)
      : path_(std::move(out_dir)) {
    std::filesystem::create_directories(path_);
    path_ /= "run_manifest.json";
    doc_["tool_version"] = kToolVersion;
    doc_["command"] = command;
    doc_["master_seed"] = seed;
    doc_["created"] = timestamp_utc();
    doc_["config"] = std::move(config);
    doc_["stages"] = json::object();
    flush();
  }

  void stage(const std::string& name, const std::string& status) {
    doc_["stages"][name] = {{"status", status}, {"at", timestamp_utc()}};
    flush();
  }

 private:
  void flush() const {
    const auto tmp = path_.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << doc_.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path_);
  }

  std::filesystem::path path_;
  json doc_;
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty()) out.push_back(std::stoi(token));
  if (out.empty()) throw CLI::ValidationError("expected a comma-separated integer list");
  return out;
}

int cmd_synth_db(const std::filesystem::path& out, uint64_t seed, int n_databases,
                 int speech_items, int noise_items, int room_items, bool force) {
  if (std::filesystem::exists(out / "speech_1" / "manifest.csv") && !force)
    throw std::runtime_error(out.string() + " already holds databases (use --force to overwrite)");

  json cfg{{"out", out.string()},       {"n_databases", n_databases},
           {"speech_items", speech_items}, {"noise_items", noise_items},
           {"room_items", room_items},  {"force", force}};
  RunManifest manifest(out, "synth-db", cfg, seed);

  for (gengap::Kind kind : {gengap::Kind::speech, gengap::Kind::noise, gengap::Kind::room}) {
    manifest.stage(gengap::to_string(kind), "running");
    const int n_items = kind == gengap::Kind::speech  ? speech_items
                        : kind == gengap::Kind::noise ? noise_items
                                                      : room_items;
    for (int index = 1; index <= n_databases; ++index) {
      const gengap::DatabaseId id{kind, index};
      const auto dir = out / id.name();
      const auto db_seed = gengap::derive_seed(seed, std::string("synthdb"),
                                               gengap::to_string(kind), uint64_t(index));
      gengap::Manifest m = gengap::synth_database(id, db_seed, n_items,
                                                  gengap::SynthProfile::for_database(id), dir);
      m = gengap::split_manifest(std::move(m));
      gengap::write_manifest_csv(m, dir / "manifest.csv");
      for (const auto& w : m.warnings) std::cerr << "warning: " << id.name() << ": " << w << "\n";
      std::cout << id.name() << ": " << m.entries.size() << " items\n";
    }
    manifest.stage(gengap::to_string(kind), "done");
  }
  return 0;
}

int cmd_simulate(const std::filesystem::path& db_root, const std::filesystem::path& out,
                 const std::string& speech, const std::string& noise, const std::string& room,
                 const std::string& split, double hours, uint64_t seed, int jobs) {
  gengap::Condition cond;
  cond.split_side = gengap::side_from_string(split);
  for (int j : parse_int_list(speech)) cond.speech_dbs.push_back({gengap::Kind::speech, j});
  for (int j : parse_int_list(noise)) cond.noise_dbs.push_back({gengap::Kind::noise, j});
  for (int j : parse_int_list(room)) cond.room_dbs.push_back({gengap::Kind::room, j});

  json cfg{{"db_root", db_root.string()}, {"out", out.string()}, {"speech", speech},
           {"noise", noise},              {"room", room},        {"split", split},
           {"hours", hours},              {"jobs", jobs}};
  RunManifest manifest(out, "simulate", cfg, seed);

  manifest.stage("generate", "running");
  const gengap::Registry registry = gengap::Registry::load(db_root);
  const gengap::Dataset dataset = gengap::generate_dataset(cond, registry, hours, seed, jobs);
  manifest.stage("generate", "done");

  manifest.stage("save", "running");
  gengap::save_dataset(dataset, out);
  manifest.stage("save", "done");
  std::cout << "wrote " << dataset.mixtures.size() << " mixtures (" << dataset.total_s
            << " s) to " << out.string() << "\n";
  return 0;
}

int cmd_train(const std::filesystem::path& dataset_dir, const std::filesystem::path& out,
              gengap::TrainConfig train) {
  json cfg{{"dataset", dataset_dir.string()},
           {"out", out.string()},
           {"epochs", train.epochs},
           {"learning_rate", train.learning_rate},
           {"dropout", train.dropout_rate},
           {"batch_budget_s", train.batch_budget_s},
           {"n_buckets", train.n_buckets}};
  RunManifest manifest(out.parent_path().empty() ? "." : out.parent_path(), "train", cfg,
                       train.seed);

  manifest.stage("load", "running");
  const gengap::Dataset dataset = gengap::load_dataset(dataset_dir);
  manifest.stage("load", "done");

  manifest.stage("train", "running");
  gengap::FfnnModel model(train);
  model.train(dataset);
  manifest.stage("train", "done");

  model.save(out);
  manifest.stage("save", "done");
  std::cout << "trained on " << dataset.mixtures.size() << " mixtures; first-epoch loss "
            << model.epoch_losses().front() << ", final loss " << model.epoch_losses().back()
            << "\ncheckpoint: " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& model_arg, const std::filesystem::path& dataset_dir,
                 const std::filesystem::path& out, const std::vector<std::string>& metric_args) {
  std::unique_ptr<gengap::ModelInterface> model;
  if (model_arg == "oracle") {
    model = std::make_unique<gengap::OracleIrmModel>();
  } else {
    auto ffnn = std::make_unique<gengap::FfnnModel>();
    ffnn->load(model_arg);
    model = std::move(ffnn);
  }

  std::vector<gengap::MetricSpec> metrics;
  for (const auto& m : metric_args) metrics.push_back(gengap::MetricSpec::parse(m));
  if (metrics.empty()) metrics.push_back({"delta_snr", ""});

  const gengap::Dataset dataset = gengap::load_dataset(dataset_dir);
  std::vector<std::string> unavailable;
  const gengap::ScoreTable table = gengap::evaluate_model(
      *model, dataset, metrics, out.parent_path() / "metric_scratch", &unavailable);
  gengap::write_scores_csv(table, out);
  for (const auto& note : unavailable) std::cerr << "warning: " << note << "\n";
  for (const auto& metric : table.metrics())
    std::cout << metric << " mean: " << table.mean(metric) << "\n";
  std::cout << "scores: " << out.string() << "\n";
  return 0;
}

int cmd_crossval(gengap::RunConfig config) {
  json cfg{{"model", config.model_id},
           {"n", config.n_values},
           {"train_hours", config.train_hours},
           {"test_hours", config.test_hours},
           {"epochs", config.train.epochs},
           {"learning_rate", config.train.learning_rate},
           {"dropout", config.train.dropout_rate},
           {"batch_budget_s", config.train.batch_budget_s},
           {"n_buckets", config.train.n_buckets},
           {"db_root", config.db_root.string()},
           {"out_dir", config.out_dir.string()},
           {"jobs", config.jobs},
           {"resume", config.resume}};
  json mismatches = json::array();
  for (const auto& m : config.mismatches) mismatches.push_back(m.name());
  cfg["mismatches"] = mismatches;
  json metrics = json::array();
  for (const auto& m : config.metrics)
    metrics.push_back(m.command_template.empty() ? m.id : m.id + ":" + m.command_template);
  cfg["metrics"] = metrics;

  RunManifest manifest(config.out_dir, "crossval", cfg, config.master_seed);
  const gengap::Registry registry = gengap::Registry::load(config.db_root);
  const gengap::GapReport report = gengap::run_experiment(
      config, registry,
      [&manifest](const std::string& stage, const std::string& status) {
        manifest.stage(stage, status);
      });
  manifest.stage("report", "done");

  for (const auto& note : report.notes) std::cerr << "note: " << note << "\n";
  for (const auto& row : report.rows)
    std::cout << "N=" << row.n << " " << row.mismatch << " " << row.metric << ": gap "
              << row.gap_percent << " %\n";
  std::cout << "report: " << (config.out_dir / "gap_report.csv").string() << "\n";
  return 0;
}

int cmd_report(const std::filesystem::path& run_dir) {
  const gengap::GapReport report = gengap::read_gap_report_csv(run_dir / "gap_report.csv");
  gengap::write_summary(gengap::aggregate(report), run_dir);
  std::ifstream txt(run_dir / "summary.txt");
  std::cout << txt.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binaural mixture simulation, mask-based enhancement and "
               "generalization-gap evaluation"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  uint64_t seed = default_seed();

  // synth-db
  auto* synth = app.add_subcommand("synth-db", "synthesize hermetic speech/noise/room databases");
  std::filesystem::path synth_out;
  int n_databases = gengap::kDefaultDatabaseCount;
  int speech_items = 24, noise_items = 4, room_items = 12;
  bool force = false;
  synth->add_option("--out", synth_out, "output root directory")->required();
  synth->add_option("--seed", seed, "master seed (default $GENGAP_SEED or 0)");
  synth->add_option("--n-databases", n_databases, "databases per dimension");
  synth->add_option("--speech-items", speech_items, "utterances per speech database");
  synth->add_option("--noise-items", noise_items, "recordings per noise database");
  synth->add_option("--room-items", room_items, "BRIRs per room database");
  synth->add_flag("--force", force, "overwrite existing databases");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "render a mixture dataset from a condition");
  std::filesystem::path sim_db_root, sim_out;
  std::string sim_speech = "1", sim_noise = "1", sim_room = "1", sim_split = "train";
  double sim_hours = 0.01;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  simulate->add_option("--db-root", sim_db_root, "database root (from synth-db)")->required();
  simulate->add_option("--out", sim_out, "output dataset directory")->required();
  simulate->add_option("--speech", sim_speech, "speech database indices, e.g. 1,3");
  simulate->add_option("--noise", sim_noise, "noise database indices");
  simulate->add_option("--room", sim_room, "room database indices");
  simulate->add_option("--split", sim_split, "train or test split side");
  simulate->add_option("--hours", sim_hours, "dataset duration in hours");
  simulate->add_option("--seed", seed, "master seed");
  simulate->add_option("--jobs", jobs, "parallel render workers");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the FFNN mask estimator on a dataset");
  std::filesystem::path train_dataset, train_out;
  gengap::TrainConfig train_cfg;
  train_cfg.epochs = 20;
  train_cmd->add_option("--dataset", train_dataset, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();
  train_cmd->add_option("--epochs", train_cfg.epochs, "training epochs");
  train_cmd->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
  train_cmd->add_option("--dropout", train_cfg.dropout_rate, "dropout rate");
  train_cmd->add_option("--batch-budget", train_cfg.batch_budget_s, "batch budget in seconds");
  train_cmd->add_option("--buckets", train_cfg.n_buckets, "duration buckets");
  train_cmd->add_option("--seed", seed, "master seed");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a model on a dataset");
  std::string eval_model;
  std::filesystem::path eval_dataset, eval_out = "scores.csv";
  std::vector<std::string> eval_metrics;
  evaluate->add_option("--model", eval_model, "checkpoint path or 'oracle'")->required();
  evaluate->add_option("--dataset", eval_dataset, "dataset directory")->required();
  evaluate->add_option("--out", eval_out, "per-mixture scores CSV");
  evaluate->add_option("--metric", eval_metrics,
                       "delta_snr or ext_<name>:<command with {ref} {sig}> (repeatable)");

  // crossval
  auto* crossval = app.add_subcommand("crossval", "run the cross-validated gap experiment");
  std::filesystem::path cv_config_path, cv_db_root, cv_out;
  std::string cv_model;
  std::vector<std::string> cv_mismatches, cv_metrics;
  std::string cv_n;
  double cv_train_hours = -1.0, cv_test_hours = -1.0;
  int cv_epochs = -1, cv_jobs = -1;
  bool cv_resume = false;
  crossval->add_option("--config", cv_config_path, "experiment config JSON");
  crossval->add_option("--db-root", cv_db_root, "database root (overrides config)");
  crossval->add_option("--out", cv_out, "output directory (overrides config)");
  crossval->add_option("--model", cv_model, "ffnn or oracle (overrides config)");
  crossval->add_option("--n", cv_n, "training diversities, e.g. 1,4 (overrides config)");
  crossval->add_option("--mismatch", cv_mismatches,
                       "mismatch spec like speech,noise or 'all' (repeatable, overrides config)");
  crossval->add_option("--metric", cv_metrics, "metric spec (repeatable, overrides config)");
  crossval->add_option("--train-hours", cv_train_hours, "training hours per model");
  crossval->add_option("--test-hours", cv_test_hours, "test hours per fold");
  crossval->add_option("--epochs", cv_epochs, "training epochs");
  crossval->add_option("--seed", seed, "master seed");
  crossval->add_option("--jobs", cv_jobs, "parallel folds");
  crossval->add_flag("--resume", cv_resume, "skip folds with existing results");

  // report
  auto* report = app.add_subcommand("report", "aggregate a finished run into summary tables");
  std::filesystem::path report_run;
  report->add_option("--run", report_run, "crossval output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return cmd_synth_db(synth_out, seed, n_databases, speech_items, noise_items, room_items,
                          force);
    if (simulate->parsed())
      return cmd_simulate(sim_db_root, sim_out, sim_speech, sim_noise, sim_room, sim_split,
                          sim_hours, seed, jobs);
    if (train_cmd->parsed()) {
      train_cfg.seed = seed;
      return cmd_train(train_dataset, train_out, train_cfg);
    }
    if (evaluate->parsed()) return cmd_evaluate(eval_model, eval_dataset, eval_out, eval_metrics);
    if (crossval->parsed()) {
      gengap::RunConfig config;
      if (!cv_config_path.empty()) config = gengap::load_run_config(cv_config_path);
      if (!cv_db_root.empty()) config.db_root = cv_db_root;
      if (!cv_out.empty()) config.out_dir = cv_out;
      if (!cv_model.empty()) config.model_id = cv_model;
      if (!cv_n.empty()) config.n_values = parse_int_list(cv_n);
      if (!cv_mismatches.empty()) {
        config.mismatches.clear();
        for (const auto& m : cv_mismatches) {
          if (m == "all") {
            config.mismatches = gengap::MismatchSpec::all();
            break;
          }
          config.mismatches.push_back(gengap::MismatchSpec::parse(m));
        }
      }
      if (!cv_metrics.empty()) {
        config.metrics.clear();
        for (const auto& m : cv_metrics) config.metrics.push_back(gengap::MetricSpec::parse(m));
      }
      if (cv_train_hours > 0.0) config.train_hours = cv_train_hours;
      if (cv_test_hours > 0.0) config.test_hours = cv_test_hours;
      if (cv_epochs > 0) config.train.epochs = cv_epochs;
      if (crossval->count("--seed") > 0 || config.master_seed == 0) config.master_seed = seed;
      if (cv_jobs > 0) config.jobs = cv_jobs;
      if (cv_resume) config.resume = true;
      if (config.db_root.empty() || config.out_dir.empty())
        throw std::runtime_error("crossval needs --db-root and --out (or a config file)");
      return cmd_crossval(std::move(config));
    }
    if (report->parsed()) return cmd_report(report_run);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
