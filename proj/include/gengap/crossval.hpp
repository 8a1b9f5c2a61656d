#ifndef GENGAP_CROSSVAL_HPP
#define GENGAP_CROSSVAL_HPP

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "gengap/metrics.hpp"
#include "gengap/model.hpp"
#include "gengap/registry.hpp"
#include "gengap/scene.hpp"

namespace gengap {

// Which acoustic dimensions differ between training and testing.
struct MismatchSpec {
  std::set<Kind> dims;

  int degree() const { return static_cast<int>(dims.size()); }
  std::string name() const;                            // e.g. "speech+noise"
  static MismatchSpec parse(const std::string& text);  // "speech,noise" or "speech+noise"
  static std::vector<MismatchSpec> all();              // the 7 nonempty subsets
};

// One cross-validation round. Training uses index {i} (N=1) or its complement
// (N=4) on every dimension; testing uses the complement of the training
// indices along mismatched dimensions and the training indices elsewhere.
// The reference model trains on the test indices (train split side).
struct FoldPlan {
  int fold = 1;  // 1..5
  int n = 1;
  MismatchSpec mismatch;
  std::vector<int> train_indices;
  std::map<Kind, std::vector<int>> test_indices;
};

std::vector<FoldPlan> plan_folds(int n, const MismatchSpec& mismatch,
                                 int m = kDefaultDatabaseCount);

// 100 * mean over folds of (E_i - E_ref_i) / E_ref_i. Throws on a zero
// reference score.
double generalization_gap(const std::vector<double>& e, const std::vector<double>& e_ref);

struct RunConfig {
  std::string model_id = "ffnn";
  std::vector<int> n_values = {1, 4};
  std::vector<MismatchSpec> mismatches = MismatchSpec::all();
  double train_hours = 0.02;
  double test_hours = 0.005;
  TrainConfig train;
  std::vector<MetricSpec> metrics = {{"delta_snr", ""}};
  uint64_t master_seed = 0;
  std::filesystem::path db_root;
  std::filesystem::path out_dir;
  int jobs = std::max(1u, std::thread::hardware_concurrency());
  bool resume = false;
  // When set, folds with a zero reference score are excluded with a warning
  // instead of failing the run.
  bool skip_zero_reference_folds = false;
};

RunConfig load_run_config(const std::filesystem::path& json_path);

struct FoldOutcome {
  FoldPlan plan;
  std::map<std::string, double> eval_mean;  // per metric, dataset-mean scores
  std::map<std::string, double> ref_mean;
  bool resumed = false;
};

// Trains the evaluated and reference models on equal hours, evaluates both on
// the same test dataset and audits train/test disjointness. Artifacts go to
// <out_dir>/n<N>_<mismatch>/fold_<i>/.
FoldOutcome run_fold(const FoldPlan& plan, const RunConfig& config, const Registry& registry);

// Consumed source material of one dataset, for the disjointness audit.
struct ConsumedItems {
  std::set<std::pair<int, std::string>> speech;  // (database index, item id)
  std::set<std::pair<int, std::string>> brirs;
  std::map<std::pair<int, std::string>, std::vector<std::pair<double, double>>> noise_spans;
};

ConsumedItems collect_consumed(const Dataset& dataset);

// Returns a description of the first overlap between training-side and
// test-side material, or nullopt when fully disjoint.
std::optional<std::string> audit_overlap(const ConsumedItems& train, const ConsumedItems& test);

struct GapRow {
  int n = 1;
  std::string mismatch;
  std::string metric;
  std::vector<double> e;      // per fold
  std::vector<double> e_ref;  // per fold
  double gap_percent = 0.0;
  double gap_std_percent = 0.0;
};

struct GapReport {
  std::vector<GapRow> rows;
  std::vector<std::string> notes;
};

// Runs every (N, mismatch) combination of the config and writes
// gap_report.csv / gap_report.txt plus the aggregated summary under out_dir.
// stage_hook, when set, is told about each combination ("n1_speech",
// "running"/"done") so callers can track progress.
using StageHook = std::function<void(const std::string& stage, const std::string& status)>;
GapReport run_experiment(const RunConfig& config, const Registry& registry,
                         const StageHook& stage_hook = {});

void write_gap_report(const GapReport& report, const std::filesystem::path& out_dir);
GapReport read_gap_report_csv(const std::filesystem::path& csv_path);

// Mean scores and gaps per mismatch degree, shaped like the summary tables.
struct SummaryRow {
  int n = 1;
  int degree = 1;  // 1..3
  std::string metric;
  double mean_eval = 0.0;
  double mean_ref = 0.0;
  double mean_gap_percent = 0.0;
};

std::vector<SummaryRow> aggregate(const GapReport& report);
void write_summary(const std::vector<SummaryRow>& summary, const std::filesystem::path& out_dir);

}  // namespace gengap

#endif  // GENGAP_CROSSVAL_HPP
