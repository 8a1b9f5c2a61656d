#ifndef GENGAP_METRICS_HPP
#define GENGAP_METRICS_HPP

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gengap/common.hpp"
#include "gengap/model.hpp"

namespace gengap {

// 10 log10(E_ref / E_residual) against the direct-sound reference. Returns
// +inf when the signal equals the reference, -inf for a zero reference.
double snr_metric(const Signal& reference, const Signal& signal);

using MetricFn = std::function<double(const Signal& reference, const Signal& signal)>;

// metric(ref, enhanced) - metric(ref, unprocessed).
double delta_metric(const MetricFn& metric, const Signal& reference, const Signal& unprocessed,
                    const Signal& enhanced);

// Infinite SNR deltas are reported as +/-99 dB so fold averages stay finite.
double cap_for_report(double value);

// Runs an external metric tool on two WAV files. The command template gets
// {ref} and {sig} substituted; the last float token of stdout is the score.
// Any failure (nonzero exit, no parsable float, timeout) yields nullopt and
// the caller drops the metric instead of aborting the experiment.
class ExternalMetricAdapter {
 public:
  ExternalMetricAdapter(std::string name, std::string command_template, double timeout_s = 30.0);

  const std::string& name() const { return name_; }
  std::optional<double> run(const std::filesystem::path& reference,
                            const std::filesystem::path& signal) const;

 private:
  std::string name_;
  std::string command_template_;
  double timeout_s_;
};

// A metric requested for an evaluation: the native delta_snr or an external
// tool invoked as "ext_name:command template".
struct MetricSpec {
  std::string id;                // "delta_snr" or the external metric name
  std::string command_template;  // empty for native metrics

  static MetricSpec parse(const std::string& text);
};

struct ScoreRow {
  std::string mixture_id;
  std::string metric;
  double value = 0.0;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;

  std::vector<std::string> metrics() const;
  double mean(const std::string& metric) const;
};

void write_scores_csv(const ScoreTable& table, const std::filesystem::path& path);
ScoreTable read_scores_csv(const std::filesystem::path& path);

// Enhances every mixture once and scores the requested improvement metrics
// against the channel-averaged direct-sound reference. External metrics that
// fail are dropped with a note in *unavailable.
ScoreTable evaluate_model(const ModelInterface& model, const Dataset& dataset,
                          const std::vector<MetricSpec>& metrics,
                          const std::filesystem::path& scratch_dir,
                          std::vector<std::string>* unavailable = nullptr);

}  // namespace gengap

#endif  // GENGAP_METRICS_HPP
