#include "gengap/metrics.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "gengap/wav.hpp"

namespace gengap {

double snr_metric(const Signal& reference, const Signal& signal) {
  if (reference.size() != signal.size())
    throw std::invalid_argument("snr_metric: length mismatch");
  double e_ref = 0.0, e_res = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    e_ref += reference[i] * reference[i];
    const double r = signal[i] - reference[i];
    e_res += r * r;
  }
  if (e_res == 0.0) return std::numeric_limits<double>::infinity();
  if (e_ref == 0.0) return -std::numeric_limits<double>::infinity();
  return linear_power_to_db(e_ref / e_res);
}

double delta_metric(const MetricFn& metric, const Signal& reference, const Signal& unprocessed,
                    const Signal& enhanced) {
  return metric(reference, enhanced) - metric(reference, unprocessed);
}

double cap_for_report(double value) { return std::clamp(value, -99.0, 99.0); }

ExternalMetricAdapter::ExternalMetricAdapter(std::string name, std::string command_template,
                                             double timeout_s)
    : name_(std::move(name)), command_template_(std::move(command_template)),
      timeout_s_(timeout_s) {}

namespace {

std::string substitute(std::string text, const std::string& key, const std::string& value) {
  for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos))
    text.replace(pos, key.size(), value), pos += value.size();
  return text;
}

// Runs the command through /bin/sh with a deadline, capturing stdout.
// Returns nullopt on spawn failure, nonzero exit or timeout.
std::optional<std::string> run_with_timeout(const std::string& command, double timeout_s) {
  int pipe_fd[2];
  if (pipe(pipe_fd) != 0) return std::nullopt;
  const pid_t pid = fork();
  if (pid < 0) {
    close(pipe_fd[0]);
    close(pipe_fd[1]);
    return std::nullopt;
  }
  if (pid == 0) {
    dup2(pipe_fd[1], STDOUT_FILENO);
    close(pipe_fd[0]);
    close(pipe_fd[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(pipe_fd[1]);

  std::string output;
  char buf[4096];
  const auto deadline_ms = static_cast<long>(timeout_s * 1000.0);
  long waited_ms = 0;
  bool timed_out = false;
  for (;;) {
    pollfd pfd{pipe_fd[0], POLLIN, 0};
    const int r = poll(&pfd, 1, 100);
    if (r > 0) {
      const ssize_t got = read(pipe_fd[0], buf, sizeof(buf));
      if (got <= 0) break;  // child closed stdout
      output.append(buf, static_cast<std::size_t>(got));
    } else {
      waited_ms += 100;
      if (waited_ms >= deadline_ms) {
        timed_out = true;
        kill(pid, SIGKILL);
        break;
      }
    }
  }
  close(pipe_fd[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  if (timed_out || !WIFEXITED(status) || WEXITSTATUS(status) != 0) return std::nullopt;
  return output;
}

std::optional<double> last_float_token(const std::string& text) {
  std::stringstream ss(text);
  std::string token;
  std::optional<double> value;
  while (ss >> token) {
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used == token.size() && std::isfinite(v)) value = v;
    } catch (...) {
    }
  }
  return value;
}

}  // namespace

std::optional<double> ExternalMetricAdapter::run(const std::filesystem::path& reference,
                                                 const std::filesystem::path& signal) const {
  std::string command = substitute(command_template_, "{ref}", reference.string());
  command = substitute(command, "{sig}", signal.string());
  const auto output = run_with_timeout(command, timeout_s_);
  if (!output) return std::nullopt;
  return last_float_token(*output);
}

MetricSpec MetricSpec::parse(const std::string& text) {
  if (text == "delta_snr") return {"delta_snr", ""};
  const auto colon = text.find(':');
  if (text.rfind("ext_", 0) == 0 && colon != std::string::npos)
    return {text.substr(0, colon), text.substr(colon + 1)};
  throw std::invalid_argument("unknown metric '" + text +
                              "' (use delta_snr or ext_<name>:<command template>)");
}

std::vector<std::string> ScoreTable::metrics() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : rows)
    if (seen.insert(r.metric).second) out.push_back(r.metric);
  return out;
}

double ScoreTable::mean(const std::string& metric) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.metric == metric) {
      sum += r.value;
      ++n;
    }
  if (n == 0) throw std::runtime_error("no scores for metric " + metric);
  return sum / static_cast<double>(n);
}

void write_scores_csv(const ScoreTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out << "mixture_id,metric,value\n";
  char buf[256];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.17g\n", r.mixture_id.c_str(), r.metric.c_str(),
                  r.value);
    out << buf;
  }
}

ScoreTable read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  ScoreTable table;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ScoreRow row;
    std::string value;
    std::getline(ss, row.mixture_id, ',');
    std::getline(ss, row.metric, ',');
    std::getline(ss, value, ',');
    row.value = std::stod(value);
    table.rows.push_back(std::move(row));
  }
  return table;
}

ScoreTable evaluate_model(const ModelInterface& model, const Dataset& dataset,
                          const std::vector<MetricSpec>& metrics,
                          const std::filesystem::path& scratch_dir,
                          std::vector<std::string>* unavailable) {
  ScoreTable table;
  std::set<std::string> dropped;
  const bool needs_scratch =
      std::any_of(metrics.begin(), metrics.end(),
                  [](const MetricSpec& m) { return !m.command_template.empty(); });
  if (needs_scratch) std::filesystem::create_directories(scratch_dir);

  for (std::size_t i = 0; i < dataset.mixtures.size(); ++i) {
    const Mixture& mix = dataset.mixtures[i];
    const Signal reference = channel_average(mix.speech_direct);
    const Signal unprocessed = channel_average(mix.mixture);
    const Signal enhanced = model.enhance(mix);
    char id[32];
    std::snprintf(id, sizeof(id), "%06zu", i);

    std::filesystem::path ref_path, unp_path, enh_path;
    if (needs_scratch) {
      ref_path = scratch_dir / "ref.wav";
      unp_path = scratch_dir / "unprocessed.wav";
      enh_path = scratch_dir / "enhanced.wav";
      write_wav_mono(ref_path, reference);
      write_wav_mono(unp_path, unprocessed);
      write_wav_mono(enh_path, enhanced);
    }

    for (const auto& spec : metrics) {
      if (dropped.count(spec.id)) continue;
      if (spec.command_template.empty()) {
        const double v = delta_metric(snr_metric, reference, unprocessed, enhanced);
        table.rows.push_back({id, spec.id, cap_for_report(v)});
      } else {
        ExternalMetricAdapter adapter(spec.id, spec.command_template);
        const auto before = adapter.run(ref_path, unp_path);
        const auto after = adapter.run(ref_path, enh_path);
        if (!before || !after) {
          dropped.insert(spec.id);
          if (unavailable)
            unavailable->push_back("metric " + spec.id + " unavailable; continuing without it");
          continue;
        }
        table.rows.push_back({id, spec.id, *after - *before});
      }
    }
  }
  // A metric that failed mid-run would leave a partial column; drop it fully.
  if (!dropped.empty())
    std::erase_if(table.rows, [&](const ScoreRow& r) { return dropped.count(r.metric) > 0; });
  return table;
}

}  // namespace gengap
