#include "gengap/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gengap/rng.hpp"

namespace gengap {

std::string MismatchSpec::name() const {
  if (dims.empty()) return "none";
  std::string out;
  for (Kind d : {Kind::speech, Kind::noise, Kind::room}) {
    if (!dims.count(d)) continue;
    if (!out.empty()) out += "+";
    out += to_string(d);
  }
  return out;
}

MismatchSpec MismatchSpec::parse(const std::string& text) {
  MismatchSpec spec;
  std::string token;
  for (char c : text + ",") {
    if (c == ',' || c == '+') {
      if (!token.empty()) spec.dims.insert(kind_from_string(token));
      token.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      token += c;
    }
  }
  if (spec.dims.empty()) throw std::invalid_argument("mismatch spec is empty: " + text);
  return spec;
}

std::vector<MismatchSpec> MismatchSpec::all() {
  std::vector<MismatchSpec> out;
  const Kind kinds[] = {Kind::speech, Kind::noise, Kind::room};
  for (int bits = 1; bits < 8; ++bits) {
    MismatchSpec spec;
    for (int d = 0; d < 3; ++d)
      if (bits & (1 << d)) spec.dims.insert(kinds[d]);
    out.push_back(std::move(spec));
  }
  std::sort(out.begin(), out.end(), [](const MismatchSpec& a, const MismatchSpec& b) {
    return a.degree() != b.degree() ? a.degree() < b.degree() : a.name() < b.name();
  });
  return out;
}

std::vector<FoldPlan> plan_folds(int n, const MismatchSpec& mismatch, int m) {
  if (n != 1 && n != m - 1)
    throw std::invalid_argument("plan_folds: N must be 1 or " + std::to_string(m - 1));
  if (mismatch.dims.empty()) throw std::invalid_argument("plan_folds: empty mismatch spec");

  std::vector<FoldPlan> plans;
  for (int i = 1; i <= m; ++i) {
    FoldPlan plan;
    plan.fold = i;
    plan.n = n;
    plan.mismatch = mismatch;
    std::vector<int> complement;
    for (int j = 1; j <= m; ++j)
      if (j != i) complement.push_back(j);
    plan.train_indices = n == 1 ? std::vector<int>{i} : complement;
    const std::vector<int> test_mismatched = n == 1 ? complement : std::vector<int>{i};
    for (Kind d : {Kind::speech, Kind::noise, Kind::room})
      plan.test_indices[d] = mismatch.dims.count(d) ? test_mismatched : plan.train_indices;
    plans.push_back(std::move(plan));
  }
  return plans;
}

double generalization_gap(const std::vector<double>& e, const std::vector<double>& e_ref) {
  if (e.size() != e_ref.size() || e.empty())
    throw std::invalid_argument("generalization_gap: need equal-length nonempty score vectors");
  double sum = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e_ref[i] == 0.0)
      throw std::runtime_error("undefined gap: reference score is zero in fold " +
                               std::to_string(i + 1));
    sum += (e[i] - e_ref[i]) / e_ref[i];
  }
  return 100.0 * (sum / static_cast<double>(e.size()));
}

RunConfig load_run_config(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open " + json_path.string());
  nlohmann::json j;
  in >> j;

  RunConfig cfg;
  cfg.model_id = j.value("model", cfg.model_id);
  if (j.contains("n")) {
    cfg.n_values.clear();
    for (const auto& v : j.at("n")) cfg.n_values.push_back(v.get<int>());
  }
  if (j.contains("mismatches")) {
    cfg.mismatches.clear();
    for (const auto& v : j.at("mismatches")) {
      const auto text = v.get<std::string>();
      if (text == "all") {
        cfg.mismatches = MismatchSpec::all();
        break;
      }
      cfg.mismatches.push_back(MismatchSpec::parse(text));
    }
  }
  cfg.train_hours = j.value("train_hours", cfg.train_hours);
  cfg.test_hours = j.value("test_hours", cfg.test_hours);
  cfg.train.epochs = j.value("epochs", cfg.train.epochs);
  cfg.train.learning_rate = j.value("learning_rate", cfg.train.learning_rate);
  cfg.train.dropout_rate = j.value("dropout", cfg.train.dropout_rate);
  cfg.train.batch_budget_s = j.value("batch_budget_s", cfg.train.batch_budget_s);
  cfg.train.n_buckets = j.value("n_buckets", cfg.train.n_buckets);
  cfg.master_seed = j.value("seed", cfg.master_seed);
  if (j.contains("metrics")) {
    cfg.metrics.clear();
    for (const auto& v : j.at("metrics")) cfg.metrics.push_back(MetricSpec::parse(v.get<std::string>()));
  }
  if (j.contains("db_root")) cfg.db_root = j.at("db_root").get<std::string>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.resume = j.value("resume", cfg.resume);
  cfg.skip_zero_reference_folds =
      j.value("skip_zero_reference_folds", cfg.skip_zero_reference_folds);
  return cfg;
}

ConsumedItems collect_consumed(const Dataset& dataset) {
  ConsumedItems out;
  for (const auto& m : dataset.mixtures) {
    out.speech.insert({m.spec.speech_db.index, m.spec.speech_item});
    out.brirs.insert({m.spec.room_db.index, m.spec.target_brir});
    for (const auto& ns : m.spec.noises) out.brirs.insert({m.spec.room_db.index, ns.brir_item});
    for (const auto& span : m.noise_spans)
      out.noise_spans[{span.db.index, span.item_id}].push_back({span.begin_s, span.end_s});
  }
  return out;
}

std::optional<std::string> audit_overlap(const ConsumedItems& train, const ConsumedItems& test) {
  for (const auto& item : train.speech)
    if (test.speech.count(item))
      return "speech utterance used on both sides: speech_" + std::to_string(item.first) + "/" +
             item.second;
  for (const auto& item : train.brirs)
    if (test.brirs.count(item))
      return "BRIR used on both sides: room_" + std::to_string(item.first) + "/" + item.second;
  for (const auto& [key, spans] : train.noise_spans) {
    auto it = test.noise_spans.find(key);
    if (it == test.noise_spans.end()) continue;
    for (const auto& a : spans)
      for (const auto& b : it->second)
        if (a.first < b.second && b.first < a.second)
          return "noise intervals overlap in noise_" + std::to_string(key.first) + "/" +
                 key.second;
  }
  return std::nullopt;
}

namespace {

Condition make_condition(const std::map<Kind, std::vector<int>>& indices, Side side) {
  Condition cond;
  cond.split_side = side;
  for (int j : indices.at(Kind::speech)) cond.speech_dbs.push_back({Kind::speech, j});
  for (int j : indices.at(Kind::noise)) cond.noise_dbs.push_back({Kind::noise, j});
  for (int j : indices.at(Kind::room)) cond.room_dbs.push_back({Kind::room, j});
  return cond;
}

std::filesystem::path fold_dir(const RunConfig& config, const FoldPlan& plan) {
  return config.out_dir /
         ("n" + std::to_string(plan.n) + "_" + plan.mismatch.name()) /
         ("fold_" + std::to_string(plan.fold));
}

// Combined per-mixture scores of both models: model,mixture_id,metric,value.
void write_fold_scores(const std::filesystem::path& path, const ScoreTable& eval_scores,
                       const ScoreTable& ref_scores) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out << "model,mixture_id,metric,value\n";
  char buf[256];
  for (const auto* table : {&eval_scores, &ref_scores}) {
    const char* model = table == &eval_scores ? "eval" : "ref";
    for (const auto& r : table->rows) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g\n", model, r.mixture_id.c_str(),
                    r.metric.c_str(), r.value);
      out << buf;
    }
  }
}

bool read_fold_scores(const std::filesystem::path& path, FoldOutcome* outcome) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::pair<double, std::size_t>> eval_acc, ref_acc;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string model, mixture, metric, value;
    std::getline(ss, model, ',');
    std::getline(ss, mixture, ',');
    std::getline(ss, metric, ',');
    std::getline(ss, value, ',');
    auto& acc = model == "eval" ? eval_acc : ref_acc;
    acc[metric].first += std::stod(value);
    acc[metric].second += 1;
  }
  if (eval_acc.empty() || ref_acc.empty()) return false;
  for (const auto& [metric, acc] : eval_acc)
    outcome->eval_mean[metric] = acc.first / static_cast<double>(acc.second);
  for (const auto& [metric, acc] : ref_acc)
    outcome->ref_mean[metric] = acc.first / static_cast<double>(acc.second);
  return true;
}

std::map<std::string, double> dataset_means(const ScoreTable& table) {
  std::map<std::string, double> out;
  for (const auto& metric : table.metrics()) out[metric] = table.mean(metric);
  return out;
}

}  // namespace

FoldOutcome run_fold(const FoldPlan& plan, const RunConfig& config, const Registry& registry) {
  FoldOutcome outcome;
  outcome.plan = plan;

  const auto dir = fold_dir(config, plan);
  const auto scores_path = dir / "test_scores.csv";
  if (config.resume && std::filesystem::exists(scores_path) &&
      read_fold_scores(scores_path, &outcome)) {
    outcome.resumed = true;
    return outcome;
  }
  std::filesystem::create_directories(dir / "eval");
  std::filesystem::create_directories(dir / "ref");

  const uint64_t scope =
      derive_seed(config.master_seed, std::string("n"), uint64_t(plan.n), plan.mismatch.name(),
                  std::string("fold"), uint64_t(plan.fold));

  std::map<Kind, std::vector<int>> train_indices;
  for (Kind d : {Kind::speech, Kind::noise, Kind::room}) train_indices[d] = plan.train_indices;
  const Condition cond_train = make_condition(train_indices, Side::train);
  const Condition cond_ref = make_condition(plan.test_indices, Side::train);
  const Condition cond_test = make_condition(plan.test_indices, Side::test);

  // Equal training hours for both models; the reference model never sees
  // test-side items, only the test databases' train split.
  const Dataset train_ds = generate_dataset(cond_train, registry, config.train_hours,
                                            derive_seed(scope, std::string("data-eval")));
  const Dataset ref_ds = generate_dataset(cond_ref, registry, config.train_hours,
                                          derive_seed(scope, std::string("data-ref")));
  const Dataset test_ds = generate_dataset(cond_test, registry, config.test_hours,
                                           derive_seed(scope, std::string("data-test")));

  const ConsumedItems test_used = collect_consumed(test_ds);
  for (const auto* train_set : {&train_ds, &ref_ds}) {
    const auto violation = audit_overlap(collect_consumed(*train_set), test_used);
    if (violation)
      throw std::runtime_error("disjointness audit failed in " + dir.string() + ": " + *violation);
  }
  {
    std::ofstream audit(dir / "audit.txt", std::ios::trunc);
    audit << "train mixtures: " << train_ds.mixtures.size()
          << "\nref mixtures: " << ref_ds.mixtures.size()
          << "\ntest mixtures: " << test_ds.mixtures.size()
          << "\ndisjointness: ok\n";
  }

  TrainConfig eval_cfg = config.train;
  eval_cfg.seed = derive_seed(scope, std::string("eval"));
  auto eval_model = make_model(config.model_id, eval_cfg);
  eval_model->train(train_ds);
  eval_model->save(dir / "eval" / "checkpoint");

  TrainConfig ref_cfg = config.train;
  ref_cfg.seed = derive_seed(scope, std::string("ref"));
  auto ref_model = make_model(config.model_id, ref_cfg);
  ref_model->train(ref_ds);
  ref_model->save(dir / "ref" / "checkpoint");

  const ScoreTable eval_scores =
      evaluate_model(*eval_model, test_ds, config.metrics, dir / "scratch");
  const ScoreTable ref_scores =
      evaluate_model(*ref_model, test_ds, config.metrics, dir / "scratch");
  write_fold_scores(scores_path, eval_scores, ref_scores);

  outcome.eval_mean = dataset_means(eval_scores);
  outcome.ref_mean = dataset_means(ref_scores);
  return outcome;
}

GapReport run_experiment(const RunConfig& config, const Registry& registry,
                         const StageHook& stage_hook) {
  GapReport report;
  std::filesystem::create_directories(config.out_dir);

  for (int n : config.n_values) {
    for (const auto& mismatch : config.mismatches) {
      const std::string stage = "n" + std::to_string(n) + "_" + mismatch.name();
      if (stage_hook) stage_hook(stage, "running");
      const auto plans = plan_folds(n, mismatch);
      std::vector<FoldOutcome> outcomes(plans.size());

      const int jobs = std::max(1, std::min<int>(config.jobs, plans.size()));
      if (jobs == 1) {
        for (std::size_t i = 0; i < plans.size(); ++i)
          outcomes[i] = run_fold(plans[i], config, registry);
      } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(jobs);
        std::vector<std::thread> workers;
        for (int w = 0; w < jobs; ++w)
          workers.emplace_back([&, w] {
            try {
              for (std::size_t i = next.fetch_add(1); i < plans.size(); i = next.fetch_add(1))
                outcomes[i] = run_fold(plans[i], config, registry);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        for (auto& t : workers) t.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      }

      for (const auto& spec : config.metrics) {
        // External metrics may have been dropped; require full coverage.
        const bool complete =
            std::all_of(outcomes.begin(), outcomes.end(), [&](const FoldOutcome& o) {
              return o.eval_mean.count(spec.id) && o.ref_mean.count(spec.id);
            });
        if (!complete) {
          report.notes.push_back("metric " + spec.id + " incomplete for n=" + std::to_string(n) +
                                 " " + mismatch.name() + "; skipped");
          continue;
        }

        GapRow row;
        row.n = n;
        row.mismatch = mismatch.name();
        row.metric = spec.id;
        for (const auto& o : outcomes) {
          row.e.push_back(o.eval_mean.at(spec.id));
          row.e_ref.push_back(o.ref_mean.at(spec.id));
        }

        std::vector<double> e = row.e, e_ref = row.e_ref;
        if (config.skip_zero_reference_folds) {
          std::vector<double> fe, fr;
          for (std::size_t i = 0; i < e.size(); ++i) {
            if (e_ref[i] == 0.0) {
              report.notes.push_back("fold " + std::to_string(i + 1) + " of n=" +
                                     std::to_string(n) + " " + mismatch.name() +
                                     " excluded: zero reference score");
              continue;
            }
            fe.push_back(e[i]);
            fr.push_back(e_ref[i]);
          }
          e = std::move(fe);
          e_ref = std::move(fr);
        }
        row.gap_percent = generalization_gap(e, e_ref);
        double var = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) {
          const double r = 100.0 * (e[i] - e_ref[i]) / e_ref[i];
          var += (r - row.gap_percent) * (r - row.gap_percent);
        }
        row.gap_std_percent = e.size() > 1 ? std::sqrt(var / static_cast<double>(e.size() - 1)) : 0.0;
        report.rows.push_back(std::move(row));
      }
      if (stage_hook) stage_hook(stage, "done");
    }
  }

  write_gap_report(report, config.out_dir);
  write_summary(aggregate(report), config.out_dir);
  return report;
}

void write_gap_report(const GapReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "gap_report.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot create gap_report.csv");
    csv << "n,mismatch,metric";
    for (int i = 1; i <= 5; ++i) csv << ",e" << i;
    for (int i = 1; i <= 5; ++i) csv << ",eref" << i;
    csv << ",gap_percent,gap_std_percent\n";
    char buf[64];
    for (const auto& row : report.rows) {
      csv << row.n << "," << row.mismatch << "," << row.metric;
      for (std::size_t i = 0; i < 5; ++i) {
        std::snprintf(buf, sizeof(buf), ",%.17g", i < row.e.size() ? row.e[i] : 0.0);
        csv << buf;
      }
      for (std::size_t i = 0; i < 5; ++i) {
        std::snprintf(buf, sizeof(buf), ",%.17g", i < row.e_ref.size() ? row.e_ref[i] : 0.0);
        csv << buf;
      }
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", row.gap_percent, row.gap_std_percent);
      csv << buf;
    }
  }
  {
    std::ofstream txt(out_dir / "gap_report.txt", std::ios::trunc);
    char buf[256];
    txt << "generalization gap report\n";
    txt << "-------------------------\n";
    for (const auto& row : report.rows) {
      std::snprintf(buf, sizeof(buf), "N=%d  %-18s %-10s gap %+7.1f %%  (std %5.1f)\n", row.n,
                    row.mismatch.c_str(), row.metric.c_str(), row.gap_percent,
                    row.gap_std_percent);
      txt << buf;
      txt << "      folds eval:";
      for (double v : row.e) {
        std::snprintf(buf, sizeof(buf), " %8.3f", v);
        txt << buf;
      }
      txt << "\n      folds ref: ";
      for (double v : row.e_ref) {
        std::snprintf(buf, sizeof(buf), " %8.3f", v);
        txt << buf;
      }
      txt << "\n";
    }
    for (const auto& note : report.notes) txt << "note: " << note << "\n";
  }
}

GapReport read_gap_report_csv(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open " + csv_path.string());
  GapReport report;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() < 15) continue;
    GapRow row;
    row.n = std::stoi(f[0]);
    row.mismatch = f[1];
    row.metric = f[2];
    for (int i = 0; i < 5; ++i) row.e.push_back(std::stod(f[3 + i]));
    for (int i = 0; i < 5; ++i) row.e_ref.push_back(std::stod(f[8 + i]));
    row.gap_percent = std::stod(f[13]);
    row.gap_std_percent = std::stod(f[14]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<SummaryRow> aggregate(const GapReport& report) {
  // Key: (n, degree, metric) -> accumulated means across mismatch specs.
  std::map<std::tuple<int, int, std::string>, std::vector<const GapRow*>> groups;
  for (const auto& row : report.rows) {
    const int degree = MismatchSpec::parse(row.mismatch).degree();
    groups[{row.n, degree, row.metric}].push_back(&row);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, rows] : groups) {
    SummaryRow s;
    s.n = std::get<0>(key);
    s.degree = std::get<1>(key);
    s.metric = std::get<2>(key);
    double eval_sum = 0.0, ref_sum = 0.0, gap_sum = 0.0;
    for (const GapRow* row : rows) {
      double e_mean = 0.0, r_mean = 0.0;
      for (double v : row->e) e_mean += v;
      for (double v : row->e_ref) r_mean += v;
      eval_sum += e_mean / static_cast<double>(row->e.size());
      ref_sum += r_mean / static_cast<double>(row->e_ref.size());
      gap_sum += row->gap_percent;
    }
    const auto k = static_cast<double>(rows.size());
    s.mean_eval = eval_sum / k;
    s.mean_ref = ref_sum / k;
    s.mean_gap_percent = gap_sum / k;
    out.push_back(std::move(s));
  }
  return out;
}

void write_summary(const std::vector<SummaryRow>& summary, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "summary.csv", std::ios::trunc);
    csv << "n,mismatch_degree,metric,mean_eval,mean_ref,mean_gap_percent\n";
    char buf[160];
    for (const auto& s : summary) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%s,%.17g,%.17g,%.17g\n", s.n, s.degree,
                    s.metric.c_str(), s.mean_eval, s.mean_ref, s.mean_gap_percent);
      csv << buf;
    }
  }
  {
    std::ofstream txt(out_dir / "summary.txt", std::ios::trunc);
    const char* degree_names[] = {"", "Single mism.", "Double mism.", "Triple mism."};
    char buf[160];
    txt << "scores and gaps by mismatch degree (averaged across dimensions and folds)\n";
    int last_n = -1;
    for (const auto& s : summary) {
      if (s.n != last_n) {
        txt << "\nN=" << s.n << "\n";
        std::snprintf(buf, sizeof(buf), "%-14s %-10s %10s %10s %10s\n", "mismatch", "metric",
                      "eval", "ref", "gap %");
        txt << buf;
        last_n = s.n;
      }
      std::snprintf(buf, sizeof(buf), "%-14s %-10s %10.3f %10.3f %+10.1f\n",
                    degree_names[s.degree], s.metric.c_str(), s.mean_eval, s.mean_ref,
                    s.mean_gap_percent);
      txt << buf;
    }
  }
}

}  // namespace gengap
