#include "gengap/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "gengap/rng.hpp"

namespace gengap {

std::size_t FfnnParams::count() const {
  return static_cast<std::size_t>(w1.size()) + w2.size() + w3.size() + b1.size() + b2.size() +
         b3.size();
}

namespace {

Eigen::MatrixXd glorot_uniform(Rng& rng, int rows, int cols) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-limit, limit);
  return w;
}

Eigen::MatrixXd dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
  const double keep_scale = 1.0 / (1.0 - rate);
  Eigen::MatrixXd mask(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      mask(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace

FfnnParams init_ffnn(uint64_t seed, const FfnnShape& shape) {
  Rng rng(seed);
  FfnnParams p;
  p.shape = shape;
  p.w1 = glorot_uniform(rng, shape.hidden1, shape.in);
  p.w2 = glorot_uniform(rng, shape.hidden2, shape.hidden1);
  p.w3 = glorot_uniform(rng, shape.out, shape.hidden2);
  p.b1 = Eigen::VectorXd::Zero(shape.hidden1);
  p.b2 = Eigen::VectorXd::Zero(shape.hidden2);
  p.b3 = Eigen::VectorXd::Zero(shape.out);
  return p;
}

Eigen::MatrixXd ffnn_forward(const FfnnParams& params, const Eigen::MatrixXd& input,
                             const DropoutPlan& dropout, ForwardCache* cache) {
  if (input.rows() != params.shape.in)
    throw std::invalid_argument("ffnn_forward: input dim " + std::to_string(input.rows()) +
                                ", expected " + std::to_string(params.shape.in));
  const Eigen::Index n = input.cols();

  Eigen::MatrixXd mask1, mask2;
  switch (dropout.mode) {
    case DropoutPlan::Mode::off:
      break;
    case DropoutPlan::Mode::seeded: {
      Rng rng(dropout.seed);
      mask1 = dropout_mask(rng, params.shape.hidden1, n, dropout.rate);
      mask2 = dropout_mask(rng, params.shape.hidden2, n, dropout.rate);
      break;
    }
    case DropoutPlan::Mode::fixed:
      mask1 = dropout.fixed1;
      mask2 = dropout.fixed2;
      break;
  }

  Eigen::MatrixXd z1 = (params.w1 * input).colwise() + params.b1;
  Eigen::MatrixXd h1 = z1.cwiseMax(0.0);
  if (mask1.size() > 0) h1 = h1.cwiseProduct(mask1);

  Eigen::MatrixXd z2 = (params.w2 * h1).colwise() + params.b2;
  Eigen::MatrixXd h2 = z2.cwiseMax(0.0);
  if (mask2.size() > 0) h2 = h2.cwiseProduct(mask2);

  Eigen::MatrixXd z3 = (params.w3 * h2).colwise() + params.b3;
  Eigen::MatrixXd y = (1.0 + (-z3.array()).exp()).inverse().matrix();

  if (cache) {
    cache->z1 = std::move(z1);
    cache->h1 = std::move(h1);
    cache->z2 = std::move(z2);
    cache->h2 = std::move(h2);
    cache->y = y;
    cache->mask1 = std::move(mask1);
    cache->mask2 = std::move(mask2);
  }
  return y;
}

double ffnn_loss_and_grads(const FfnnParams& params, const Eigen::MatrixXd& input,
                           const Eigen::MatrixXd& target, const DropoutPlan& dropout,
                           FfnnGrads* grads) {
  if (target.rows() != params.shape.out || target.cols() != input.cols())
    throw std::invalid_argument("ffnn_loss_and_grads: target shape mismatch");

  ForwardCache cache;
  const Eigen::MatrixXd y = ffnn_forward(params, input, dropout, &cache);
  const double denom = static_cast<double>(y.size());
  const Eigen::MatrixXd diff = y - target;
  const double loss = diff.squaredNorm() / denom;
  if (!grads) return loss;

  // dL/dz3 through the logistic.
  Eigen::MatrixXd dz3 =
      (2.0 / denom) * diff.cwiseProduct(y.cwiseProduct(Eigen::MatrixXd::Ones(y.rows(), y.cols()) - y));
  grads->w3 = dz3 * cache.h2.transpose();
  grads->b3 = dz3.rowwise().sum();

  Eigen::MatrixXd dh2 = params.w3.transpose() * dz3;
  if (cache.mask2.size() > 0) dh2 = dh2.cwiseProduct(cache.mask2);
  Eigen::MatrixXd dz2 = dh2.cwiseProduct((cache.z2.array() > 0.0).cast<double>().matrix());
  grads->w2 = dz2 * cache.h1.transpose();
  grads->b2 = dz2.rowwise().sum();

  Eigen::MatrixXd dh1 = params.w2.transpose() * dz2;
  if (cache.mask1.size() > 0) dh1 = dh1.cwiseProduct(cache.mask1);
  Eigen::MatrixXd dz1 = dh1.cwiseProduct((cache.z1.array() > 0.0).cast<double>().matrix());
  grads->w1 = dz1 * input.transpose();
  grads->b1 = dz1.rowwise().sum();
  return loss;
}

namespace {

void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                 Eigen::MatrixXd& m, Eigen::MatrixXd& v, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2) {
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v.array().matrix() + (1.0 - beta2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + eps);
}

void ensure_like(Eigen::MatrixXd& m, const Eigen::MatrixXd& ref) {
  if (m.rows() != ref.rows() || m.cols() != ref.cols()) m = Eigen::MatrixXd::Zero(ref.rows(), ref.cols());
}

}  // namespace

void adam_step(FfnnParams& params, const FfnnGrads& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  auto& m = state.m;
  auto& v = state.v;
  ensure_like(m.w1, grads.w1);
  ensure_like(m.w2, grads.w2);
  ensure_like(m.w3, grads.w3);
  ensure_like(v.w1, grads.w1);
  ensure_like(v.w2, grads.w2);
  ensure_like(v.w3, grads.w3);
  if (m.b1.size() != grads.b1.size()) m.b1 = Eigen::VectorXd::Zero(grads.b1.size());
  if (m.b2.size() != grads.b2.size()) m.b2 = Eigen::VectorXd::Zero(grads.b2.size());
  if (m.b3.size() != grads.b3.size()) m.b3 = Eigen::VectorXd::Zero(grads.b3.size());
  if (v.b1.size() != grads.b1.size()) v.b1 = Eigen::VectorXd::Zero(grads.b1.size());
  if (v.b2.size() != grads.b2.size()) v.b2 = Eigen::VectorXd::Zero(grads.b2.size());
  if (v.b3.size() != grads.b3.size()) v.b3 = Eigen::VectorXd::Zero(grads.b3.size());

  ++state.step;
  const double bias1 = 1.0 - std::pow(beta1, state.step);
  const double bias2 = 1.0 - std::pow(beta2, state.step);
  adam_update(params.w1, grads.w1, m.w1, v.w1, lr, beta1, beta2, eps, bias1, bias2);
  adam_update(params.w2, grads.w2, m.w2, v.w2, lr, beta1, beta2, eps, bias1, bias2);
  adam_update(params.w3, grads.w3, m.w3, v.w3, lr, beta1, beta2, eps, bias1, bias2);

  auto vec_update = [&](Eigen::VectorXd& p, const Eigen::VectorXd& g, Eigen::VectorXd& mm,
                        Eigen::VectorXd& vv) {
    mm = beta1 * mm + (1.0 - beta1) * g;
    vv = beta2 * vv.array().matrix() + (1.0 - beta2) * g.cwiseProduct(g);
    p.array() -= lr * (mm.array() / bias1) / ((vv.array() / bias2).sqrt() + eps);
  };
  vec_update(params.b1, grads.b1, m.b1, v.b1);
  vec_update(params.b2, grads.b2, m.b2, v.b2);
  vec_update(params.b3, grads.b3, m.b3, v.b3);
}

NormStats compute_norm_stats(const std::vector<Eigen::MatrixXd>& feature_sets) {
  if (feature_sets.empty()) throw std::invalid_argument("compute_norm_stats: no features");
  const Eigen::Index dim = feature_sets.front().rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  std::size_t n = 0;
  for (const auto& f : feature_sets) {
    if (f.rows() != dim) throw std::invalid_argument("compute_norm_stats: dim mismatch");
    sum += f.rowwise().sum();
    n += static_cast<std::size_t>(f.cols());
  }
  if (n == 0) throw std::invalid_argument("compute_norm_stats: no frames");

  NormStats stats;
  stats.mean = sum / static_cast<double>(n);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(dim);
  for (const auto& f : feature_sets)
    sq += (f.colwise() - stats.mean).cwiseAbs2().rowwise().sum();
  stats.std = (sq / static_cast<double>(n)).cwiseSqrt().cwiseMax(1e-8);
  return stats;
}

void normalize_features(Eigen::MatrixXd& features, const NormStats& stats) {
  if (features.rows() != stats.mean.size())
    throw std::invalid_argument("normalize_features: dim mismatch");
  features = (features.colwise() - stats.mean).array().colwise() / stats.std.array();
}

std::vector<Batch> bucket_batches(const std::vector<double>& durations_s, double budget_s,
                                  int n_buckets, uint64_t seed,
                                  std::vector<std::string>* warnings) {
  const std::size_t n = durations_s.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return durations_s[a] != durations_s[b] ? durations_s[a] < durations_s[b] : a < b;
  });

  Rng rng(seed);
  auto shuffle = [&rng](auto& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };

  std::vector<Batch> batches;
  const int k = std::max(1, n_buckets);
  for (int b = 0; b < k; ++b) {
    const std::size_t lo = b * n / k;
    const std::size_t hi = (b + 1) * n / k;
    if (lo >= hi) continue;
    std::vector<std::size_t> bucket(order.begin() + lo, order.begin() + hi);
    shuffle(bucket);

    Batch current;
    for (std::size_t idx : bucket) {
      const double d = durations_s[idx];
      if (d > budget_s) {
        if (warnings)
          warnings->push_back("item " + std::to_string(idx) + " (" + std::to_string(d) +
                              " s) exceeds the batch budget; own batch");
        if (!current.items.empty()) {
          batches.push_back(std::move(current));
          current = Batch{};
        }
        batches.push_back(Batch{{idx}, d});
        continue;
      }
      if (current.total_s + d > budget_s && !current.items.empty()) {
        batches.push_back(std::move(current));
        current = Batch{};
      }
      current.items.push_back(idx);
      current.total_s += d;
    }
    if (!current.items.empty()) batches.push_back(std::move(current));
  }
  shuffle(batches);
  return batches;
}

namespace {

struct Example {
  Eigen::MatrixXd features;  // stacked, unnormalized
  Eigen::MatrixXd target;
  double duration_s = 0.0;
};

Example featurize(const Mixture& mixture, const MelFilterbank& fb) {
  Example ex;
  const Signal mono = channel_average(mixture.mixture);
  const Spectrogram spec = stft(mono);
  ex.features = stack_context(log_mel_features(spec, fb));
  ex.target = compute_irm(stft(channel_average(mixture.speech_direct)),
                          stft(channel_average(mixture.background)), fb);
  ex.duration_s = mixture.duration_s();
  return ex;
}

}  // namespace

FfnnModel::FfnnModel(TrainConfig config) : config_(config), fb_(mel_filterbank()) {}

void FfnnModel::train(const Dataset& dataset) {
  if (dataset.mixtures.empty()) throw std::runtime_error("train: empty dataset");

  std::vector<Example> examples;
  examples.reserve(dataset.mixtures.size());
  std::vector<double> durations;
  for (const auto& m : dataset.mixtures) {
    examples.push_back(featurize(m, fb_));
    durations.push_back(examples.back().duration_s);
  }

  {
    std::vector<Eigen::MatrixXd> feature_sets;
    feature_sets.reserve(examples.size());
    for (auto& ex : examples) feature_sets.push_back(std::move(ex.features));
    stats_ = compute_norm_stats(feature_sets);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      normalize_features(feature_sets[i], stats_);
      examples[i].features = std::move(feature_sets[i]);
    }
  }

  params_ = init_ffnn(derive_seed(config_.seed, std::string("init")));
  AdamState adam;
  epoch_losses_.clear();

  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    const auto batches =
        bucket_batches(durations, config_.batch_budget_s, config_.n_buckets,
                       derive_seed(config_.seed, std::string("epoch"), uint64_t(epoch)));
    double loss_sum = 0.0;
    double frame_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Eigen::Index total = 0;
      for (std::size_t idx : batches[b].items) total += examples[idx].features.cols();
      Eigen::MatrixXd x(params_.shape.in, total);
      Eigen::MatrixXd t(params_.shape.out, total);
      Eigen::Index at = 0;
      for (std::size_t idx : batches[b].items) {
        const auto cols = examples[idx].features.cols();
        x.middleCols(at, cols) = examples[idx].features;
        t.middleCols(at, cols) = examples[idx].target;
        at += cols;
      }

      DropoutPlan dropout =
          config_.dropout_rate > 0.0
              ? DropoutPlan::seeded(
                    derive_seed(config_.seed, std::string("dropout"), uint64_t(epoch), uint64_t(b)),
                    config_.dropout_rate)
              : DropoutPlan::off();
      FfnnGrads grads;
      const double loss = ffnn_loss_and_grads(params_, x, t, dropout, &grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: loss is not finite at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b) +
                                 " (check input scaling and learning rate)");
      adam_step(params_, grads, adam, config_.learning_rate);
      loss_sum += loss * static_cast<double>(total);
      frame_sum += static_cast<double>(total);
    }
    epoch_losses_.push_back(frame_sum > 0.0 ? loss_sum / frame_sum : 0.0);
  }
  trained_ = true;
}

Signal FfnnModel::enhance_mono(const Signal& mono_mixture) const {
  if (!trained_) throw std::runtime_error("enhance: model is not trained");
  const Spectrogram spec = stft(mono_mixture);
  Eigen::MatrixXd features = stack_context(log_mel_features(spec, fb_));
  normalize_features(features, stats_);
  const Eigen::MatrixXd mask = ffnn_forward(params_, features, DropoutPlan::off());
  return istft(apply_mask(mask, spec, fb_));
}

Signal FfnnModel::enhance(const Mixture& mixture) const {
  return enhance_mono(channel_average(mixture.mixture));
}

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'G', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  const int64_t rows = m.rows(), cols = m.cols();
  write_pod(out, rows);
  write_pod(out, cols);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd read_matrix(std::ifstream& in) {
  int64_t rows = 0, cols = 0;
  read_pod(in, rows);
  read_pod(in, cols);
  Eigen::MatrixXd m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  return m;
}

}  // namespace

// Checkpoint layout (little-endian): magic "GGCK", u32 version, 4 x i32
// shape, the six parameter arrays as (i64 rows, i64 cols, column-major f64
// data), the two normalization vectors, then the train config.
void FfnnModel::save(const std::filesystem::path& path) const {
  if (!trained_) throw std::runtime_error("save: model is not trained");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out.write(kCheckpointMagic, 4);
  write_pod(out, kCheckpointVersion);
  const int32_t dims[4] = {params_.shape.in, params_.shape.hidden1, params_.shape.hidden2,
                           params_.shape.out};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  write_matrix(out, params_.w1);
  write_matrix(out, Eigen::MatrixXd(params_.b1));
  write_matrix(out, params_.w2);
  write_matrix(out, Eigen::MatrixXd(params_.b2));
  write_matrix(out, params_.w3);
  write_matrix(out, Eigen::MatrixXd(params_.b3));
  write_matrix(out, Eigen::MatrixXd(stats_.mean));
  write_matrix(out, Eigen::MatrixXd(stats_.std));
  write_pod(out, config_.learning_rate);
  write_pod(out, static_cast<int32_t>(config_.epochs));
  write_pod(out, config_.dropout_rate);
  write_pod(out, config_.batch_budget_s);
  write_pod(out, static_cast<int32_t>(config_.n_buckets));
  write_pod(out, config_.seed);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void FfnnModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  uint32_t version = 0;
  read_pod(in, version);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0 || version != kCheckpointVersion)
    throw std::runtime_error("not a checkpoint: " + path.string());
  int32_t dims[4];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  params_.shape = {dims[0], dims[1], dims[2], dims[3]};
  params_.w1 = read_matrix(in);
  params_.b1 = read_matrix(in);
  params_.w2 = read_matrix(in);
  params_.b2 = read_matrix(in);
  params_.w3 = read_matrix(in);
  params_.b3 = read_matrix(in);
  stats_.mean = read_matrix(in);
  stats_.std = read_matrix(in);
  int32_t epochs = 0, buckets = 0;
  read_pod(in, config_.learning_rate);
  read_pod(in, epochs);
  read_pod(in, config_.dropout_rate);
  read_pod(in, config_.batch_budget_s);
  read_pod(in, buckets);
  read_pod(in, config_.seed);
  config_.epochs = epochs;
  config_.n_buckets = buckets;
  if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
  trained_ = true;
}

Signal OracleIrmModel::enhance(const Mixture& mixture) const {
  if (mixture.speech_direct.size() == 0 || mixture.background.size() == 0)
    throw std::runtime_error("oracle enhance: mixture lacks ground-truth components");
  const Signal mono = channel_average(mixture.mixture);
  const Spectrogram spec = stft(mono);
  const Eigen::MatrixXd mask = compute_irm(stft(channel_average(mixture.speech_direct)),
                                           stft(channel_average(mixture.background)), fb_);
  return istft(apply_mask(mask, spec, fb_));
}

void OracleIrmModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  out << "GGOR oracle model (training-free)\n";
}

void OracleIrmModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string magic;
  in >> magic;
  if (magic != "GGOR") throw std::runtime_error("not an oracle marker: " + path.string());
}

std::unique_ptr<ModelInterface> make_model(const std::string& id, const TrainConfig& config) {
  if (id == "ffnn") return std::make_unique<FfnnModel>(config);
  if (id == "oracle") return std::make_unique<OracleIrmModel>();
  throw std::invalid_argument("unknown model '" + id + "' (known: ffnn, oracle)");
}

}  // namespace gengap
