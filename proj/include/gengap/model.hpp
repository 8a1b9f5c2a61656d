#ifndef GENGAP_MODEL_HPP
#define GENGAP_MODEL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gengap/dsp.hpp"
#include "gengap/scene.hpp"

namespace gengap {

// Two hidden layers with rectifier activation, logistic output.
struct FfnnShape {
  int in = 384;
  int hidden1 = 1024;
  int hidden2 = 1024;
  int out = 64;

  bool operator==(const FfnnShape&) const = default;
};

struct FfnnParams {
  FfnnShape shape;
  Eigen::MatrixXd w1, w2, w3;  // hidden1 x in, hidden2 x hidden1, out x hidden2
  Eigen::VectorXd b1, b2, b3;

  std::size_t count() const;
};

// Glorot-uniform weights, zero biases. Deterministic in the seed.
FfnnParams init_ffnn(uint64_t seed, const FfnnShape& shape = {});

// Inverted dropout after each hidden activation: zeroed at `rate`, survivors
// scaled by 1/(1-rate). `fixed` masks (already scaled) override the seeded
// draw, which the gradient check uses to hold masks constant.
struct DropoutPlan {
  enum class Mode { off, seeded, fixed } mode = Mode::off;
  double rate = 0.2;
  uint64_t seed = 0;
  Eigen::MatrixXd fixed1, fixed2;

  static DropoutPlan off() { return {}; }
  static DropoutPlan seeded(uint64_t seed, double rate = 0.2) {
    return {Mode::seeded, rate, seed, {}, {}};
  }
};

// Intermediate activations kept for backprop.
struct ForwardCache {
  Eigen::MatrixXd z1, h1, z2, h2, y;  // h* are post-dropout activations
  Eigen::MatrixXd mask1, mask2;       // scaled dropout masks actually applied
};

// Columns are frames. Output in (0, 1).
Eigen::MatrixXd ffnn_forward(const FfnnParams& params, const Eigen::MatrixXd& input,
                             const DropoutPlan& dropout, ForwardCache* cache = nullptr);

struct FfnnGrads {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
};

// Frame-averaged MSE between the predicted mask and the target, plus its
// gradients. Loss = mean over all (output, frame) entries.
double ffnn_loss_and_grads(const FfnnParams& params, const Eigen::MatrixXd& input,
                           const Eigen::MatrixXd& target, const DropoutPlan& dropout,
                           FfnnGrads* grads);

struct AdamState {
  FfnnGrads m, v;
  long step = 0;
};

void adam_step(FfnnParams& params, const FfnnGrads& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // floored at 1e-8
};

NormStats compute_norm_stats(const std::vector<Eigen::MatrixXd>& feature_sets);
void normalize_features(Eigen::MatrixXd& features, const NormStats& stats);

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 100;
  double dropout_rate = 0.2;
  double batch_budget_s = 128.0;
  int n_buckets = 10;
  uint64_t seed = 0;
};

struct Batch {
  std::vector<std::size_t> items;
  double total_s = 0.0;
};

// Duration-decile buckets filled greedily up to the budget, shuffled within
// buckets (and batch order) by the seed. Items longer than the budget get
// their own batch and a warning.
std::vector<Batch> bucket_batches(const std::vector<double>& durations_s, double budget_s,
                                  int n_buckets, uint64_t seed,
                                  std::vector<std::string>* warnings = nullptr);

// Behavioral contract shared by trainable models and the oracle: train on a
// dataset, then map a mixture to a mono enhanced signal. Enhancement is
// deterministic after training.
class ModelInterface {
 public:
  virtual ~ModelInterface() = default;
  virtual std::string name() const = 0;
  virtual void train(const Dataset& dataset) = 0;
  virtual Signal enhance(const Mixture& mixture) const = 0;
  virtual void save(const std::filesystem::path& path) const = 0;
  virtual void load(const std::filesystem::path& path) = 0;
};

// The trainable mask-estimation baseline: log-mel features with context
// stacking, mean/variance normalization from the training set, mask
// prediction, mel-to-STFT gain extrapolation and inverse STFT.
class FfnnModel : public ModelInterface {
 public:
  explicit FfnnModel(TrainConfig config = {});

  std::string name() const override { return "ffnn"; }
  void train(const Dataset& dataset) override;
  Signal enhance(const Mixture& mixture) const override;
  void save(const std::filesystem::path& path) const override;
  void load(const std::filesystem::path& path) override;

  bool trained() const { return trained_; }
  const FfnnParams& params() const { return params_; }
  const NormStats& stats() const { return stats_; }
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }
  const TrainConfig& config() const { return config_; }

  // Mono enhancement pipeline used by both this model and tests.
  Signal enhance_mono(const Signal& mono_mixture) const;

 private:
  TrainConfig config_;
  FfnnParams params_;
  NormStats stats_;
  MelFilterbank fb_;
  bool trained_ = false;
  std::vector<double> epoch_losses_;
};

// Training-free upper bound: applies the ideal ratio mask computed from the
// mixture's own ground-truth components.
class OracleIrmModel : public ModelInterface {
 public:
  std::string name() const override { return "oracle"; }
  void train(const Dataset&) override {}
  Signal enhance(const Mixture& mixture) const override;
  void save(const std::filesystem::path& path) const override;
  void load(const std::filesystem::path& path) override;

 private:
  MelFilterbank fb_ = mel_filterbank();
};

// Known ids: "ffnn", "oracle".
std::unique_ptr<ModelInterface> make_model(const std::string& id, const TrainConfig& config);

}  // namespace gengap

#endif  // GENGAP_MODEL_HPP
