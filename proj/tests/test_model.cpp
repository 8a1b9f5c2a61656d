#include <doctest.h>

#include <cmath>

#include "gengap/metrics.hpp"
#include "gengap/model.hpp"
#include "gengap/rng.hpp"
#include "test_support.hpp"

using namespace gengap;

namespace {

// Central finite differences over every parameter, the oracle for backprop.
// The dropout plan must be fixed so both sides see the same masks. Draws are
// redrawn while any pre-activation sits near the rectifier kink, where a
// central difference straddles the non-differentiable point and is invalid.
double max_grad_rel_error(const FfnnShape& shape, uint64_t seed, const DropoutPlan& dropout,
                          Eigen::Index n_frames) {
  FfnnParams params = init_ffnn(derive_seed(seed, std::string("p")), shape);
  Eigen::MatrixXd x(shape.in, n_frames), t(shape.out, n_frames);
  for (uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, attempt));
    for (Eigen::Index c = 0; c < n_frames; ++c) {
      for (Eigen::Index r = 0; r < shape.in; ++r) x(r, c) = rng.normal();
      for (Eigen::Index r = 0; r < shape.out; ++r) t(r, c) = rng.uniform();
    }
    ForwardCache cache;
    ffnn_forward(params, x, dropout, &cache);
    if (cache.z1.cwiseAbs().minCoeff() > 1e-2 && cache.z2.cwiseAbs().minCoeff() > 1e-2) break;
    REQUIRE(attempt < 100);
  }

  FfnnGrads grads;
  ffnn_loss_and_grads(params, x, t, dropout, &grads);

  const double h = 1e-4;
  double max_rel = 0.0;
  auto check_block = [&](Eigen::MatrixXd& p, const Eigen::MatrixXd& g) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p(i);
      p(i) = saved + h;
      const double up = ffnn_loss_and_grads(params, x, t, dropout, nullptr);
      p(i) = saved - h;
      const double down = ffnn_loss_and_grads(params, x, t, dropout, nullptr);
      p(i) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(g(i)), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - g(i)) / denom);
    }
  };
  check_block(params.w1, grads.w1);
  check_block(params.w2, grads.w2);
  check_block(params.w3, grads.w3);
  auto check_vec = [&](Eigen::VectorXd& p, const Eigen::VectorXd& g) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p(i);
      p(i) = saved + h;
      const double up = ffnn_loss_and_grads(params, x, t, dropout, nullptr);
      p(i) = saved - h;
      const double down = ffnn_loss_and_grads(params, x, t, dropout, nullptr);
      p(i) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(g(i)), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - g(i)) / denom);
    }
  };
  check_vec(params.b1, grads.b1);
  check_vec(params.b2, grads.b2);
  check_vec(params.b3, grads.b3);
  return max_rel;
}

DropoutPlan fixed_dropout(uint64_t seed, const FfnnShape& shape, Eigen::Index n_frames,
                          double rate) {
  Rng rng(seed);
  DropoutPlan plan;
  plan.mode = DropoutPlan::Mode::fixed;
  plan.rate = rate;
  plan.fixed1.resize(shape.hidden1, n_frames);
  plan.fixed2.resize(shape.hidden2, n_frames);
  for (Eigen::Index c = 0; c < n_frames; ++c) {
    for (Eigen::Index r = 0; r < shape.hidden1; ++r)
      plan.fixed1(r, c) = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
    for (Eigen::Index r = 0; r < shape.hidden2; ++r)
      plan.fixed2(r, c) = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
  }
  return plan;
}

}  // namespace

TEST_CASE("init_ffnn parameter count and determinism") {
  const FfnnParams p = init_ffnn(3);
  // 384*1024 + 1024 + 1024*1024 + 1024 + 1024*64 + 64
  CHECK(p.count() == 1509440);

  const FfnnParams q = init_ffnn(3);
  CHECK(p.w1 == q.w1);
  CHECK(p.w2 == q.w2);
  CHECK(p.w3 == q.w3);
  CHECK(p.b1.isZero());

  const FfnnParams r = init_ffnn(4);
  CHECK(p.w1 != r.w1);

  // Glorot bound on the first layer.
  const double limit = std::sqrt(6.0 / (1024 + 384));
  CHECK(p.w1.cwiseAbs().maxCoeff() <= limit);
}

TEST_CASE("forward output range and zero-parameter midpoint") {
  const FfnnShape tiny{6, 8, 8, 4};
  FfnnParams zeros = init_ffnn(1, tiny);
  zeros.w1.setZero();
  zeros.w2.setZero();
  zeros.w3.setZero();
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 5);
  const Eigen::MatrixXd y = ffnn_forward(zeros, x, DropoutPlan::off());
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(y(i) == 0.5);

  const FfnnParams p = init_ffnn(2, tiny);
  const Eigen::MatrixXd y2 = ffnn_forward(p, x, DropoutPlan::off());
  for (Eigen::Index i = 0; i < y2.size(); ++i) {
    CHECK(y2(i) > 0.0);
    CHECK(y2(i) < 1.0);
  }
  CHECK(ffnn_forward(p, x, DropoutPlan::off()) == y2);  // deterministic without dropout

  CHECK_THROWS(ffnn_forward(p, Eigen::MatrixXd::Random(7, 5), DropoutPlan::off()));
}

TEST_CASE("backprop matches central finite differences") {
  const FfnnShape tiny{6, 8, 8, 4};
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    CHECK(max_grad_rel_error(tiny, seed, DropoutPlan::off(), 7) < 1e-4);
    CHECK(max_grad_rel_error(tiny, seed + 100, fixed_dropout(seed, tiny, 7, 0.2), 7) < 1e-4);
  }
}

TEST_CASE("adam converges on a small regression") {
  const FfnnShape tiny{4, 8, 8, 2};
  FfnnParams params = init_ffnn(9, tiny);
  const FfnnParams target_net = init_ffnn(10, tiny);
  Rng rng(11);
  Eigen::MatrixXd x(4, 64);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const Eigen::MatrixXd t = ffnn_forward(target_net, x, DropoutPlan::off());

  AdamState state;
  FfnnGrads grads;
  const double first = ffnn_loss_and_grads(params, x, t, DropoutPlan::off(), &grads);
  double loss = first;
  for (int step = 0; step < 400; ++step) {
    loss = ffnn_loss_and_grads(params, x, t, DropoutPlan::off(), &grads);
    adam_step(params, grads, state, 1e-2);
  }
  CHECK(loss < 0.2 * first);
}

TEST_CASE("normalization yields zero mean and unit variance") {
  Rng rng(13);
  std::vector<Eigen::MatrixXd> sets;
  for (int s = 0; s < 3; ++s) {
    Eigen::MatrixXd f(384, 50 + 13 * s);
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = 3.0 * rng.normal() - 7.0;
    sets.push_back(std::move(f));
  }
  const NormStats stats = compute_norm_stats(sets);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(384), sq = Eigen::VectorXd::Zero(384);
  std::size_t n = 0;
  for (auto& f : sets) {
    normalize_features(f, stats);
    sum += f.rowwise().sum();
    sq += f.cwiseAbs2().rowwise().sum();
    n += f.cols();
  }
  for (Eigen::Index d = 0; d < 384; ++d) {
    CHECK(std::abs(sum(d) / n) < 1e-6);
    const double var = sq(d) / n - std::pow(sum(d) / n, 2.0);
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("bucket_batches fills to the budget within duration deciles") {
  // 1280 one-second items: ten buckets of 128 s fill exactly one batch each.
  std::vector<double> ones(1280, 1.0);
  const auto batches = bucket_batches(ones, 128.0, 10, 5);
  CHECK(batches.size() == 10);
  for (const auto& b : batches) {
    CHECK(b.items.size() == 128);
    CHECK(b.total_s == doctest::Approx(128.0));
  }

  // Every item appears exactly once.
  std::vector<int> seen(1280, 0);
  for (const auto& b : batches)
    for (std::size_t i : b.items) seen[i]++;
  for (int c : seen) CHECK(c == 1);
}

TEST_CASE("bucket_batches handles oversize items and keeps the budget") {
  std::vector<double> durations(40, 3.0);
  durations.push_back(200.0);  // exceeds the budget
  std::vector<std::string> warnings;
  const auto batches = bucket_batches(durations, 128.0, 10, 1, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("exceeds") != std::string::npos);
  bool found_oversize = false;
  for (const auto& b : batches) {
    if (b.items.size() == 1 && durations[b.items[0]] == 200.0) {
      found_oversize = true;
      continue;
    }
    CHECK(b.total_s <= 128.0);
  }
  CHECK(found_oversize);

  // Same seed, same batches; different seed shuffles.
  const auto again = bucket_batches(durations, 128.0, 10, 1);
  REQUIRE(again.size() == batches.size());
  for (std::size_t i = 0; i < batches.size(); ++i) CHECK(again[i].items == batches[i].items);
}

TEST_CASE("training reduces the loss on a small dataset") {
  const auto& reg = test::fixture_registry();
  const Dataset ds = generate_dataset(test::fixture_condition(Side::train), reg, 0.004, 31);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_budget_s = 8.0;
  cfg.seed = 17;
  FfnnModel model(cfg);
  model.train(ds);
  REQUIRE(model.epoch_losses().size() == 5);
  CHECK(model.epoch_losses().back() < model.epoch_losses().front());
  CHECK(model.trained());
}

TEST_CASE("identical mixtures drive the loss down monotonically at first") {
  const auto& reg = test::fixture_registry();
  Dataset one = generate_dataset(test::fixture_condition(Side::train), reg, 0.0005, 33);
  Dataset copies;
  for (int i = 0; i < 6; ++i) copies.mixtures.push_back(one.mixtures[0]);
  copies.total_s = 6 * one.mixtures[0].duration_s();

  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.dropout_rate = 0.0;  // keep the loss curve noise-free
  cfg.batch_budget_s = 32.0;
  FfnnModel model(cfg);
  model.train(copies);
  const auto& losses = model.epoch_losses();
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-12);
}

TEST_CASE("enhance is deterministic, length-preserving and needs training") {
  const auto& reg = test::fixture_registry();
  const Dataset ds = generate_dataset(test::fixture_condition(Side::train), reg, 0.002, 37);

  FfnnModel untrained;
  CHECK_THROWS_WITH(untrained.enhance(ds.mixtures[0]), doctest::Contains("not trained"));

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_budget_s = 8.0;
  FfnnModel model(cfg);
  model.train(ds);
  const Signal a = model.enhance(ds.mixtures[0]);
  const Signal b = model.enhance(ds.mixtures[0]);
  CHECK(a == b);  // bit-reproducible
  CHECK(a.size() == ds.mixtures[0].n_samples());

  // Near-silent input stays near silent.
  Mixture quiet = ds.mixtures[0];
  scale_in_place(quiet.mixture, 1e-9);
  const Signal out = model.enhance(quiet);
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  CHECK(peak < 1e-6);
}

TEST_CASE("checkpoint round trip preserves behavior bit-exactly") {
  const auto& reg = test::fixture_registry();
  const auto dir = test::scratch_dir("checkpoint");
  const Dataset ds = generate_dataset(test::fixture_condition(Side::train), reg, 0.002, 39);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_budget_s = 8.0;
  cfg.seed = 23;
  FfnnModel model(cfg);
  model.train(ds);
  model.save(dir / "ckpt");

  FfnnModel loaded;
  loaded.load(dir / "ckpt");
  CHECK(loaded.params().w2 == model.params().w2);
  CHECK(loaded.enhance(ds.mixtures[1]) == model.enhance(ds.mixtures[1]));

  FfnnModel fresh;
  CHECK_THROWS(fresh.save(dir / "nope"));
  CHECK_THROWS(loaded.load(dir / "missing"));
}

TEST_CASE("oracle model is training-free and matches the dsp pipeline") {
  const auto& reg = test::fixture_registry();
  const Dataset a = generate_dataset(test::fixture_condition(Side::train), reg, 0.002, 41);
  const Dataset b = generate_dataset(test::fixture_condition(Side::train, 2, 2, 2), reg, 0.002, 42);

  OracleIrmModel oracle;
  const Signal before = oracle.enhance(a.mixtures[0]);
  oracle.train(a);
  const Signal mid = oracle.enhance(a.mixtures[0]);
  oracle.train(b);  // different "training" data changes nothing
  const Signal after = oracle.enhance(a.mixtures[0]);
  CHECK(before == mid);
  CHECK(before == after);

  // Same code path as the manual pipeline.
  const MelFilterbank fb = mel_filterbank();
  const Mixture& m = a.mixtures[0];
  const Spectrogram spec = stft(channel_average(m.mixture));
  const Eigen::MatrixXd mask = compute_irm(stft(channel_average(m.speech_direct)),
                                           stft(channel_average(m.background)), fb);
  const Signal manual = istft(apply_mask(mask, spec, fb));
  CHECK(before == manual);

  Mixture stripped = a.mixtures[0];
  stripped.speech_direct = Stereo{};
  CHECK_THROWS_WITH(oracle.enhance(stripped), doctest::Contains("ground-truth"));
}

TEST_CASE("oracle improvement bounds the trained model") {
  const auto& reg = test::fixture_registry();
  const Dataset train = generate_dataset(test::fixture_condition(Side::train), reg, 0.008, 51);
  const Dataset test_set = generate_dataset(test::fixture_condition(Side::test), reg, 0.002, 52);

  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_budget_s = 4.0;
  cfg.seed = 3;
  FfnnModel trained(cfg);
  trained.train(train);
  OracleIrmModel oracle;

  const auto scratch = test::scratch_dir("model_eval");
  const std::vector<MetricSpec> metrics = {{"delta_snr", ""}};
  const double trained_mean =
      evaluate_model(trained, test_set, metrics, scratch).mean("delta_snr");
  const double oracle_mean = evaluate_model(oracle, test_set, metrics, scratch).mean("delta_snr");
  CHECK(oracle_mean > 0.0);
  CHECK(oracle_mean >= trained_mean);
}

TEST_CASE("make_model knows its ids") {
  CHECK(make_model("ffnn", {})->name() == "ffnn");
  CHECK(make_model("oracle", {})->name() == "oracle");
  CHECK_THROWS_WITH(make_model("dccrn", {}), doctest::Contains("unknown model"));
}
