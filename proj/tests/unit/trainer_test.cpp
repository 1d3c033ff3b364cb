#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "freqmrn/config.hpp"
#include "freqmrn/error.hpp"
#include "freqmrn/optim.hpp"
#include "freqmrn/trainer.hpp"
#include "gradcheck.hpp"
#include "tempdir.hpp"

namespace freqmrn {
namespace {

using testing::random_tensor;
using testing::slurp;
using testing::spit;
using testing::TempDir;

Skeleton star() { return synthetic_skeleton(SyntheticSkeletonSpec{3, 2, 100.0}); }

RunConfig small_config() {
  RunConfig cfg;
  cfg.model.history = 20;
  cfg.model.query = 5;
  cfg.model.future = 5;
  cfg.model.stages = 2;
  cfg.model.residual_pairs = 1;
  cfg.model.latent = 16;
  cfg.train.batch_size = 4;
  cfg.train.epochs = 2;
  cfg.train.stride = 4;
  cfg.train.val_fraction = 0.0;
  cfg.seed = 7;
  return cfg;
}

SequenceDataset small_dataset(std::size_t count = 2, std::uint64_t seed = 3) {
  SyntheticMotionSpec motion;
  motion.frames = 45;
  return synthetic_dataset(star(), motion, count, seed);
}

std::vector<double> flat_parameters(const Model& model) {
  std::vector<double> out;
  model.for_each_parameter([&](const std::string&, const Tensor& t) {
    out.insert(out.end(), t.data().begin(), t.data().end());
  });
  return out;
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState state;
  const auto out = adam_step({Tensor({2}, {1.0, -1.0})}, {Tensor({2}, {2.0, -0.5})}, state, 0.1);
  EXPECT_NEAR(out[0][0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(out[0][1], -1.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 1u);
  ASSERT_EQ(state.m.size(), 1u);
  EXPECT_NEAR(state.m[0][0], 0.2, 1e-15);
  EXPECT_NEAR(state.v[0][0], 0.004, 1e-15);
}

TEST(Adam, SecondStepMatchesHandComputation) {
  AdamState state;
  auto p = adam_step({Tensor({1}, {0.0})}, {Tensor({1}, {1.0})}, state, 0.01);
  const double first = -0.01 / (1.0 + 1e-8);
  EXPECT_DOUBLE_EQ(p[0][0], first);
  p = adam_step(p, {Tensor({1}, {3.0})}, state, 0.01);
  const double m = 0.9 * 0.1 + 0.1 * 3.0;
  const double v = 0.999 * 0.001 + 0.001 * 9.0;
  const double m_hat = m / (1 - 0.81);
  const double v_hat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0][0], first - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-15);
}

TEST(Adam, WeightDecayAndErrors) {
  AdamState state;
  AdamOptions opts;
  opts.weight_decay = 1.0;
  // gradient 0 plus decay * param = 2
  const auto out = adam_step({Tensor({1}, {2.0})}, {Tensor({1}, {0.0})}, state, 0.1, opts);
  EXPECT_NEAR(out[0][0], 1.9, 1e-7);
  EXPECT_THROW(adam_step({Tensor({1}, {2.0})}, {}, state, 0.1), DimensionError);
  EXPECT_THROW(adam_step({Tensor({2}, {2.0, 1.0})}, {Tensor({2}, {0.0, 1.0})}, state, 0.1), DimensionError);
}

TEST(LrSchedule, Decays) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 0.005, 0.97), 0.005);
  EXPECT_NEAR(lr_schedule(1, 0.005, 0.97), 0.00485, 1e-15);
  EXPECT_NEAR(lr_schedule(10, 0.005, 0.97), 0.005 * std::pow(0.97, 10), 1e-15);
}

TEST(ClipGradNorm, Rescales) {
  std::vector<Tensor> g{Tensor({1}, {3.0}), Tensor({1}, {4.0})};
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
  std::vector<Tensor> small{Tensor({1}, {0.3})};
  clip_grad_norm(small, 1.0);
  EXPECT_EQ(small[0][0], 0.3);
}

TEST(MakeBatch, StacksQueryAndTarget) {
  const auto windows = extract_windows(small_dataset(1), 20, 5, 10);
  const Batch b = make_batch(windows, {0, 1}, 5);
  EXPECT_EQ(b.history.shape(), Shape({2, 20, 4, 3}));
  EXPECT_EQ(b.target.shape(), Shape({2, 10, 4, 3}));
  // Target frame 0 is history frame 15.
  EXPECT_EQ(b.target[10 * 12 + 3], windows[1].history[15 * 12 + 3]);
  EXPECT_THROW(make_batch(windows, {}, 5), DimensionError);
}

TEST(Trainer, ZeroEpochsKeepsInitialization) {
  RunConfig cfg = small_config();
  Trainer fresh(cfg, star());
  cfg.train.epochs = 0;
  Trainer trainer(cfg, star());
  const auto log = train(trainer, small_dataset());
  EXPECT_TRUE(log.empty());
  EXPECT_EQ(trainer.epoch(), 0u);
  EXPECT_EQ(flat_parameters(trainer.model()), flat_parameters(fresh.model()));
}

TEST(Trainer, EpochMetricsAndSchedule) {
  Trainer trainer(small_config(), star());
  const auto log = train(trainer, small_dataset());
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].epoch, 1u);
  EXPECT_DOUBLE_EQ(log[0].learning_rate, 0.005);
  EXPECT_NEAR(log[1].learning_rate, 0.00485, 1e-15);
  EXPECT_GT(log[0].batches, 0u);
  EXPECT_TRUE(std::isfinite(log[1].train_loss));
  EXPECT_FALSE(log[1].val_mpjpe.has_value());
  EXPECT_EQ(trainer.optimizer().step, 2 * log[0].batches);
}

TEST(Trainer, ValidationSplitReported) {
  RunConfig cfg = small_config();
  cfg.train.epochs = 1;
  cfg.train.val_fraction = 0.5;
  Trainer trainer(cfg, star());
  const auto log = train(trainer, small_dataset());
  ASSERT_TRUE(log[0].val_mpjpe.has_value());
  EXPECT_GT(*log[0].val_mpjpe, 0.0);
}

TEST(Trainer, DeterministicReplay) {
  Trainer a(small_config(), star());
  Trainer b(small_config(), star());
  const auto la = train(a, small_dataset());
  const auto lb = train(b, small_dataset());
  EXPECT_EQ(flat_parameters(a.model()), flat_parameters(b.model()));
  EXPECT_EQ(la.back().train_loss, lb.back().train_loss);
  RunConfig other = small_config();
  other.seed = 8;
  Trainer c(other, star());
  train(c, small_dataset());
  EXPECT_NE(flat_parameters(a.model()), flat_parameters(c.model()));
}

TEST(Trainer, SkeletonMismatch) {
  Trainer trainer(small_config(), human22_skeleton());
  EXPECT_THROW(train(trainer, small_dataset()), SkeletonError);
}

TEST(Trainer, NonFiniteLossNamesBatch) {
  RunConfig cfg = small_config();
  Trainer trainer(cfg, star());
  auto windows = extract_windows(small_dataset(1), 20, 5, 10);
  std::vector<double> bad = windows[0].history.to_vector();
  bad[17] = std::numeric_limits<double>::quiet_NaN();
  windows[0].history = Tensor(windows[0].history.shape(), bad);
  try {
    trainer.run_epoch(windows);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(Trainer, SupervisedStagesAddTerms) {
  RunConfig cfg = small_config();
  Trainer trainer(cfg, star());
  const auto windows = extract_windows(small_dataset(1), 20, 5, 5);
  const double plain = trainer.mean_loss(windows);
  LossConfig loss = cfg.loss;
  loss.supervise_stages = true;
  trainer.set_loss_config(loss);
  // At initialization every stage returns the padded query, so the extra term doubles the loss.
  EXPECT_NEAR(trainer.mean_loss(windows), 2.0 * plain, 1e-9 * plain);
}

TEST(Checkpoint, ResumeIsBitIdentical) {
  TempDir dir;
  RunConfig cfg = small_config();
  cfg.train.epochs = 4;
  Trainer straight(cfg, star());
  train(straight, small_dataset());

  RunConfig half = cfg;
  half.train.epochs = 2;
  Trainer first(half, star());
  train(first, small_dataset());
  first.save(dir / "a.ckpt");
  Trainer resumed = Trainer::load(dir / "a.ckpt");
  EXPECT_EQ(resumed.epoch(), 2u);
  EXPECT_EQ(flat_parameters(resumed.model()), flat_parameters(first.model()));
  EXPECT_EQ(resumed.rng().state(), first.rng().state());

  // The saved config carries epochs = 2; extend the run through a fresh trainer built from the checkpoint.
  Trainer extended = Trainer::load(dir / "a.ckpt");
  const auto windows = extract_windows(small_dataset(), cfg.model.history, cfg.model.future, cfg.train.stride);
  extended.run_epoch(windows);
  extended.run_epoch(windows);
  EXPECT_EQ(flat_parameters(extended.model()), flat_parameters(straight.model()));
  EXPECT_EQ(extended.optimizer().step, straight.optimizer().step);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  TempDir dir;
  Trainer trainer(small_config(), star());
  trainer.save(dir / "a.ckpt");
  std::string bytes = slurp(dir / "a.ckpt");
  EXPECT_EQ(bytes.substr(0, 8), "FMRNCKPT");
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  spit(dir / "flip.ckpt", flipped);
  EXPECT_THROW(Trainer::load(dir / "flip.ckpt"), FormatError);
  spit(dir / "cut.ckpt", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(Trainer::load(dir / "cut.ckpt"), FormatError);
  spit(dir / "magic.ckpt", "NOTACKPT" + bytes.substr(8));
  EXPECT_THROW(Trainer::load(dir / "magic.ckpt"), FormatError);
  EXPECT_THROW(Trainer::load(dir / "missing.ckpt"), FormatError);
  EXPECT_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
}

class Prediction : public ::testing::Test {
 protected:
  Prediction() : trainer_(config(), star()) {
    SyntheticMotionSpec motion;
    motion.frames = 20;
    motion.seed = 5;
    history_ = gen_synthetic(star(), motion);
  }
  static RunConfig config() {
    RunConfig cfg = small_config();
    cfg.model.query = 10;
    cfg.model.future = 10;
    return cfg;
  }
  Trainer trainer_;
  PoseSequence history_ = PoseSequence::empty(1, 25.0, "");
};

TEST_F(Prediction, PassCounts) {
  Model& model = trainer_.model();
  const AutoregressiveResult one = predict_autoregressive(model, history_, 10);
  EXPECT_EQ(one.passes, 1u);
  EXPECT_EQ(one.frames.frames(), 10u);
  const AutoregressiveResult three = predict_autoregressive(model, history_, 25);
  EXPECT_EQ(three.passes, 3u);
  EXPECT_EQ(three.frames.frames(), 25u);
  EXPECT_EQ(three.frames.skeleton_name(), history_.skeleton_name());
  const AutoregressiveResult none = predict_autoregressive(model, history_, 0);
  EXPECT_EQ(none.passes, 0u);
  EXPECT_EQ(none.frames.frames(), 0u);
  // The first pass is shared.
  for (std::size_t i = 0; i < 10 * 4 * 3; ++i) EXPECT_EQ(three.frames.coords()[i], one.frames.coords()[i]);
}

TEST_F(Prediction, BatchMatchesSingle) {
  Model& model = trainer_.model();
  // Perturb the output layers so predictions differ from the padded query.
  Rng rng(9);
  for (auto& stage : model.refinement().stages) {
    stage.output.weights = random_tensor(stage.output.weights.shape(), rng, -0.05, 0.05);
  }
  const AutoregressiveResult single = predict_autoregressive(model, history_, 25);
  std::size_t passes = 0;
  const Tensor batch = predict_batch(model, reshape(history_.coords(), {1, 20, 4, 3}), 25, kAllStages, &passes);
  EXPECT_EQ(passes, 3u);
  EXPECT_EQ(batch.to_vector(), single.frames.coords().to_vector());
  const AutoregressiveResult again = predict_autoregressive(model, history_, 25);
  EXPECT_EQ(again.frames.coords().to_vector(), single.frames.coords().to_vector());
}

TEST_F(Prediction, ShortHistoryAndWrongSkeleton) {
  Model& model = trainer_.model();
  EXPECT_THROW(predict_autoregressive(model, history_.subsequence(0, 19), 10), DimensionError);
  const PoseSequence other(Tensor::zeros({20, 22, 3}), 25.0, "human22");
  EXPECT_THROW(predict_autoregressive(model, other, 10), SkeletonError);
}

TEST(FramesFromMs, Mapping) {
  EXPECT_EQ(frames_from_ms({80, 400, 560, 1000}, 25.0), (std::vector<std::size_t>{2, 10, 14, 25}));
  EXPECT_EQ(frames_from_ms({40}, 25.0), (std::vector<std::size_t>{1}));
  try {
    frames_from_ms({80, 90}, 25.0);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("90"), std::string::npos);
  }
  EXPECT_THROW(frames_from_ms({0}, 25.0), ConfigError);
  EXPECT_THROW(frames_from_ms({80}, 0.0), ConfigError);
}

TEST(Evaluate, StaticDatasetHasZeroError) {
  SyntheticMotionSpec motion;
  motion.amplitude = 0.0;
  motion.frames = 60;
  const SequenceDataset data = synthetic_dataset(star(), motion, 2, 4);
  Trainer trainer(small_config(), star());
  EvalOptions options;
  options.per_stage = true;
  options.stride = 5;
  const MpjpeTable table = evaluate(trainer.model(), data, {80, 400, 560, 1000}, options);
  EXPECT_EQ(table.frames, (std::vector<std::size_t>{2, 10, 14, 25}));
  EXPECT_EQ(table.windows, 8u);  // (60 - 20 - 25) / 5 + 1 per sequence
  for (double v : table.overall) EXPECT_NEAR(v, 0.0, 1e-9);
  ASSERT_EQ(table.per_stage.size(), 2u);
  ASSERT_EQ(table.per_action.size(), 1u);
  EXPECT_EQ(table.per_action[0].first, "sinusoid");
}

TEST(Evaluate, MatchesManualWindowError) {
  const SequenceDataset data = small_dataset(1);
  Trainer trainer(small_config(), star());
  const MpjpeTable table = evaluate(trainer.model(), data, {40, 200}, EvalOptions{});
  // Untrained model: prediction is the last observed pose held constant.
  const auto windows = extract_windows(data, 20, 5, 1);
  double expected = 0.0;
  for (const auto& w : windows) {
    double e = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      double sq = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double d = w.history[(19 * 4 + j) * 3 + a] - w.target[(4 * 4 + j) * 3 + a];
        sq += d * d;
      }
      e += std::sqrt(sq) / 4.0;
    }
    expected += e / static_cast<double>(windows.size());
  }
  EXPECT_NEAR(table.overall[1], expected, 1e-9 * expected);
}

TEST(Evaluate, Errors) {
  Trainer trainer(small_config(), star());
  EXPECT_THROW(evaluate(trainer.model(), SequenceDataset(star()), {80}), DataError);
  EXPECT_THROW(evaluate(trainer.model(), small_dataset(1), {}), ConfigError);
  EXPECT_THROW(evaluate(trainer.model(), small_dataset(1), {90}), ConfigError);
  EXPECT_THROW(evaluate(trainer.model(), small_dataset(1), {4000}), DataError);
}

TEST(MpjpeTable, TextRoundTrip) {
  MpjpeTable t;
  t.ms = {80, 400};
  t.frames = {2, 10};
  t.overall = {1.5, 12.25};
  t.per_action = {{"walk", {1.0, 2.0}}, {"eat", {3.0, 4.0}}};
  t.per_stage = {{5.0, 6.0}};
  t.windows = 17;
  t.loss = 0.125;
  EXPECT_EQ(table_from_text(table_to_text(t)), t);
  t.loss.reset();
  EXPECT_EQ(table_from_text(table_to_text(t)), t);
  EXPECT_NE(format_table(t).find("400"), std::string::npos);
  EXPECT_THROW(table_from_text("{"), FormatError);
}

TEST(Config, TextRoundTripAndOverrides) {
  RunConfig cfg = small_config();
  cfg.loss.temporal_form = TemporalForm::literal;
  cfg.synthetic.motion.kind = MotionKind::lissajous;
  EXPECT_EQ(config_from_text(config_to_text(cfg)), cfg);
  const RunConfig partial = config_from_text(R"({"model": {"stages": 4}, "seed": 3})");
  EXPECT_EQ(partial.model.stages, 4u);
  EXPECT_EQ(partial.seed, 3u);
  EXPECT_EQ(partial.model.latent, 256u);
  EXPECT_EQ(partial.optimizer.learning_rate, 0.005);
}

TEST(Config, Rejections) {
  auto message = [](const char* text) {
    try {
      config_from_text(text).validate();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message(R"({"model": {"stagez": 4}})").find("model.stagez"), std::string::npos);
  EXPECT_NE(message(R"({"model": {"stages": "four"}})").find("model.stages"), std::string::npos);
  EXPECT_NE(message(R"({"model": {"stages": -1}})").find("model.stages"), std::string::npos);
  EXPECT_NE(message(R"({"model": {"dropout": 1.5}})").find("dropout"), std::string::npos);
  EXPECT_NE(message(R"({"loss": {"temporal_form": "odd"}})").find("odd"), std::string::npos);
  EXPECT_THROW(config_from_text("[1, 2"), ConfigError);
}

TEST(Config, HashTracksGeometryAndSkeleton) {
  const ModelConfig m = small_config().model;
  EXPECT_EQ(config_hash(m, star()), config_hash(m, star()));
  ModelConfig other = m;
  other.stages = 3;
  EXPECT_NE(config_hash(m, star()), config_hash(other, star()));
  EXPECT_NE(config_hash(m, star()), config_hash(m, human22_skeleton()));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

}  // namespace
}  // namespace freqmrn
