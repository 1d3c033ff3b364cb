// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "freqmrn/attention.hpp"
#include "freqmrn/data.hpp"
#include "freqmrn/losses.hpp"
#include "freqmrn/model.hpp"
#include "freqmrn/ops.hpp"
#include "freqmrn/refinement.hpp"
#include "freqmrn/trainer.hpp"
#include "freqmrn/transforms.hpp"

namespace {

using namespace freqmrn;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

Tensor project(const Tensor& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(out, random_tensor(out.shape(), rng, 0.5, 1.5)));
}

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

double gradient_error(const ScalarFn& fn, const std::vector<Tensor>& inputs, double h = 1e-5) {
  Tape tape;
  std::vector<Tensor> watched;
  for (const auto& t : inputs) watched.push_back(tape.watch(t));
  const Gradients grads = tape.backward(fn(watched));
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = grads.of(watched[i]);
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      auto at = [&](double delta) {
        std::vector<Tensor> args = inputs;
        std::vector<double> v = inputs[i].to_vector();
        v[k] += delta;
        args[i] = Tensor(inputs[i].shape(), std::move(v));
        return fn(args).item();
      };
      const double numeric = (at(h) - at(-h)) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
    }
  }
  return worst;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Skeleton star4() { return synthetic_skeleton(SyntheticSkeletonSpec{3, 2, 100.0}); }

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(1001);
  std::vector<std::pair<std::string, double>> errors;
  auto check = [&](const std::string& name, const ScalarFn& fn, const std::vector<Tensor>& inputs) {
    errors.emplace_back(name, gradient_error(fn, inputs));
  };

  check("matmul", [](const auto& x) { return project(matmul(x[0], x[1])); },
        {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)});
  check("conv1d", [](const auto& x) { return project(conv1d(x[0], x[1], x[2])); },
        {random_tensor({2, 3, 7}, rng), random_tensor({4, 3, 3}, rng), random_tensor({4}, rng)});
  check("tanh", [](const auto& x) { return project(tanh(x[0])); }, {random_tensor({3, 4}, rng, -2, 2)});
  {
    // Keep inputs away from the kink at zero.
    std::vector<double> v = random_tensor({3, 4}, rng, 0.1, 1.0).to_vector();
    for (std::size_t i = 0; i < v.size(); i += 2) v[i] = -v[i];
    check("relu", [](const auto& x) { return project(relu(x[0])); }, {Tensor({3, 4}, v)});
  }
  for (Mode mode : {Mode::train, Mode::eval}) {
    RunningStats stats{random_tensor({4}, rng), random_tensor({4}, rng, 0.5, 2.0), true};
    check(mode == Mode::train ? "batchnorm(train)" : "batchnorm(eval)",
          [&](const auto& x) {
            RunningStats s = stats;
            return project(batchnorm(x[0], x[1], x[2], s, mode));
          },
          {random_tensor({3, 5, 4}, rng), random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng)});
  }
  const DctBasis basis(6);
  check("dct", [&](const auto& x) { return project(dct(x[0], basis)); }, {random_tensor({2, 4, 6}, rng)});
  check("idct", [&](const auto& x) { return project(idct(x[0], basis)); }, {random_tensor({2, 4, 6}, rng)});

  GlmParams glm = init_glm(4, 6, 5, 1, rng);
  glm.output.weights = random_tensor(glm.output.weights.shape(), rng, -0.4, 0.4);
  check("gc",
        [](const auto& x) { return project(graph_conv(x[0], GraphConvParams{x[1], x[2]})); },
        {random_tensor({2, 4, 6}, rng), random_tensor({4, 4}, rng), random_tensor({6, 3}, rng)});
  check("glb",
        [&](const auto& x) {
          GraphLayerParams b = glm.blocks[0];
          b.gc = GraphConvParams{x[1], x[2]};
          b.gamma = x[3];
          Rng drop(5);
          return project(graph_learning_block(x[0], b, GraphContext{Mode::train, &drop, 0.3, {}}));
        },
        {random_tensor({2, 4, 6}, rng), glm.blocks[0].gc.adjacency, glm.blocks[0].gc.weights, glm.blocks[0].gamma});
  check("glm",
        [&](const auto& x) {
          GlmParams g = glm;
          g.blocks[1].gc.weights = x[1];
          g.output.adjacency = x[2];
          g.output.weights = x[3];
          return project(glm_forward(x[0], g, GraphContext{Mode::train, nullptr, 0.0, {}}));
        },
        {random_tensor({2, 4, 6}, rng), glm.blocks[1].gc.weights, glm.output.adjacency, glm.output.weights});

  // Attention: P = 6, H = 14, L = 4, F = 3.
  AttentionParams att = AttentionParams::init(6, 8, 4, true, rng);
  check("encode",
        [&](const auto& x) {
          EncoderParams net = att.query_net;
          net.first.kernels = x[1];
          return project(encode(net, x[0]));
        },
        {random_tensor({2, 6, 4}, rng), att.query_net.first.kernels});
  check("summarize",
        [&](const auto& x) {
          AttentionParams p = att;
          p.key_net.second.kernels = x[1];
          return project(summarize(x[0], p, 4, 3).values);
        },
        {random_tensor({2, 6, 14}, rng), att.key_net.second.kernels});

  const LossWeights weights = assemble_lambda(random_tensor({3}, rng, 0.5, 2), random_tensor({5}, rng, 0.5, 2));
  const Tensor truth = random_tensor({2, 5, 3, 3}, rng);
  check("loss_st", [&](const auto& x) { return loss_st(x[0], truth, weights); }, {random_tensor({2, 5, 3, 3}, rng)});
  check("loss_velocity", [&](const auto& x) { return loss_velocity(x[0], truth); },
        {random_tensor({2, 5, 3, 3}, rng)});

  // Full objective through refinement: P = 9 (J = 3), L = 3, F = 2, N = 2, M = 1, d = 8.
  RefinementParams ref = init_refinement(9, 10, 8, 2, 1, rng);
  for (auto& s : ref.stages) s.output.weights = random_tensor(s.output.weights.shape(), rng, -0.3, 0.3);
  const Skeleton sk("tri", {"root", "a", "b"}, {KinematicChain{{0, 1, 2}, {120.0, 90.0}}});
  const Objective objective(sk, 3, 2, LossConfig{});
  const DctBasis basis5(5);
  check("loss_total(refine)",
        [&](const auto& x) {
          RefinementParams p = ref;
          p.stages[0].output.weights = x[2];
          p.stages[1].blocks[0].gc.adjacency = x[3];
          Rng drop(3);
          const GraphContext ctx{Mode::train, &drop, 0.3, {}};
          return objective(pose_frames(refine(x[0], x[1], p, basis5, ctx).prediction), truth);
        },
        {random_tensor({2, 9, 3}, rng), random_tensor({2, 9, 5}, rng), ref.stages[0].output.weights,
         ref.stages[1].blocks[0].gc.adjacency});

  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : errors) {
    o.require(err < 1e-4, name + " relative error " + fmt("%.3g", err));
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  }
  const double elapsed = seconds_since(start);
  o.require(elapsed < 60.0, "runtime " + fmt("%.1f s", elapsed));
  if (o.pass) {
    o.detail = std::to_string(errors.size()) + " ops, worst " + worst_name + " " + fmt("%.2e", worst) + ", " +
               fmt("%.2f s", elapsed);
  }
  return o;
}

Outcome transform_suite() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(1002);
  double ortho = 0.0, round = 0.0, parseval = 0.0, dc = 0.0;
  for (std::size_t n = 1; n <= 128; ++n) {
    const DctBasis basis(n);
    const Tensor bbt = matmul(basis.matrix(), basis.transposed());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) ortho = std::max(ortho, std::abs(bbt[i * n + j] - (i == j ? 1.0 : 0.0)));

    const Tensor x = random_tensor({3, n}, rng, -100, 100);
    const Tensor c = dct(x, basis);
    round = std::max(round, max_abs_diff(idct(c, basis), x));
    for (std::size_t r = 0; r < 3; ++r) {
      double ex = 0.0, ec = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        ex += x[r * n + k] * x[r * n + k];
        ec += c[r * n + k] * c[r * n + k];
      }
      parseval = std::max(parseval, std::abs(ex - ec) / std::max(1.0, ex));
    }
    const double value = rng.uniform(-5, 5);
    const Tensor cc = dct(Tensor::full({n}, value), basis);
    dc = std::max(dc, std::abs(cc[0] - value * std::sqrt(static_cast<double>(n))));
    for (std::size_t k = 1; k < n; ++k) dc = std::max(dc, std::abs(cc[k]));
  }
  o.require(ortho < 1e-12, "orthonormality " + fmt("%.3g", ortho));
  o.require(round < 1e-10, "round trip " + fmt("%.3g", round));
  o.require(parseval < 1e-10, "Parseval " + fmt("%.3g", parseval));
  o.require(dc < 1e-12, "DC-only " + fmt("%.3g", dc));
  const double elapsed = seconds_since(start);
  o.require(elapsed < 5.0, "runtime " + fmt("%.1f s", elapsed));
  if (o.pass) {
    o.detail = "sizes 1..128, orthonormality " + fmt("%.1e", ortho) + ", round trip " + fmt("%.1e", round) +
               ", Parseval " + fmt("%.1e", parseval) + ", DC " + fmt("%.1e", dc);
  }
  return o;
}

Outcome attention_suite() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(1003);
  // H = 50, L = 10, F = 10 at J = 22.
  const AttentionParams params = AttentionParams::init(66, 64, 10, true, rng);
  const Tensor history = random_tensor({3, 66, 50}, rng, -500, 500);
  const MotionSummary s = summarize(history, params, 10, 10);
  o.require(s.weights.shape() == Shape({3, 31}), "weights shape " + shape_string(s.weights.shape()));
  double sum_err = 0.0, min_weight = 1.0, hull = 0.0;
  for (std::size_t b = 0; b < 3; ++b) {
    double total = 0.0;
    for (std::size_t i = 0; i < 31; ++i) {
      total += s.weights[b * 31 + i];
      min_weight = std::min(min_weight, s.weights[b * 31 + i]);
    }
    sum_err = std::max(sum_err, std::abs(total - 1.0));
    for (std::size_t p = 0; p < 66; ++p)
      for (std::size_t t = 0; t < 20; ++t) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t i = 0; i < 31; ++i) {
          const double v = history[(b * 66 + p) * 50 + i + t];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        const double v = s.values[(b * 66 + p) * 20 + t];
        hull = std::max({hull, lo - v, v - hi});
      }
  }
  o.require(min_weight >= 0.0, "negative weight " + fmt("%.3g", min_weight));
  o.require(sum_err < 1e-12, "weight sum error " + fmt("%.3g", sum_err));
  o.require(hull <= 1e-9, "summary leaves the window hull by " + fmt("%.3g", hull));

  const MotionSummary single = summarize(slice(history, 2, 30, 50), params, 10, 10);
  o.require(single.weights.shape() == Shape({3, 1}), "single-window shape " + shape_string(single.weights.shape()));
  for (std::size_t b = 0; b < single.weights.size(); ++b) o.require(single.weights[b] == 1.0, "single weight != 1");
  o.require(max_abs_diff(single.values, slice(history, 2, 30, 50)) == 0.0, "single-window summary differs");

  const double elapsed = seconds_since(start);
  o.require(elapsed < 5.0, "runtime " + fmt("%.1f s", elapsed));
  if (o.pass) {
    o.detail = "31 weights, sum error " + fmt("%.1e", sum_err) + ", min weight " + fmt("%.3g", min_weight) +
               ", hull excess " + fmt("%.1e", hull);
  }
  return o;
}

Outcome residual_identity() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(1004);
  // P = 66, L = 10, F = 10, N = 3, M = 2, d = 256.
  RefinementParams params = init_refinement(66, 40, 256, 3, 2, rng);
  const DctBasis basis(20);
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor query = random_tensor({2, 66, 10}, rng, -1000, 1000);
    const Tensor summary = random_tensor({2, 66, 20}, rng, -1000, 1000);
    Rng drop(trial);
    const GraphContext ctx{trial == 0 ? Mode::eval : Mode::train, &drop, 0.3, {}};
    worst = std::max(worst, max_abs_diff(refine(query, summary, params, basis, ctx).prediction, pad_query(query, 10)));
  }
  o.require(worst < 1e-10, "max deviation " + fmt("%.3g", worst));
  const double elapsed = seconds_since(start);
  o.require(elapsed < 5.0, "runtime " + fmt("%.1f s", elapsed));
  if (o.pass) o.detail = "max deviation " + fmt("%.2e", worst) + " at P=66 L=10 F=10 N=3 M=2 d=256";
  return o;
}

double loop_st(const Tensor& p, const Tensor& t, const Tensor& lambda) {
  const std::size_t b = p.dim(0), frames = p.dim(1), joints = p.dim(2);
  double total = 0.0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t j = 0; j < joints; ++j) {
        double sq = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
          const std::size_t i = ((n * frames + f) * joints + j) * 3 + a;
          sq += (p[i] - t[i]) * (p[i] - t[i]);
        }
        total += lambda[f * joints + j] * std::sqrt(sq);
      }
  return total / static_cast<double>(b * frames * joints);
}

double loop_velocity(const Tensor& p, const Tensor& t) {
  const std::size_t b = p.dim(0), frames = p.dim(1), joints = p.dim(2);
  double total = 0.0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t f = 1; f < frames; ++f)
      for (std::size_t j = 0; j < joints; ++j) {
        double sq = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
          const std::size_t i = ((n * frames + f) * joints + j) * 3 + a;
          const std::size_t k = ((n * frames + f - 1) * joints + j) * 3 + a;
          const double d = (p[i] - p[k]) - (t[i] - t[k]);
          sq += d * d;
        }
        total += std::sqrt(sq);
      }
  return total / static_cast<double>(b * (frames - 1) * joints);
}

Outcome loss_suite() {
  Outcome o;
  Rng rng(1005);
  double sum_err = 0.0, plain_err = 0.0, shift_err = 0.0, oracle_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const SyntheticSkeletonSpec spec{1 + rng.below(5), 1 + rng.below(6), rng.uniform(5.0, 500.0)};
    const Skeleton sk = synthetic_skeleton(spec);
    const std::size_t query = 1 + rng.below(12), future = 1 + rng.below(12);
    LossConfig cfg;
    cfg.temporal_form = rng.below(2) ? TemporalForm::shifted : TemporalForm::literal;
    const Objective objective(sk, query, future, cfg);
    double total = 0.0;
    for (double v : objective.weights().lambda.data()) total += v;
    const double cells = static_cast<double>(sk.joint_count() * (query + future));
    sum_err = std::max(sum_err, std::abs(total - cells) / cells);

    if (trial % 10 == 0) {
      const std::size_t j = sk.joint_count(), t = query + future;
      const Tensor p = random_tensor({2, t, j, 3}, rng, -200, 200);
      const Tensor g = random_tensor({2, t, j, 3}, rng, -200, 200);
      const LossWeights ones = assemble_lambda(Tensor::full({j}, 1.0), Tensor::full({t}, 1.0));
      double plain = 0.0;
      for (std::size_t i = 0; i < 2 * t * j; ++i) {
        double sq = 0.0;
        for (std::size_t a = 0; a < 3; ++a) sq += (p[i * 3 + a] - g[i * 3 + a]) * (p[i * 3 + a] - g[i * 3 + a]);
        plain += std::sqrt(sq);
      }
      plain /= static_cast<double>(2 * t * j);
      plain_err = std::max(plain_err, std::abs(loss_st(p, g, ones).item() - plain));
      if (t >= 2) {
        const Tensor moved = add(p, Tensor::full(p.shape(), rng.uniform(-1000, 1000)));
        shift_err = std::max(shift_err, std::abs(loss_velocity(moved, g).item() - loss_velocity(p, g).item()));
        oracle_err = std::max(oracle_err, std::abs(loss_velocity(p, g).item() - loop_velocity(p, g)));
      }
      oracle_err = std::max(oracle_err, std::abs(loss_st(p, g, objective.weights()).item() -
                                                 loop_st(p, g, objective.weights().lambda)));
    }
  }
  o.require(sum_err < 1e-9, "sum(lambda) relative error " + fmt("%.3g", sum_err));
  o.require(plain_err < 1e-12, "unit-weight reduction " + fmt("%.3g", plain_err));
  o.require(shift_err < 1e-12, "velocity translation " + fmt("%.3g", shift_err));
  o.require(oracle_err < 1e-12, "loop oracle " + fmt("%.3g", oracle_err));
  if (o.pass) {
    o.detail = "100 draws, sum " + fmt("%.1e", sum_err) + ", plain " + fmt("%.1e", plain_err) + ", translation " +
               fmt("%.1e", shift_err) + ", oracle " + fmt("%.1e", oracle_err);
  }
  return o;
}

// Shared overfit fixture: 8 sinusoid sequences on a 4-joint skeleton.
RunConfig overfit_config() {
  RunConfig cfg;
  cfg.model.history = 20;
  cfg.model.query = 5;
  cfg.model.future = 5;
  cfg.model.stages = 2;
  cfg.model.residual_pairs = 1;
  cfg.model.latent = 32;
  cfg.train.batch_size = 4;
  cfg.train.epochs = 300;
  cfg.train.val_fraction = 0.0;
  cfg.optimizer.learning_rate = 0.005;
  cfg.optimizer.lr_decay = 0.97;
  cfg.seed = 2024;
  return cfg;
}

SequenceDataset overfit_data() {
  SyntheticMotionSpec motion;
  motion.kind = MotionKind::sinusoid;
  motion.amplitude = 100.0;
  return synthetic_dataset(star4(), motion, 8, 77);
}

struct OverfitRun {
  std::vector<EpochMetrics> log;
  double seconds = 0.0;
  std::optional<Trainer> trainer;
};

OverfitRun& overfit_run() {
  static OverfitRun run = [] {
    OverfitRun r;
    const auto start = Clock::now();
    r.trainer.emplace(overfit_config(), star4());
    r.log = train(*r.trainer, overfit_data());
    r.seconds = seconds_since(start);
    return r;
  }();
  return run;
}

Outcome overfit() {
  Outcome o;
  OverfitRun& run = overfit_run();
  o.require(run.log.size() == 300, "ran " + std::to_string(run.log.size()) + " epochs");
  if (run.log.empty()) return o;
  const double mpjpe = run.log.back().train_mpjpe;
  o.require(mpjpe < 5.0, "final training MPJPE " + fmt("%.3f mm", mpjpe));
  o.require(run.log.back().train_loss < 0.1 * run.log.front().train_loss, "training loss fell by less than 90%");
  o.require(run.seconds < 600.0, "runtime " + fmt("%.0f s", run.seconds));
  o.detail = (o.pass ? "" : o.detail + "; ") + "MPJPE " + fmt("%.3f", run.log.front().train_mpjpe) + " -> " +
             fmt("%.3f mm", mpjpe) + ", loss " + fmt("%.3f", run.log.front().train_loss) + " -> " +
             fmt("%.4f", run.log.back().train_loss) + ", " + fmt("%.0f s", run.seconds);
  return o;
}

Outcome stagewise() {
  Outcome o;
  OverfitRun& run = overfit_run();
  const RunConfig cfg = overfit_config();
  const auto windows = extract_windows(overfit_data(), cfg.model.history, cfg.model.future, 1);
  const std::vector<double> stages = stage_mpjpe(run.trainer->model(), windows);
  std::string row;
  for (std::size_t n = 0; n < stages.size(); ++n) {
    row += (n ? " -> " : "") + fmt("%.3f", stages[n]);
    if (n > 0) o.require(stages[n] <= stages[n - 1] * 1.02, "stage " + std::to_string(n + 1) + " rises");
  }
  o.detail = (o.pass ? "" : o.detail + "; ") + "stage MPJPE " + row + " mm";
  return o;
}

Outcome autoregressive() {
  Outcome o;
  RunConfig cfg = overfit_config();
  cfg.model.query = 10;
  cfg.model.future = 10;
  Trainer trainer(cfg, star4());
  Rng rng(1008);
  for (auto& s : trainer.model().refinement().stages) {
    s.output.weights = random_tensor(s.output.weights.shape(), rng, -0.05, 0.05);
  }
  const PoseSequence history = overfit_data().sequences()[0].subsequence(0, 20);
  const AutoregressiveResult a = predict_autoregressive(trainer.model(), history, 25);
  const AutoregressiveResult b = predict_autoregressive(trainer.model(), history, 25);
  o.require(a.passes == 3, std::to_string(a.passes) + " passes");
  o.require(a.frames.frames() == 25, std::to_string(a.frames.frames()) + " frames");
  o.require(a.frames.coords().to_vector() == b.frames.coords().to_vector(), "repeated calls differ");
  if (o.pass) o.detail = "3 passes, 25 frames, repeat bit-identical";
  return o;
}

std::vector<double> flat_parameters(const Model& model) {
  std::vector<double> out;
  model.for_each_parameter([&](const std::string&, const Tensor& t) {
    out.insert(out.end(), t.data().begin(), t.data().end());
  });
  model.for_each_running_stats([&](const std::string&, const RunningStats& s) {
    out.insert(out.end(), s.mean.data().begin(), s.mean.data().end());
    out.insert(out.end(), s.var.data().begin(), s.var.data().end());
  });
  return out;
}

Outcome persistence() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path() / "freqmrn_acceptance";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  RunConfig cfg = overfit_config();
  cfg.train.epochs = 6;
  const SequenceDataset data = overfit_data();
  Trainer straight(cfg, star4());
  const auto straight_log = train(straight, data);

  RunConfig first_half = cfg;
  first_half.train.epochs = 3;
  Trainer first(first_half, star4());
  train(first, data);
  first.save(dir / "mid.ckpt");
  Trainer resumed = Trainer::load(dir / "mid.ckpt");
  resumed.set_train_config(cfg.train);
  const auto resumed_log = train(resumed, data);
  o.require(flat_parameters(resumed.model()) == flat_parameters(straight.model()), "parameters differ after resume");
  o.require(!resumed_log.empty() && resumed_log.back().train_loss == straight_log.back().train_loss,
            "final losses differ after resume");
  o.require(resumed.rng().state() == straight.rng().state(), "rng state differs after resume");

  bool exact = true;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto path = dir / ("s" + std::to_string(i) + ".mseq");
    write_sequence_file(path, data.sequences()[i]);
    const PoseSequence back = read_sequence_file(path, data.skeleton());
    for (std::size_t k = 0; k < back.coords().size(); ++k) {
      exact = exact && back.coords()[k] == static_cast<double>(static_cast<float>(data.sequences()[i].coords()[k]));
    }
    write_sequence_file(dir / "again.mseq", back);
    std::ifstream a(path, std::ios::binary), b(dir / "again.mseq", std::ios::binary);
    exact = exact && std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {});
  }
  o.require(exact, "MSEQ round trip not exact at float32");
  std::filesystem::remove_all(dir);
  if (o.pass) o.detail = "3+3 epochs resumed == 6 straight (bit-identical); 8 MSEQ round trips exact";
  return o;
}

Outcome ablation() {
  Outcome o;
  struct Variant {
    std::string name;
    LossConfig loss;
  };
  std::vector<Variant> variants(4);
  variants[0].name = "full";
  variants[1].name = "w/o st weights";
  variants[1].loss.use_st_weights = false;
  variants[2].name = "w/o velocity";
  variants[2].loss.use_velocity = false;
  variants[3].name = "w/o query reconstruction";
  variants[3].loss.reconstruct_query = false;

  const SequenceDataset data = overfit_data();
  std::vector<double> finals;
  for (const auto& v : variants) {
    RunConfig cfg = overfit_config();
    cfg.train.epochs = 5;
    cfg.loss = v.loss;
    Trainer trainer(cfg, star4());
    try {
      const auto log = train(trainer, data);
      finals.push_back(log.back().train_loss);
    } catch (const std::exception& e) {
      o.require(false, v.name + " failed: " + e.what());
      finals.push_back(NAN);
    }
  }
  std::string row;
  for (std::size_t i = 0; i < finals.size(); ++i) {
    row += (i ? ", " : "") + variants[i].name + " " + fmt("%.6f", finals[i]);
    o.require(std::isfinite(finals[i]), variants[i].name + " loss not finite");
    for (std::size_t j = 0; j < i; ++j) {
      o.require(std::abs(finals[i] - finals[j]) > 1e-9, variants[i].name + " equals " + variants[j].name);
    }
  }
  o.detail = (o.pass ? "" : o.detail + "; ") + row;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-suite", gradient_suite},     {"transform-suite", transform_suite},
      {"attention-suite", attention_suite},   {"residual-identity-at-init", residual_identity},
      {"loss-suite", loss_suite},             {"overfit-experiment", overfit},
      {"stagewise-refinement", stagewise},    {"autoregressive-contract", autoregressive},
      {"determinism-and-persistence", persistence}, {"ablation-harness", ablation},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
