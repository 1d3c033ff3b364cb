#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "freqmrn/config.hpp"
#include "freqmrn/data.hpp"
#include "freqmrn/error.hpp"
#include "freqmrn/trainer.hpp"

namespace freqmrn::cli {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool dry_run = false;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig config;
  if (!g.config_path.empty()) config = read_config_file(g.config_path);
  if (g.seed) config.seed = *g.seed;
  return config;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream test(probe);
    if (!test) throw Error("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

/// `key=value` switches shared by train and eval.
struct Ablation {
  std::optional<std::size_t> stages;
};

Ablation apply_ablation(const std::vector<std::string>& switches, LossConfig& loss) {
  Ablation a;
  for (const auto& s : switches) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--ablation expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq);
    const std::string value = s.substr(eq + 1);
    auto on_off = [&]() {
      if (value == "on") return true;
      if (value == "off") return false;
      throw UsageError("--ablation " + key + " expects on or off, got '" + value + "'");
    };
    if (key == "st_weights") {
      loss.use_st_weights = on_off();
    } else if (key == "velocity") {
      loss.use_velocity = on_off();
    } else if (key == "query_reconst") {
      loss.reconstruct_query = on_off();
    } else if (key == "st_loss") {
      loss.use_st_loss = on_off();
    } else if (key == "stage_supervision") {
      loss.supervise_stages = on_off();
    } else if (key == "stages") {
      try {
        std::size_t used = 0;
        const unsigned long n = std::stoul(value, &used);
        if (used != value.size() || n == 0) throw std::invalid_argument(value);
        a.stages = n;
      } catch (const std::exception&) {
        throw UsageError("--ablation stages expects a positive integer, got '" + value + "'");
      }
    } else {
      throw UsageError("unknown --ablation switch '" + key +
                       "' (known: st_weights, velocity, query_reconst, st_loss, stage_supervision, stages)");
    }
  }
  return a;
}

std::vector<double> parse_ms_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--frames-ms: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError("--frames-ms needs at least one value");
  return out;
}

nlohmann::json metrics_record(const EpochMetrics& m) {
  nlohmann::json j{{"epoch", m.epoch},
                   {"lr", m.learning_rate},
                   {"train_loss", m.train_loss},
                   {"train_mpjpe", m.train_mpjpe},
                   {"batches", m.batches}};
  j["val_mpjpe"] = m.val_mpjpe ? nlohmann::json(*m.val_mpjpe) : nlohmann::json(nullptr);
  return j;
}

int cmd_train(const Globals& g, const std::vector<std::string>& ablation, const std::string& resume,
              std::ostream& out) {
  RunConfig config = resolve_config(g);
  const Ablation a = apply_ablation(ablation, config.loss);
  if (a.stages) config.model.stages = *a.stages;
  config.validate();
  if (config.data.path.empty()) throw UsageError("data.path is required for training (set it in the config file)");
  const fs::path data_dir(config.data.path);
  if (!fs::is_directory(data_dir)) throw UsageError("data.path '" + config.data.path + "' is not a directory");

  const Skeleton skeleton = read_skeleton_file(data_dir / "skeleton.json");
  if (g.dry_run) {
    const Trainer trainer(config, skeleton);
    out << config_to_text(config);
    out << "parameters: " << trainer.model().parameter_count() << '\n';
    return kSuccess;
  }

  const fs::path out_dir = g.out_dir.empty() ? fs::path("run") : fs::path(g.out_dir);
  ensure_dir(out_dir);
  const SequenceDataset dataset = load_dataset(data_dir);
  Trainer trainer = resume.empty() ? Trainer(config, skeleton) : Trainer::load(resume);
  if (!resume.empty() && trainer.config().model != config.model) {
    throw UsageError("--resume checkpoint was trained with a different model section");
  }
  if (!resume.empty()) {
    trainer.set_train_config(config.train);
    trainer.set_loss_config(config.loss);
  }
  write_config_file(out_dir / "config.json", trainer.config());

  std::ofstream metrics(out_dir / "metrics.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw Error("cannot write " + (out_dir / "metrics.jsonl").string());
  const std::size_t every = config.train.checkpoint_every;
  train(trainer, dataset, [&](const EpochMetrics& m, Trainer& t) {
    metrics << metrics_record(m).dump() << '\n' << std::flush;
    out << "epoch " << m.epoch << "  loss " << m.train_loss << "  train_mpjpe " << m.train_mpjpe;
    if (m.val_mpjpe) out << "  val_mpjpe " << *m.val_mpjpe;
    out << '\n';
    if (every > 0 && m.epoch % every == 0) t.save(out_dir / ("checkpoint_" + std::to_string(m.epoch) + ".ckpt"));
  });
  trainer.save(out_dir / "checkpoint.ckpt");
  out << "wrote " << (out_dir / "checkpoint.ckpt").string() << '\n';
  return kSuccess;
}

int cmd_predict(const Globals& g, const std::string& checkpoint, const std::string& input, std::size_t horizon,
                const std::string& output, std::ostream& out) {
  Trainer trainer = Trainer::load(checkpoint);
  const PoseSequence history = read_sequence_file(input);
  if (history.skeleton_name() != trainer.skeleton().name() || history.joints() != trainer.skeleton().joint_count()) {
    throw SkeletonError("input sequence is bound to skeleton '" + history.skeleton_name() + "' (" +
                        std::to_string(history.joints()) + " joints) but the checkpoint was trained on '" +
                        trainer.skeleton().name() + "' (" + std::to_string(trainer.skeleton().joint_count()) +
                        " joints)");
  }
  if (g.dry_run) {
    out << "would predict " << horizon << " frames from " << history.frames() << " observed frames\n";
    return kSuccess;
  }
  const AutoregressiveResult result = predict_autoregressive(trainer.model(), history, horizon);
  fs::path target(output);
  if (target.has_parent_path()) ensure_dir(target.parent_path());
  write_sequence_file(target, result.frames);
  if (!g.out_dir.empty()) {
    ensure_dir(g.out_dir);
    write_config_file(fs::path(g.out_dir) / "config.json", trainer.config());
  }
  out << "wrote " << result.frames.frames() << " frames (" << result.passes << " refinement passes) to " << output
      << '\n';
  return kSuccess;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& data, const std::string& ms_text,
             bool stages, const std::vector<std::string>& ablation, std::size_t stride, std::ostream& out) {
  const std::vector<double> ms = parse_ms_list(ms_text);
  Trainer trainer = Trainer::load(checkpoint);
  LossConfig loss = trainer.config().loss;
  const Ablation a = apply_ablation(ablation, loss);
  trainer.set_loss_config(loss);
  const std::string data_dir = data.empty() ? trainer.config().data.path : data;
  if (data_dir.empty()) throw UsageError("eval needs --data or data.path in the checkpoint config");
  const SequenceDataset dataset = load_dataset(data_dir);
  if (dataset.skeleton().name() != trainer.skeleton().name()) {
    throw SkeletonError("dataset skeleton '" + dataset.skeleton().name() + "' does not match checkpoint skeleton '" +
                        trainer.skeleton().name() + "'");
  }
  if (g.dry_run) {
    out << "would evaluate " << dataset.size() << " sequences at " << ms.size() << " times\n";
    return kSuccess;
  }

  EvalOptions options;
  options.stride = stride;
  options.per_stage = stages;
  if (a.stages) options.stage_limit = *a.stages;
  MpjpeTable table = evaluate(trainer.model(), dataset, ms, options);
  const ModelConfig& mc = trainer.config().model;
  const auto loss_windows = extract_windows(dataset, mc.history, mc.future, stride);
  if (!loss_windows.empty() && !a.stages) table.loss = trainer.mean_loss(loss_windows);

  out << format_table(table);
  const fs::path out_dir = g.out_dir.empty() ? fs::path("eval") : fs::path(g.out_dir);
  ensure_dir(out_dir);
  std::ofstream record(out_dir / "eval.json", std::ios::trunc);
  if (!record) throw Error("cannot write " + (out_dir / "eval.json").string());
  record << table_to_text(table);
  write_config_file(out_dir / "config.json", trainer.config());
  return kSuccess;
}

int cmd_gen_synth(const Globals& g, std::optional<std::size_t> count, std::optional<std::string> kind,
                  std::ostream& out) {
  RunConfig config = resolve_config(g);
  if (count) config.synthetic.count = *count;
  if (kind) config.synthetic.motion.kind = parse_motion_kind(*kind);
  config.validate();
  if (g.out_dir.empty()) throw UsageError("gen-synth needs --out");
  const Skeleton skeleton = synthetic_skeleton(config.synthetic.skeleton);
  if (g.dry_run) {
    out << config_to_text(config);
    out << "would write " << config.synthetic.count << " sequences of " << config.synthetic.motion.frames
        << " frames\n";
    return kSuccess;
  }
  const fs::path dir(g.out_dir);
  ensure_dir(dir);
  write_skeleton_file(dir / "skeleton.json", skeleton);
  write_config_file(dir / "config.json", config);
  const SequenceDataset dataset =
      synthetic_dataset(skeleton, config.synthetic.motion, config.synthetic.count, config.seed);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "__%04zu.mseq", i);
    write_sequence_file(dir / (dataset.labels()[i] + name), dataset.sequences()[i]);
  }
  out << "wrote " << dataset.size() << " sequences and skeleton.json to " << dir.string() << '\n';
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-space motion refinement: train, predict, evaluate, generate data", "freqmrn"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--out", g.out_dir, "Output directory");
  app.add_flag("--dry-run", g.dry_run, "Resolve and report without doing the work");

  std::vector<std::string> ablation;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "Train a model on data.path");
  train_cmd->add_option("--ablation", ablation, "Loss/stage switch, e.g. velocity=off or stages=2");
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  std::string checkpoint;
  std::string input;
  std::string output;
  std::size_t horizon = 0;
  auto* predict_cmd = app.add_subcommand("predict", "Autoregressive prediction from an observed sequence");
  predict_cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--input", input, "Observed MSEQ sequence")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--horizon", horizon, "Frames to predict")->required();
  predict_cmd->add_option("--output", output, "Output MSEQ path")->required();

  std::string data;
  std::string frames_ms = "80,400,560,1000";
  bool stages = false;
  std::size_t stride = 1;
  auto* eval_cmd = app.add_subcommand("eval", "MPJPE table over a dataset directory");
  eval_cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data, "Dataset directory (default: data.path of the checkpoint)");
  eval_cmd->add_option("--frames-ms", frames_ms, "Comma-separated evaluation times in milliseconds");
  eval_cmd->add_flag("--stages", stages, "Add per-stage rows");
  eval_cmd->add_option("--ablation", ablation, "Loss/stage switch, e.g. query_reconst=off or stages=1");
  eval_cmd->add_option("--stride", stride, "Frame step between evaluation windows")->check(CLI::PositiveNumber);

  std::optional<std::size_t> count;
  std::optional<std::string> kind;
  auto* synth_cmd = app.add_subcommand("gen-synth", "Write a seeded synthetic corpus and its skeleton");
  synth_cmd->add_option("--count", count, "Number of sequences (default: synthetic.count)");
  synth_cmd->add_option("--kind", kind, "sinusoid, lissajous or piecewise-constant-velocity");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "freqmrn: " << e.what() << '\n';
    return kUsageError;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (train_cmd->parsed()) return cmd_train(g, ablation, resume, out);
    if (predict_cmd->parsed()) return cmd_predict(g, checkpoint, input, horizon, output, out);
    if (eval_cmd->parsed()) return cmd_eval(g, checkpoint, data, frames_ms, stages, ablation, stride, out);
    if (synth_cmd->parsed()) return cmd_gen_synth(g, count, kind, out);
  } catch (const UsageError& e) {
    err << "freqmrn: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "freqmrn: configuration error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "freqmrn: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace freqmrn::cli
