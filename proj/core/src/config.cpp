#include "freqmrn/config.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "freqmrn/error.hpp"

namespace freqmrn {
namespace {

using nlohmann::json;

/// Reads the keys of one JSON object section, rejecting any key that no
/// reader asked for.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + join(key) + "'");
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + join(key) + "' has the wrong type (" + std::string(kind_name<T>()) +
                        " expected)");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <typename T>
  static constexpr std::string_view kind_name() {
    if constexpr (std::is_same_v<T, bool>) return "boolean";
    else if constexpr (std::is_integral_v<T>) return "nonnegative integer";
    else if constexpr (std::is_floating_point_v<T>) return "number";
    else return "string";
  }

  std::string where() const { return path_.empty() ? "config document" : "config key '" + path_ + "'"; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void with_section(Section& parent, const std::string& key, Fn&& fn) {
  if (const json* node = parent.child(key)) {
    Section s(*node, parent.join(key));
    fn(s);
  }
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["model"] = {
      {"history", c.model.history},
      {"query", c.model.query},
      {"future", c.model.future},
      {"stages", c.model.stages},
      {"residual_pairs", c.model.residual_pairs},
      {"latent", c.model.latent},
      {"dropout", c.model.dropout},
      {"batchnorm_eps", c.model.batchnorm_eps},
      {"batchnorm_momentum", c.model.batchnorm_momentum},
      {"attention_bias", c.model.attention_bias},
      {"use_summary", c.model.use_summary},
  };
  j["loss"] = {
      {"use_st_loss", c.loss.use_st_loss},
      {"use_st_weights", c.loss.use_st_weights},
      {"use_velocity", c.loss.use_velocity},
      {"reconstruct_query", c.loss.reconstruct_query},
      {"supervise_stages", c.loss.supervise_stages},
      {"spatial_floor", c.loss.spatial_floor},
      {"temporal_form", std::string(temporal_form_name(c.loss.temporal_form))},
  };
  j["optimizer"] = {
      {"learning_rate", c.optimizer.learning_rate},
      {"lr_decay", c.optimizer.lr_decay},
      {"beta1", c.optimizer.adam.beta1},
      {"beta2", c.optimizer.adam.beta2},
      {"epsilon", c.optimizer.adam.epsilon},
      {"weight_decay", c.optimizer.adam.weight_decay},
      {"grad_clip", c.optimizer.grad_clip},
  };
  j["train"] = {
      {"epochs", c.train.epochs},
      {"batch_size", c.train.batch_size},
      {"stride", c.train.stride},
      {"val_fraction", c.train.val_fraction},
      {"checkpoint_every", c.train.checkpoint_every},
  };
  j["data"] = {{"path", c.data.path}};
  j["synthetic"] = {
      {"kind", std::string(motion_kind_name(c.synthetic.motion.kind))},
      {"amplitude", c.synthetic.motion.amplitude},
      {"period", c.synthetic.motion.period},
      {"frames", c.synthetic.motion.frames},
      {"frame_rate", c.synthetic.motion.frame_rate},
      {"count", c.synthetic.count},
      {"chains", c.synthetic.skeleton.chains},
      {"joints_per_chain", c.synthetic.skeleton.joints_per_chain},
      {"bone_length", c.synthetic.skeleton.bone_length},
  };
  return j;
}

}  // namespace

bool SyntheticConfig::operator==(const SyntheticConfig& o) const {
  return skeleton.chains == o.skeleton.chains && skeleton.joints_per_chain == o.skeleton.joints_per_chain &&
         skeleton.bone_length == o.skeleton.bone_length && motion.kind == o.motion.kind &&
         motion.amplitude == o.motion.amplitude && motion.period == o.motion.period &&
         motion.frames == o.motion.frames && motion.frame_rate == o.motion.frame_rate && count == o.count;
}

void RunConfig::validate() const {
  model.validate();
  if (!(loss.spatial_floor > 0.0)) throw ConfigError("loss.spatial_floor must be positive");
  if (!loss.use_st_loss && !loss.use_velocity) {
    throw ConfigError("loss: at least one of use_st_loss and use_velocity must be enabled");
  }
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
  if (!(optimizer.lr_decay > 0.0)) throw ConfigError("optimizer.lr_decay must be positive");
  if (!(optimizer.adam.beta1 >= 0.0 && optimizer.adam.beta1 < 1.0)) throw ConfigError("optimizer.beta1 must lie in [0, 1)");
  if (!(optimizer.adam.beta2 >= 0.0 && optimizer.adam.beta2 < 1.0)) throw ConfigError("optimizer.beta2 must lie in [0, 1)");
  if (!(optimizer.adam.epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be positive");
  if (!(optimizer.adam.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be nonnegative");
  if (!(optimizer.grad_clip >= 0.0)) throw ConfigError("optimizer.grad_clip must be nonnegative");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (train.stride == 0) throw ConfigError("train.stride must be at least 1");
  if (!(train.val_fraction >= 0.0 && train.val_fraction < 1.0)) throw ConfigError("train.val_fraction must lie in [0, 1)");
  if (!(synthetic.motion.amplitude >= 0.0)) throw ConfigError("synthetic.amplitude must be nonnegative");
  if (!(synthetic.motion.period > 0.0)) throw ConfigError("synthetic.period must be positive");
  if (synthetic.motion.frames == 0) throw ConfigError("synthetic.frames must be at least 1");
  if (!(synthetic.motion.frame_rate > 0.0)) throw ConfigError("synthetic.frame_rate must be positive");
  if (synthetic.skeleton.chains == 0) throw ConfigError("synthetic.chains must be at least 1");
  if (synthetic.skeleton.joints_per_chain < 2) throw ConfigError("synthetic.joints_per_chain must be at least 2");
  if (!(synthetic.skeleton.bone_length > 0.0)) throw ConfigError("synthetic.bone_length must be positive");
}

std::string config_to_text(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig config_from_text(std::string_view text, const RunConfig& base) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = base;
  Section root(doc, "");
  root.read("seed", c.seed);
  with_section(root, "model", [&](Section& s) {
    s.read("history", c.model.history);
    s.read("query", c.model.query);
    s.read("future", c.model.future);
    s.read("stages", c.model.stages);
    s.read("residual_pairs", c.model.residual_pairs);
    s.read("latent", c.model.latent);
    s.read("dropout", c.model.dropout);
    s.read("batchnorm_eps", c.model.batchnorm_eps);
    s.read("batchnorm_momentum", c.model.batchnorm_momentum);
    s.read("attention_bias", c.model.attention_bias);
    s.read("use_summary", c.model.use_summary);
  });
  with_section(root, "loss", [&](Section& s) {
    s.read("use_st_loss", c.loss.use_st_loss);
    s.read("use_st_weights", c.loss.use_st_weights);
    s.read("use_velocity", c.loss.use_velocity);
    s.read("reconstruct_query", c.loss.reconstruct_query);
    s.read("supervise_stages", c.loss.supervise_stages);
    s.read("spatial_floor", c.loss.spatial_floor);
    std::string form(temporal_form_name(c.loss.temporal_form));
    s.read("temporal_form", form);
    c.loss.temporal_form = parse_temporal_form(form);
  });
  with_section(root, "optimizer", [&](Section& s) {
    s.read("learning_rate", c.optimizer.learning_rate);
    s.read("lr_decay", c.optimizer.lr_decay);
    s.read("beta1", c.optimizer.adam.beta1);
    s.read("beta2", c.optimizer.adam.beta2);
    s.read("epsilon", c.optimizer.adam.epsilon);
    s.read("weight_decay", c.optimizer.adam.weight_decay);
    s.read("grad_clip", c.optimizer.grad_clip);
  });
  with_section(root, "train", [&](Section& s) {
    s.read("epochs", c.train.epochs);
    s.read("batch_size", c.train.batch_size);
    s.read("stride", c.train.stride);
    s.read("val_fraction", c.train.val_fraction);
    s.read("checkpoint_every", c.train.checkpoint_every);
  });
  with_section(root, "data", [&](Section& s) { s.read("path", c.data.path); });
  with_section(root, "synthetic", [&](Section& s) {
    std::string kind(motion_kind_name(c.synthetic.motion.kind));
    s.read("kind", kind);
    c.synthetic.motion.kind = parse_motion_kind(kind);
    s.read("amplitude", c.synthetic.motion.amplitude);
    s.read("period", c.synthetic.motion.period);
    s.read("frames", c.synthetic.motion.frames);
    s.read("frame_rate", c.synthetic.motion.frame_rate);
    s.read("count", c.synthetic.count);
    s.read("chains", c.synthetic.skeleton.chains);
    s.read("joints_per_chain", c.synthetic.skeleton.joints_per_chain);
    s.read("bone_length", c.synthetic.skeleton.bone_length);
  });
  return c;
}

RunConfig read_config_file(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_text(text, base);
}

void write_config_file(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << config_to_text(config);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t config_hash(const ModelConfig& model, const Skeleton& skeleton) {
  RunConfig c;
  c.model = model;
  return fnv1a64(skeleton_to_text(skeleton), fnv1a64(to_json(c)["model"].dump()));
}

}  // namespace freqmrn
