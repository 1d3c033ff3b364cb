#include "freqmrn/kinematics.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "freqmrn/error.hpp"
#include "freqmrn/ops.hpp"

namespace freqmrn {

std::string_view units_name(Units units) { return units == Units::meters ? "meters" : "millimeters"; }

Units parse_units(std::string_view name) {
  if (name == "millimeters" || name == "mm") return Units::millimeters;
  if (name == "meters" || name == "m") return Units::meters;
  throw FormatError("unknown units '" + std::string(name) + "'");
}

double millimeters_per_unit(Units units) { return units == Units::meters ? 1000.0 : 1.0; }

Skeleton::Skeleton(std::string name, std::vector<std::string> joint_names, std::vector<KinematicChain> chains,
                   Units units)
    : name_(std::move(name)), joint_names_(std::move(joint_names)), chains_(std::move(chains)), units_(units) {
  const std::size_t joints = joint_names_.size();
  if (joints == 0) throw ConfigError("skeleton '" + name_ + "' has no joints");
  if (chains_.empty()) throw ConfigError("skeleton '" + name_ + "' has no kinematic chains");

  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  first_position_.assign(joints, ChainPosition{unset, unset});
  for (std::size_t c = 0; c < chains_.size(); ++c) {
    const auto& chain = chains_[c];
    if (chain.joints.empty()) throw ConfigError("chain " + std::to_string(c) + " lists no joints");
    if (chain.bone_lengths.size() + 1 != chain.joints.size()) {
      throw ConfigError("chain " + std::to_string(c) + " has " + std::to_string(chain.joints.size()) + " joints but " +
                        std::to_string(chain.bone_lengths.size()) + " bone lengths");
    }
    for (double b : chain.bone_lengths) {
      if (!(b > 0.0) || !std::isfinite(b)) {
        throw ConfigError("chain " + std::to_string(c) + " has a non-positive bone length");
      }
    }
    for (std::size_t p = 0; p < chain.joints.size(); ++p) {
      const std::size_t j = chain.joints[p];
      if (j >= joints) {
        throw ConfigError("chain " + std::to_string(c) + " references joint " + std::to_string(j) + " of " +
                          std::to_string(joints));
      }
      if (first_position_[j].chain == unset) first_position_[j] = ChainPosition{c, p};
    }
  }
  for (std::size_t j = 0; j < joints; ++j) {
    if (first_position_[j].chain == unset) {
      throw ConfigError("joint " + std::to_string(j) + " ('" + joint_names_[j] + "') is on no kinematic chain");
    }
  }
}

ChainPosition Skeleton::position_of(std::size_t joint) const {
  if (joint >= joint_count()) {
    throw BoundsError("joint " + std::to_string(joint) + " out of range for " + std::to_string(joint_count()));
  }
  return first_position_[joint];
}

double cumulative_bone_length(const Skeleton& skeleton, std::size_t chain, std::size_t position) {
  if (chain >= skeleton.chains().size()) {
    throw BoundsError("chain " + std::to_string(chain) + " out of range for " +
                      std::to_string(skeleton.chains().size()));
  }
  const auto& bones = skeleton.chains()[chain].bone_lengths;
  if (position < 1 || position > bones.size()) {
    throw BoundsError("chain position " + std::to_string(position) + " outside [1, " + std::to_string(bones.size()) +
                      "]");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < position; ++i) total += bones[i];
  return total;
}

Skeleton synthetic_skeleton(const SyntheticSkeletonSpec& spec) {
  if (spec.chains == 0) throw ConfigError("synthetic skeleton needs at least one chain");
  if (spec.joints_per_chain == 0) throw ConfigError("synthetic skeleton needs at least one joint per chain");
  if (!(spec.bone_length > 0.0)) throw ConfigError("synthetic skeleton needs a positive bone length");

  std::vector<std::string> names{"root"};
  std::vector<KinematicChain> chains;
  for (std::size_t c = 0; c < spec.chains; ++c) {
    KinematicChain chain;
    chain.joints.push_back(0);
    for (std::size_t k = 1; k < spec.joints_per_chain; ++k) {
      chain.joints.push_back(names.size());
      chain.bone_lengths.push_back(spec.bone_length);
      names.push_back("chain" + std::to_string(c) + "_joint" + std::to_string(k));
    }
    chains.push_back(std::move(chain));
  }
  std::ostringstream name;
  name << "synthetic_" << spec.chains << "x" << spec.joints_per_chain;
  return Skeleton(name.str(), std::move(names), std::move(chains), Units::millimeters);
}

Skeleton human22_skeleton() {
  std::vector<std::string> names{
      "right_knee", "right_ankle",    "right_foot",  "right_toe",   "left_knee",      "left_ankle",
      "left_foot",  "left_toe",       "spine",       "thorax",      "neck",           "head",
      "left_shoulder", "left_elbow",  "left_wrist",  "left_hand",   "left_thumb",     "right_shoulder",
      "right_elbow",   "right_wrist", "right_hand",  "right_thumb"};
  // The pelvis is pruned; the legs hang from the spine joint through a
  // virtual hip segment.
  std::vector<KinematicChain> chains{
      {{8, 9, 10, 11}, {233.4, 257.1, 121.1}},
      {{8, 0, 1, 2, 3}, {487.0, 454.2, 162.8, 75.0}},
      {{8, 4, 5, 6, 7}, {487.0, 454.2, 162.8, 75.0}},
      {{9, 12, 13, 14, 15, 16}, {151.0, 278.9, 251.7, 100.0, 50.0}},
      {{9, 17, 18, 19, 20, 21}, {151.0, 278.9, 251.7, 100.0, 50.0}},
  };
  return Skeleton("human22", std::move(names), std::move(chains), Units::millimeters);
}

std::string skeleton_to_text(const Skeleton& skeleton) {
  nlohmann::ordered_json doc;
  doc["name"] = skeleton.name();
  doc["joint_count"] = skeleton.joint_count();
  doc["joint_names"] = skeleton.joint_names();
  doc["units"] = units_name(skeleton.units());
  auto chains = nlohmann::ordered_json::array();
  for (const auto& chain : skeleton.chains()) {
    nlohmann::ordered_json c;
    c["joints"] = chain.joints;
    c["bone_lengths"] = chain.bone_lengths;
    chains.push_back(std::move(c));
  }
  doc["chains"] = std::move(chains);
  return doc.dump(2) + "\n";
}

Skeleton skeleton_from_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("skeleton file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("skeleton file must hold an object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "name" && key != "joint_count" && key != "joint_names" && key != "units" && key != "chains") {
      throw FormatError("unknown skeleton field '" + key + "'");
    }
  }
  try {
    const auto names = doc.at("joint_names").get<std::vector<std::string>>();
    const auto count = doc.at("joint_count").get<std::size_t>();
    if (count != names.size()) {
      throw FormatError("joint_count " + std::to_string(count) + " disagrees with " + std::to_string(names.size()) +
                        " joint names");
    }
    std::vector<KinematicChain> chains;
    for (const auto& c : doc.at("chains")) {
      chains.push_back(KinematicChain{c.at("joints").get<std::vector<std::size_t>>(),
                                      c.at("bone_lengths").get<std::vector<double>>()});
    }
    const Units units = parse_units(doc.value("units", std::string("millimeters")));
    return Skeleton(doc.value("name", std::string("unnamed")), names, std::move(chains), units);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed skeleton file: ") + e.what());
  }
}

Skeleton read_skeleton_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open skeleton file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return skeleton_from_text(buffer.str());
}

void write_skeleton_file(const std::filesystem::path& path, const Skeleton& skeleton) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write skeleton file " + path.string());
  out << skeleton_to_text(skeleton);
  if (!out) throw FormatError("failed writing skeleton file " + path.string());
}

PoseSequence::PoseSequence(Tensor coords, double frame_rate, std::string skeleton_name)
    : coords_(coords.detached()), frame_rate_(frame_rate), skeleton_name_(std::move(skeleton_name)) {
  if (coords_.rank() != 3 || coords_.dim(2) != 3) {
    throw DimensionError("pose sequence must be [T x J x 3], got " + shape_string(coords_.shape()));
  }
  if (coords_.dim(1) == 0) throw DimensionError("pose sequence has no joints");
  if (!(frame_rate_ > 0.0)) throw ConfigError("frame rate must be positive");
  const std::size_t per_frame = coords_.dim(1) * 3;
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    if (!std::isfinite(coords_[i])) {
      throw DataError("non-finite coordinate at frame " + std::to_string(i / per_frame) + ", joint " +
                      std::to_string((i % per_frame) / 3));
    }
  }
}

PoseSequence PoseSequence::empty(std::size_t joints, double frame_rate, std::string skeleton_name) {
  return PoseSequence(Tensor::zeros({0, joints, 3}), frame_rate, std::move(skeleton_name));
}

PoseSequence PoseSequence::subsequence(std::size_t begin, std::size_t end) const {
  if (begin > end || end > frames()) {
    throw BoundsError("frames [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside a sequence of " +
                      std::to_string(frames()));
  }
  const std::size_t per_frame = joints() * 3;
  auto data = coords_.data();
  std::vector<double> values(data.begin() + static_cast<std::ptrdiff_t>(begin * per_frame),
                             data.begin() + static_cast<std::ptrdiff_t>(end * per_frame));
  return PoseSequence(Tensor({end - begin, joints(), 3}, std::move(values)), frame_rate_, skeleton_name_);
}

std::vector<double> mpjpe_at_frames(const PoseSequence& pred, const PoseSequence& truth,
                                    const std::vector<std::size_t>& frames) {
  if (pred.joints() != truth.joints()) {
    throw DimensionError("mpjpe: " + std::to_string(pred.joints()) + " predicted joints vs " +
                         std::to_string(truth.joints()) + " ground-truth joints");
  }
  std::vector<double> errors;
  errors.reserve(frames.size());
  const std::size_t joints = pred.joints();
  for (std::size_t f : frames) {
    if (f >= pred.frames() || f >= truth.frames()) {
      throw BoundsError("mpjpe: frame " + std::to_string(f) + " outside sequences of " +
                        std::to_string(pred.frames()) + " and " + std::to_string(truth.frames()) + " frames");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < joints; ++j) {
      const double dx = pred(f, j, 0) - truth(f, j, 0);
      const double dy = pred(f, j, 1) - truth(f, j, 1);
      const double dz = pred(f, j, 2) - truth(f, j, 2);
      total += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    errors.push_back(total / static_cast<double>(joints));
  }
  return errors;
}

std::vector<double> mpjpe_at_frames(const std::vector<PoseSequence>& preds, const std::vector<PoseSequence>& truths,
                                    const std::vector<std::size_t>& frames) {
  if (preds.size() != truths.size()) throw DimensionError("mpjpe: prediction and ground-truth counts differ");
  std::vector<double> mean(frames.size(), 0.0);
  if (preds.empty()) return mean;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto e = mpjpe_at_frames(preds[s], truths[s], frames);
    for (std::size_t i = 0; i < e.size(); ++i) mean[i] += e[i];
  }
  for (auto& m : mean) m /= static_cast<double>(preds.size());
  return mean;
}

Tensor pose_channels(const Tensor& frames) {
  if (frames.rank() == 3 && frames.dim(2) == 3) {
    return transpose(reshape(frames, {frames.dim(0), frames.dim(1) * 3}));
  }
  if (frames.rank() == 4 && frames.dim(3) == 3) {
    return transpose(reshape(frames, {frames.dim(0), frames.dim(1), frames.dim(2) * 3}));
  }
  throw DimensionError("pose_channels: expected [T x J x 3] or [B x T x J x 3], got " + shape_string(frames.shape()));
}

Tensor pose_frames(const Tensor& channels) {
  if (channels.rank() == 2 && channels.dim(0) % 3 == 0) {
    const Tensor t = transpose(channels);
    return reshape(t, {t.dim(0), channels.dim(0) / 3, 3});
  }
  if (channels.rank() == 3 && channels.dim(1) % 3 == 0) {
    const Tensor t = transpose(channels);
    return reshape(t, {t.dim(0), t.dim(1), channels.dim(1) / 3, 3});
  }
  throw DimensionError("pose_frames: expected [P x T] or [B x P x T] with P divisible by 3, got " +
                       shape_string(channels.shape()));
}

}  // namespace freqmrn
