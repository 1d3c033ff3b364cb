#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "freqmrn/tensor.hpp"

namespace freqmrn {

enum class Units { millimeters, meters };

std::string_view units_name(Units units);
Units parse_units(std::string_view name);
/// Factor converting skeleton units to millimeters.
double millimeters_per_unit(Units units);

/// Root-outward joint path. bone_lengths[i] joins joints[i] and joints[i + 1].
struct KinematicChain {
  std::vector<std::size_t> joints;
  std::vector<double> bone_lengths;

  bool operator==(const KinematicChain&) const = default;
};

struct ChainPosition {
  std::size_t chain;
  /// 0 for the chain root, i for the joint reached after i bones.
  std::size_t position;

  bool operator==(const ChainPosition&) const = default;
};

class Skeleton {
 public:
  Skeleton(std::string name, std::vector<std::string> joint_names, std::vector<KinematicChain> chains,
           Units units = Units::millimeters);

  const std::string& name() const { return name_; }
  std::size_t joint_count() const { return joint_names_.size(); }
  const std::vector<std::string>& joint_names() const { return joint_names_; }
  const std::vector<KinematicChain>& chains() const { return chains_; }
  Units units() const { return units_; }

  /// Position of `joint` on the first chain that lists it.
  ChainPosition position_of(std::size_t joint) const;

  bool operator==(const Skeleton&) const = default;

 private:
  std::string name_;
  std::vector<std::string> joint_names_;
  std::vector<KinematicChain> chains_;
  Units units_;
  std::vector<ChainPosition> first_position_;
};

/// Sum of the first `position` bone lengths along chain `chain` (1-based
/// position, as in "the j'-th joint").
double cumulative_bone_length(const Skeleton& skeleton, std::size_t chain, std::size_t position);

struct SyntheticSkeletonSpec {
  std::size_t chains = 3;
  /// Including the shared root.
  std::size_t joints_per_chain = 2;
  double bone_length = 100.0;
};

/// Star-shaped skeleton: joint 0 is the root shared by every chain.
Skeleton synthetic_skeleton(const SyntheticSkeletonSpec& spec);

/// 22-joint human skeleton with a hand-built chain decomposition and typical
/// adult bone lengths. A reconstruction for experiments, not dataset ground
/// truth.
Skeleton human22_skeleton();

std::string skeleton_to_text(const Skeleton& skeleton);
Skeleton skeleton_from_text(std::string_view text);
Skeleton read_skeleton_file(const std::filesystem::path& path);
void write_skeleton_file(const std::filesystem::path& path, const Skeleton& skeleton);

/// Joint positions over time, [T x J x 3] in skeleton units.
class PoseSequence {
 public:
  PoseSequence(Tensor coords, double frame_rate, std::string skeleton_name);

  static PoseSequence empty(std::size_t joints, double frame_rate, std::string skeleton_name);

  std::size_t frames() const { return coords_.dim(0); }
  std::size_t joints() const { return coords_.dim(1); }
  const Tensor& coords() const { return coords_; }
  double frame_rate() const { return frame_rate_; }
  const std::string& skeleton_name() const { return skeleton_name_; }

  double operator()(std::size_t frame, std::size_t joint, std::size_t axis) const {
    return coords_[(frame * joints() + joint) * 3 + axis];
  }

  /// Frames [begin, end).
  PoseSequence subsequence(std::size_t begin, std::size_t end) const;

 private:
  Tensor coords_;
  double frame_rate_;
  std::string skeleton_name_;
};

/// Mean per-joint position error at each requested (0-based) frame.
std::vector<double> mpjpe_at_frames(const PoseSequence& pred, const PoseSequence& truth,
                                    const std::vector<std::size_t>& frames);

/// mpjpe_at_frames averaged over paired samples.
std::vector<double> mpjpe_at_frames(const std::vector<PoseSequence>& preds, const std::vector<PoseSequence>& truths,
                                    const std::vector<std::size_t>& frames);

/// Frame-major poses [T x J x 3] (or [B x T x J x 3]) to the coordinate-channel
/// layout [P x T] (or [B x P x T]) with P = 3J, row 3j + axis.
Tensor pose_channels(const Tensor& frames);

/// Inverse of pose_channels().
Tensor pose_frames(const Tensor& channels);

}  // namespace freqmrn
