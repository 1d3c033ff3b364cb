#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "freqmrn/kinematics.hpp"
#include "freqmrn/tensor.hpp"

namespace freqmrn {

/// MSEQ1 binary sequence file:
///   8-byte magic "MSEQ0001"
///   u32 J, u32 T, u32 frame rate in millihertz (little-endian)
///   u32 skeleton-name length, name bytes
///   T*J*3 little-endian float32, frame-major, joint-minor, xyz innermost
inline constexpr std::string_view kSequenceMagic = "MSEQ0001";

/// Loads a sequence; its skeleton_name() names the skeleton it is bound to.
PoseSequence read_sequence_file(const std::filesystem::path& path);
/// Loads and checks the binding against `skeleton` (name and joint count).
PoseSequence read_sequence_file(const std::filesystem::path& path, const Skeleton& skeleton);
/// Coordinates are stored at 32-bit precision.
void write_sequence_file(const std::filesystem::path& path, const PoseSequence& sequence);

/// CSV with header `frame,joint,x,y,z`, one row per frame and joint.
PoseSequence read_sequence_csv(const std::filesystem::path& path, const Skeleton& skeleton, double frame_rate);

class SequenceDataset {
 public:
  explicit SequenceDataset(Skeleton skeleton) : skeleton_(std::move(skeleton)) {}

  /// Adds a sequence bound to this dataset's skeleton; `label` may be empty.
  void add(PoseSequence sequence, std::string label = {});

  const Skeleton& skeleton() const { return skeleton_; }
  const std::vector<PoseSequence>& sequences() const { return sequences_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return sequences_.size(); }
  bool empty() const { return sequences_.empty(); }

 private:
  Skeleton skeleton_;
  std::vector<PoseSequence> sequences_;
  std::vector<std::string> labels_;
};

/// A directory holding `skeleton.json` and `*.mseq` files, loaded in file-name
/// order. A file named `<label>__<rest>.mseq` carries the action label.
SequenceDataset load_dataset(const std::filesystem::path& dir);

/// Splits off the last `fraction` of the sequences (rounded down) for validation.
std::pair<SequenceDataset, SequenceDataset> split_validation(const SequenceDataset& dataset, double fraction);

struct TrainingWindow {
  Tensor history;  // [H x J x 3]
  Tensor target;   // [F x J x 3]
  std::size_t sequence = 0;
  std::size_t start = 0;
};

/// Every [t, t + H) -> [t + H, t + H + F) window for t = 0, stride, ...
std::vector<TrainingWindow> extract_windows(const SequenceDataset& dataset, std::size_t history, std::size_t future,
                                            std::size_t stride);

enum class MotionKind { sinusoid, lissajous, piecewise_velocity };

std::string_view motion_kind_name(MotionKind kind);
MotionKind parse_motion_kind(std::string_view name);

struct SyntheticMotionSpec {
  MotionKind kind = MotionKind::sinusoid;
  double amplitude = 100.0;
  /// Oscillation period (segment length for piecewise_velocity), in frames.
  double period = 16.0;
  std::size_t frames = 60;
  double frame_rate = 25.0;
  std::uint64_t seed = 0;
};

/// Seeded articulated motion: every non-root joint moves about its rest
/// position with its own direction and phase. Sinusoids repeat exactly every
/// `period` frames when the period is an integer.
PoseSequence gen_synthetic(const Skeleton& skeleton, const SyntheticMotionSpec& spec);

/// `count` sequences of one motion kind, each with its own seed drawn from
/// `seed`; labelled with the motion kind name.
SequenceDataset synthetic_dataset(const Skeleton& skeleton, const SyntheticMotionSpec& spec, std::size_t count,
                                  std::uint64_t seed);

}  // namespace freqmrn
