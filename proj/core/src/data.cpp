#include "freqmrn/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "freqmrn/error.hpp"
#include "freqmrn/rng.hpp"

namespace freqmrn {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(path_.string() + ": truncated file (needed " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ")");
    }
    std::string_view out(bytes_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

using Vec3 = std::array<double, 3>;

Vec3 random_unit(Rng& rng) {
  for (;;) {
    Vec3 v{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 0.1 && n <= 1.0) return Vec3{v[0] / n, v[1] / n, v[2] / n};
  }
}

Vec3 orthogonal_unit(const Vec3& axis, Rng& rng) {
  for (;;) {
    Vec3 v = random_unit(rng);
    const double d = v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2];
    for (int i = 0; i < 3; ++i) v[i] -= d * axis[i];
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 0.1) return Vec3{v[0] / n, v[1] / n, v[2] / n};
  }
}

}  // namespace

PoseSequence read_sequence_file(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  ByteReader in(bytes, path);
  if (in.take(kSequenceMagic.size()) != kSequenceMagic) {
    throw FormatError(path.string() + ": bad magic, not an MSEQ0001 sequence file");
  }
  const std::uint32_t joints = in.u32();
  const std::uint32_t frames = in.u32();
  const std::uint32_t rate_mhz = in.u32();
  const std::uint32_t name_len = in.u32();
  const std::string name(in.take(name_len));
  if (joints == 0) throw FormatError(path.string() + ": zero joints");
  if (rate_mhz == 0) throw FormatError(path.string() + ": zero frame rate");
  const std::size_t count = static_cast<std::size_t>(frames) * joints * 3;
  if (in.remaining() != count * 4) {
    throw FormatError(path.string() + ": expected " + std::to_string(count * 4) + " coordinate bytes, found " +
                      std::to_string(in.remaining()));
  }
  std::vector<double> coords(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = std::bit_cast<float>(in.u32());
    if (!std::isfinite(v)) {
      throw DataError(path.string() + ": non-finite coordinate at frame " + std::to_string(i / (joints * 3u)) +
                      ", joint " + std::to_string((i / 3) % joints));
    }
    coords[i] = static_cast<double>(v);
  }
  return PoseSequence(Tensor({frames, joints, 3}, std::move(coords)), rate_mhz / 1000.0, name);
}

PoseSequence read_sequence_file(const std::filesystem::path& path, const Skeleton& skeleton) {
  PoseSequence seq = read_sequence_file(path);
  if (seq.skeleton_name() != skeleton.name() || seq.joints() != skeleton.joint_count()) {
    throw SkeletonError(path.string() + ": sequence bound to '" + seq.skeleton_name() + "' with " +
                        std::to_string(seq.joints()) + " joints, expected '" + skeleton.name() + "' with " +
                        std::to_string(skeleton.joint_count()));
  }
  return seq;
}

void write_sequence_file(const std::filesystem::path& path, const PoseSequence& sequence) {
  std::string out(kSequenceMagic);
  put_u32(out, static_cast<std::uint32_t>(sequence.joints()));
  put_u32(out, static_cast<std::uint32_t>(sequence.frames()));
  put_u32(out, static_cast<std::uint32_t>(std::llround(sequence.frame_rate() * 1000.0)));
  put_u32(out, static_cast<std::uint32_t>(sequence.skeleton_name().size()));
  out += sequence.skeleton_name();
  for (double v : sequence.coords().data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw FormatError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw FormatError("failed writing " + path.string());
}

PoseSequence read_sequence_csv(const std::filesystem::path& path, const Skeleton& skeleton, double frame_rate) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
  line.erase(std::remove_if(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\r'; }), line.end());
  if (line != "frame,joint,x,y,z") throw FormatError(path.string() + ": expected header 'frame,joint,x,y,z'");

  const std::size_t joints = skeleton.joint_count();
  std::vector<std::array<double, 3>> values;
  std::vector<bool> seen;
  std::size_t frames = 0;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    long long frame = -1;
    long long joint = -1;
    std::array<double, 3> xyz{};
    if (!(fields >> frame >> joint >> xyz[0] >> xyz[1] >> xyz[2]) || frame < 0 || joint < 0) {
      throw FormatError(path.string() + ": malformed row " + std::to_string(row));
    }
    if (static_cast<std::size_t>(joint) >= joints) {
      throw SkeletonError(path.string() + ": row " + std::to_string(row) + " references joint " +
                          std::to_string(joint) + " but '" + skeleton.name() + "' has " + std::to_string(joints));
    }
    const std::size_t f = static_cast<std::size_t>(frame);
    if (f >= frames) {
      frames = f + 1;
      values.resize(frames * joints);
      seen.resize(frames * joints, false);
    }
    values[f * joints + static_cast<std::size_t>(joint)] = xyz;
    seen[f * joints + static_cast<std::size_t>(joint)] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      throw DataError(path.string() + ": missing frame " + std::to_string(i / joints) + ", joint " +
                      std::to_string(i % joints));
    }
  }
  std::vector<double> flat;
  flat.reserve(values.size() * 3);
  for (const auto& v : values) flat.insert(flat.end(), v.begin(), v.end());
  return PoseSequence(Tensor({frames, joints, 3}, std::move(flat)), frame_rate, skeleton.name());
}

void SequenceDataset::add(PoseSequence sequence, std::string label) {
  if (sequence.joints() != skeleton_.joint_count() || sequence.skeleton_name() != skeleton_.name()) {
    throw SkeletonError("sequence bound to '" + sequence.skeleton_name() + "' (" + std::to_string(sequence.joints()) +
                        " joints) added to a '" + skeleton_.name() + "' dataset (" +
                        std::to_string(skeleton_.joint_count()) + " joints)");
  }
  sequences_.push_back(std::move(sequence));
  labels_.push_back(std::move(label));
}

SequenceDataset load_dataset(const std::filesystem::path& dir) {
  const auto skeleton_path = dir / "skeleton.json";
  if (!std::filesystem::exists(skeleton_path)) throw FormatError("dataset " + dir.string() + " has no skeleton.json");
  SequenceDataset dataset(read_skeleton_file(skeleton_path));
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mseq") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    const std::string stem = file.stem().string();
    const auto sep = stem.find("__");
    dataset.add(read_sequence_file(file, dataset.skeleton()), sep == std::string::npos ? std::string() : stem.substr(0, sep));
  }
  return dataset;
}

std::pair<SequenceDataset, SequenceDataset> split_validation(const SequenceDataset& dataset, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  const std::size_t held_out =
      static_cast<std::size_t>(std::floor(static_cast<double>(dataset.size()) * fraction + 1e-9));
  SequenceDataset train(dataset.skeleton());
  SequenceDataset val(dataset.skeleton());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto& target = i + held_out < dataset.size() ? train : val;
    target.add(dataset.sequences()[i], dataset.labels()[i]);
  }
  return {std::move(train), std::move(val)};
}

std::vector<TrainingWindow> extract_windows(const SequenceDataset& dataset, std::size_t history, std::size_t future,
                                            std::size_t stride) {
  if (stride == 0) throw ConfigError("window stride must be at least 1");
  std::vector<TrainingWindow> windows;
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    const PoseSequence& seq = dataset.sequences()[s];
    if (seq.frames() < history + future) continue;
    for (std::size_t t = 0; t + history + future <= seq.frames(); t += stride) {
      windows.push_back(TrainingWindow{seq.subsequence(t, t + history).coords(),
                                       seq.subsequence(t + history, t + history + future).coords(), s, t});
    }
  }
  return windows;
}

std::string_view motion_kind_name(MotionKind kind) {
  switch (kind) {
    case MotionKind::sinusoid:
      return "sinusoid";
    case MotionKind::lissajous:
      return "lissajous";
    case MotionKind::piecewise_velocity:
      return "piecewise-constant-velocity";
  }
  return "sinusoid";
}

MotionKind parse_motion_kind(std::string_view name) {
  if (name == "sinusoid") return MotionKind::sinusoid;
  if (name == "lissajous") return MotionKind::lissajous;
  if (name == "piecewise-constant-velocity" || name == "piecewise_velocity") return MotionKind::piecewise_velocity;
  throw ConfigError("unknown synthetic motion kind '" + std::string(name) + "'");
}

PoseSequence gen_synthetic(const Skeleton& skeleton, const SyntheticMotionSpec& spec) {
  if (!(spec.amplitude >= 0.0) || !std::isfinite(spec.amplitude)) throw ConfigError("amplitude must be nonnegative");
  if (!(spec.period > 0.0)) throw ConfigError("period must be positive");
  if (spec.frames == 0) throw ConfigError("synthetic sequence needs at least one frame");
  if (!(spec.frame_rate > 0.0)) throw ConfigError("frame rate must be positive");

  const std::size_t joints = skeleton.joint_count();
  Rng rng(spec.seed);

  std::vector<Vec3> rest(joints, Vec3{0.0, 0.0, 0.0});
  std::vector<bool> placed(joints, false);
  for (const auto& chain : skeleton.chains()) {
    const Vec3 dir = random_unit(rng);
    placed[chain.joints[0]] = true;
    for (std::size_t p = 1; p < chain.joints.size(); ++p) {
      const std::size_t j = chain.joints[p];
      if (placed[j]) continue;
      const Vec3& prev = rest[chain.joints[p - 1]];
      for (int a = 0; a < 3; ++a) rest[j][a] = prev[a] + chain.bone_lengths[p - 1] * dir[a];
      placed[j] = true;
    }
  }

  std::vector<bool> moving(joints);
  std::vector<Vec3> axis(joints);
  std::vector<Vec3> axis2(joints);
  std::vector<double> phase(joints);
  std::vector<double> phase2(joints);
  for (std::size_t j = 0; j < joints; ++j) {
    moving[j] = skeleton.position_of(j).position > 0;
    axis[j] = random_unit(rng);
    axis2[j] = orthogonal_unit(axis[j], rng);
    phase[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    phase2[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  const double amp = spec.amplitude;
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> coords(spec.frames * joints * 3);
  std::vector<Vec3> position = rest;
  std::vector<Vec3> velocity(joints, Vec3{0.0, 0.0, 0.0});
  const std::size_t segment = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.period)));

  for (std::size_t t = 0; t < spec.frames; ++t) {
    // Reduce time modulo the period first so integer periods repeat exactly.
    const double cycle = std::fmod(static_cast<double>(t), spec.period) / spec.period;
    if (spec.kind == MotionKind::piecewise_velocity && t % segment == 0) {
      for (std::size_t j = 0; j < joints; ++j) {
        const Vec3 dir = random_unit(rng);
        for (int a = 0; a < 3; ++a) velocity[j][a] = amp / static_cast<double>(segment) * dir[a];
      }
    }
    for (std::size_t j = 0; j < joints; ++j) {
      Vec3 p = rest[j];
      if (moving[j]) {
        switch (spec.kind) {
          case MotionKind::sinusoid: {
            const double s = amp * std::sin(two_pi * cycle + phase[j]);
            for (int a = 0; a < 3; ++a) p[a] += s * axis[j][a];
            break;
          }
          case MotionKind::lissajous: {
            const double s1 = amp * std::sin(two_pi * cycle + phase[j]);
            const double s2 = amp * std::sin(2.0 * two_pi * cycle + phase2[j]);
            for (int a = 0; a < 3; ++a) p[a] += s1 * axis[j][a] + s2 * axis2[j][a];
            break;
          }
          case MotionKind::piecewise_velocity:
            p = position[j];
            for (int a = 0; a < 3; ++a) position[j][a] += velocity[j][a];
            break;
        }
      }
      for (int a = 0; a < 3; ++a) coords[(t * joints + j) * 3 + static_cast<std::size_t>(a)] = p[a];
    }
  }
  return PoseSequence(Tensor({spec.frames, joints, 3}, std::move(coords)), spec.frame_rate, skeleton.name());
}

SequenceDataset synthetic_dataset(const Skeleton& skeleton, const SyntheticMotionSpec& spec, std::size_t count,
                                  std::uint64_t seed) {
  SequenceDataset dataset(skeleton);
  Rng seeds(seed);
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticMotionSpec s = spec;
    s.seed = seeds.next();
    dataset.add(gen_synthetic(skeleton, s), std::string(motion_kind_name(spec.kind)));
  }
  return dataset;
}

}  // namespace freqmrn
