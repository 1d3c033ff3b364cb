#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <nlohmann/json.hpp>

#include "freqmrn/error.hpp"
#include "freqmrn/trainer.hpp"

namespace freqmrn {
namespace {

constexpr std::string_view kMagic = "FMRNCKPT";
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError(path_.string() + ": truncated checkpoint");
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t uint(int width) {
    const auto b = take(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void Trainer::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["config"] = nlohmann::json::parse(config_to_text(config_));
  header["skeleton"] = nlohmann::json::parse(skeleton_to_text(skeleton_));
  header["epoch"] = epoch_;
  header["rng_state"] = rng_.state();
  header["adam_step"] = adam_.step;
  header["config_hash"] = config_hash(config_.model, skeleton_);
  const std::string header_text = header.dump();

  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::string> names;
  model_.for_each_parameter([&](const std::string& name, const Tensor& t) {
    tensors.emplace_back("param/" + name, t);
    names.push_back(name);
  });
  model_.for_each_running_stats([&](const std::string& name, const RunningStats& s) {
    if (!s.initialized) return;
    tensors.emplace_back("stats/" + name + "/mean", s.mean);
    tensors.emplace_back("stats/" + name + "/var", s.var);
  });
  for (std::size_t i = 0; i < adam_.m.size(); ++i) {
    tensors.emplace_back("adam_m/" + names.at(i), adam_.m[i]);
    tensors.emplace_back("adam_v/" + names.at(i), adam_.v[i]);
  }

  std::string out(kMagic);
  put_u32(out, kVersion);
  put_u64(out, header_text.size());
  out += header_text;
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) put_tensor(out, name, t);
  put_u64(out, fnv1a64(out));

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot write checkpoint " + tmp.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Trainer Trainer::load(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() + 4 + 8 + 8 || std::string_view(bytes).substr(0, kMagic.size()) != kMagic) {
    throw FormatError(path.string() + ": not a checkpoint file");
  }
  const std::string_view body = std::string_view(bytes).substr(0, bytes.size() - 8);
  Reader tail(std::string_view(bytes).substr(bytes.size() - 8), path);
  if (tail.uint(8) != fnv1a64(body)) throw FormatError(path.string() + ": content hash mismatch (file corrupted)");

  Reader in(body, path);
  in.take(kMagic.size());
  const auto version = in.uint(4);
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = in.uint(8);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }

  std::map<std::string, Tensor> tensors;
  const auto count = in.uint(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name(in.take(in.uint(4)));
    const auto rank = in.uint(4);
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(in.uint(8));
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = std::bit_cast<double>(in.uint(8));
    tensors.emplace(name, Tensor(shape, std::move(data)));
  }
  if (!in.done()) throw FormatError(path.string() + ": trailing bytes after tensor table");

  try {
    const RunConfig config = config_from_text(header.at("config").dump());
    const Skeleton skeleton = skeleton_from_text(header.at("skeleton").dump());
    if (header.at("config_hash").get<std::uint64_t>() != config_hash(config.model, skeleton)) {
      throw FormatError(path.string() + ": config hash does not match the stored config");
    }
    Trainer trainer(config, skeleton);

    auto fetch = [&](const std::string& name, const Shape& shape) {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw FormatError(path.string() + ": missing tensor '" + name + "'");
      if (it->second.shape() != shape) {
        throw FormatError(path.string() + ": tensor '" + name + "' has shape " + shape_string(it->second.shape()) +
                          ", expected " + shape_string(shape));
      }
      return it->second;
    };
    std::vector<std::string> names;
    std::vector<Shape> shapes;
    trainer.model_.for_each_parameter([&](const std::string& name, Tensor& t) {
      t = fetch("param/" + name, t.shape());
      names.push_back(name);
      shapes.push_back(t.shape());
    });
    trainer.model_.for_each_running_stats([&](const std::string& name, RunningStats& s) {
      if (!tensors.count("stats/" + name + "/mean")) {
        s = RunningStats{};
        return;
      }
      const Shape shape = s.mean.shape();
      s.mean = fetch("stats/" + name + "/mean", shape);
      s.var = fetch("stats/" + name + "/var", shape);
      s.initialized = true;
    });
    if (tensors.count("adam_m/" + names.front())) {
      for (std::size_t i = 0; i < names.size(); ++i) {
        trainer.adam_.m.push_back(fetch("adam_m/" + names[i], shapes[i]));
        trainer.adam_.v.push_back(fetch("adam_v/" + names[i], shapes[i]));
      }
    }
    trainer.adam_.step = header.at("adam_step").get<std::uint64_t>();
    trainer.epoch_ = header.at("epoch").get<std::size_t>();
    trainer.rng_.set_state(header.at("rng_state").get<std::string>());
    return trainer;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
}

}  // namespace freqmrn
