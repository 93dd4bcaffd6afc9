#include "kgnn/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>

#include "kgnn/error.hpp"

namespace kgnn {

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params) {
  std::map<ParamKind, Tensor::Shape> shapes;
  for (const auto& [key, value] : params) {
    auto [it, inserted] = shapes.emplace(key.kind, value.shape());
    if (!inserted && it->second != value.shape()) {
      throw DimensionError("checkpoint: mixed shapes for kind " + std::string(to_string(key.kind)));
    }
  }
  ByteWriter w;
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(shapes.size()));
  for (const auto& [kind, shape] : shapes) {
    w.u8(static_cast<std::uint8_t>(kind));
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto extent : shape) w.u32(static_cast<std::uint32_t>(extent));
  }
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [key, value] : params) {
    w.u8(static_cast<std::uint8_t>(key.kind));
    w.u64(key.id);
    w.u32(static_cast<std::uint32_t>(value.size()));
    for (double x : value.storage()) w.f64(x);
  }
  return w.take();
}

namespace {

ParameterSet decode_records(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 8) throw CheckpointError("checkpoint: file too short");
  if (r.u32() != kCheckpointMagic) throw CheckpointError("checkpoint: bad magic");
  if (auto v = r.u32(); v != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(v));
  }
  std::map<ParamKind, Tensor::Shape> shapes;
  const std::uint32_t n_kinds = r.u32();
  for (std::uint32_t i = 0; i < n_kinds; ++i) {
    auto kind = param_kind_from_byte(r.u8());
    if (!kind) throw CheckpointError("checkpoint: unknown parameter kind");
    Tensor::Shape shape(r.u32());
    for (auto& extent : shape) extent = r.u32();
    shapes[*kind] = std::move(shape);
  }
  ParameterSet out;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto kind = param_kind_from_byte(r.u8());
    if (!kind) throw CheckpointError("checkpoint: unknown parameter kind");
    const std::uint64_t id = r.u64();
    const std::uint32_t numel = r.u32();
    auto it = shapes.find(*kind);
    if (it == shapes.end() || shape_numel(it->second) != numel) {
      throw CheckpointError("checkpoint: record " + to_string(ParamKey{*kind, id}) + " disagrees with the dim table");
    }
    std::vector<double> data(numel);
    for (auto& x : data) x = r.f64();
    out.emplace(ParamKey{*kind, id}, Tensor(it->second, std::move(data)));
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return out;
}

}  // namespace

ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  try {
    return decode_records(bytes);
  } catch (const ProtocolError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  write_file_bytes(tmp, encode_checkpoint(params));
  std::filesystem::rename(tmp, path);
}

ParameterSet read_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const LookupError& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint(bytes);
}

std::filesystem::path checkpoint_name(std::size_t epoch) {
  return "checkpoint-epoch-" + std::to_string(epoch) + ".kgnn";
}

void publish_checkpoint(const std::filesystem::path& dir, const std::filesystem::path& written, std::size_t keep) {
  {
    std::ofstream out(dir / "latest.tmp", std::ios::trunc);
    out << written.filename().string() << "\n";
  }
  std::filesystem::rename(dir / "latest.tmp", dir / "latest");
  static const std::regex pattern(R"(checkpoint-epoch-(\d+)\.kgnn)");
  std::vector<std::pair<std::size_t, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoull(m[1].str()), entry.path());
  }
  std::sort(found.begin(), found.end());
  while (found.size() > keep) {
    if (found.front().second.filename() != written.filename()) std::filesystem::remove(found.front().second);
    found.erase(found.begin());
  }
}

std::filesystem::path resolve_checkpoint(const std::filesystem::path& dir_or_file) {
  if (!std::filesystem::is_directory(dir_or_file)) return dir_or_file;
  std::ifstream in(dir_or_file / "latest");
  std::string name;
  if (!in || !std::getline(in, name) || name.empty()) {
    throw CheckpointError("no 'latest' pointer in " + dir_or_file.string());
  }
  return dir_or_file / name;
}

}  // namespace kgnn
