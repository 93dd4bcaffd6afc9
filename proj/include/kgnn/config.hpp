#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kgnn/eval.hpp"
#include "kgnn/model.hpp"
#include "kgnn/sampler.hpp"
#include "kgnn/trainer.hpp"

namespace kgnn {

enum class RuntimeMode { kLocal, kDistributed };
enum class Transport { kInProcess, kTcp };

struct RuntimeConfig {
  RuntimeMode mode = RuntimeMode::kLocal;
  std::size_t workers = 1;
  // 0 selects max(1, workers / 2).
  std::size_t shards = 0;
  Transport transport = Transport::kInProcess;
  // TCP mode: one host:port per shard, and the coordinator address.
  std::vector<std::string> endpoints;
  std::string coordinator = "127.0.0.1:7700";
  // Server-side torn-read detection.
  bool debug_checksums = false;

  std::size_t effective_shards() const { return shards != 0 ? shards : std::max<std::size_t>(1, workers / 2); }
};

// Everything a command needs, parsed from a flat "section.key = value" file.
struct RunConfig {
  std::filesystem::path data_dir;
  bool inverse_edges = true;

  EncoderKind encoder = EncoderKind::kGnn;
  EncoderConfig enc;
  bool share_relations = false;
  DecoderKind decoder = DecoderKind::kTransH;
  Norm norm = Norm::kL2;

  SamplerConfig sampler;
  TrainConfig train;

  std::vector<RankMode> eval_modes{RankMode::kFiltered, RankMode::kRaw};
  EvalConfig eval;
  std::string eval_split = "test";
  std::uint64_t classification_seed = 0xC1A5;

  RuntimeConfig runtime;
  std::filesystem::path out_dir = "out";

  // Cross-field checks; throws ConfigError naming the offending key.
  void validate() const;
};

// Parses key=value lines; '#' starts a comment. Unknown keys and malformed values
// raise ConfigError with the key path. Relative data and output paths resolve against the
// file's directory.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

// Every key with its effective value; parse_config(render_config(c)) == c.
std::string render_config(const RunConfig& cfg);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace kgnn
