#include "kgnn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "kgnn/error.hpp"

namespace kgnn {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key, "invalid number '" + v + "'");
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) { return parse_number<std::size_t>(key, v); }

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.starts_with("0x") || v.starts_with("0X")) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data() + 2, end, out, 16);
    if (ec != std::errc() || ptr != end) throw ConfigError(key, "invalid number '" + v + "'");
    return out;
  }
  return parse_number<std::uint64_t>(key, v);
}

double parse_real(const std::string& key, const std::string& v) { return parse_number<double>(key, v); }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key, "expected true|false, got '" + v + "'");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.dir", [](RunConfig& c, auto&, auto& v) { c.data_dir = v; }},
      {"data.inverse_edges", [](RunConfig& c, auto& k, auto& v) { c.inverse_edges = parse_bool(k, v); }},
      {"encoder.type", [](RunConfig& c, auto&, auto& v) { c.encoder = parse_encoder_kind(v); }},
      {"encoder.hops", [](RunConfig& c, auto& k, auto& v) { c.enc.hops = parse_size(k, v); }},
      {"encoder.dim", [](RunConfig& c, auto& k, auto& v) { c.enc.embed_dim = parse_size(k, v); }},
      {"encoder.attention_hidden", [](RunConfig& c, auto& k, auto& v) { c.enc.attention_hidden = parse_size(k, v); }},
      {"encoder.use_attributes", [](RunConfig& c, auto& k, auto& v) { c.enc.use_attributes = parse_bool(k, v); }},
      {"encoder.leaky_slope", [](RunConfig& c, auto& k, auto& v) { c.enc.leaky_slope = parse_real(k, v); }},
      {"encoder.strict", [](RunConfig& c, auto& k, auto& v) { c.enc.strict = parse_bool(k, v); }},
      {"encoder.share_relations", [](RunConfig& c, auto& k, auto& v) { c.share_relations = parse_bool(k, v); }},
      {"decoder.kind", [](RunConfig& c, auto&, auto& v) { c.decoder = parse_decoder_kind(v); }},
      {"decoder.norm", [](RunConfig& c, auto&, auto& v) { c.norm = parse_norm(v); }},
      {"sampler.fanout",
       [](RunConfig& c, auto& k, auto& v) {
         c.sampler.fanout_per_hop.clear();
         for (const auto& item : split_list(v)) c.sampler.fanout_per_hop.push_back(parse_size(k, item));
       }},
      {"sampler.negatives", [](RunConfig& c, auto& k, auto& v) { c.sampler.negatives_per_positive = parse_size(k, v); }},
      {"sampler.filter", [](RunConfig& c, auto& k, auto& v) { c.sampler.filter_false_negatives = parse_bool(k, v); }},
      {"sampler.mask_targets", [](RunConfig& c, auto& k, auto& v) { c.sampler.mask_targets = parse_bool(k, v); }},
      {"train.lr", [](RunConfig& c, auto& k, auto& v) { c.train.adam.lr = parse_real(k, v); }},
      {"train.beta1", [](RunConfig& c, auto& k, auto& v) { c.train.adam.beta1 = parse_real(k, v); }},
      {"train.beta2", [](RunConfig& c, auto& k, auto& v) { c.train.adam.beta2 = parse_real(k, v); }},
      {"train.eps", [](RunConfig& c, auto& k, auto& v) { c.train.adam.eps = parse_real(k, v); }},
      {"train.batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_size(k, v); }},
      {"train.margin", [](RunConfig& c, auto& k, auto& v) { c.train.margin = parse_real(k, v); }},
      {"train.epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = parse_size(k, v); }},
      {"train.seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = parse_u64(k, v); }},
      {"train.patience", [](RunConfig& c, auto& k, auto& v) { c.train.patience = parse_size(k, v); }},
      {"train.keep_checkpoints", [](RunConfig& c, auto& k, auto& v) { c.train.keep_checkpoints = parse_size(k, v); }},
      {"eval.modes",
       [](RunConfig& c, auto&, auto& v) {
         c.eval_modes.clear();
         for (const auto& item : split_list(v)) c.eval_modes.push_back(parse_rank_mode(item));
       }},
      {"eval.seed", [](RunConfig& c, auto& k, auto& v) { c.eval.seed = parse_u64(k, v); }},
      {"eval.fanout", [](RunConfig& c, auto& k, auto& v) { c.eval.fanout = parse_size(k, v); }},
      {"eval.chunk", [](RunConfig& c, auto& k, auto& v) { c.eval.chunk = parse_size(k, v); }},
      {"eval.threads", [](RunConfig& c, auto& k, auto& v) { c.eval.threads = parse_size(k, v); }},
      {"eval.split", [](RunConfig& c, auto&, auto& v) { c.eval_split = v; }},
      {"eval.classification_seed",
       [](RunConfig& c, auto& k, auto& v) { c.classification_seed = parse_u64(k, v); }},
      {"runtime.mode",
       [](RunConfig& c, auto& k, auto& v) {
         if (v == "local") c.runtime.mode = RuntimeMode::kLocal;
         else if (v == "distributed") c.runtime.mode = RuntimeMode::kDistributed;
         else throw ConfigError(k, "expected local|distributed, got '" + v + "'");
       }},
      {"runtime.workers", [](RunConfig& c, auto& k, auto& v) { c.runtime.workers = parse_size(k, v); }},
      {"runtime.shards", [](RunConfig& c, auto& k, auto& v) { c.runtime.shards = parse_size(k, v); }},
      {"runtime.transport",
       [](RunConfig& c, auto& k, auto& v) {
         if (v == "inproc") c.runtime.transport = Transport::kInProcess;
         else if (v == "tcp") c.runtime.transport = Transport::kTcp;
         else throw ConfigError(k, "expected inproc|tcp, got '" + v + "'");
       }},
      {"runtime.endpoints", [](RunConfig& c, auto&, auto& v) { c.runtime.endpoints = split_list(v); }},
      {"runtime.coordinator", [](RunConfig& c, auto&, auto& v) { c.runtime.coordinator = v; }},
      {"runtime.debug_checksums", [](RunConfig& c, auto& k, auto& v) { c.runtime.debug_checksums = parse_bool(k, v); }},
      {"output.dir", [](RunConfig& c, auto&, auto& v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (data_dir.empty()) throw ConfigError("data.dir", "required");
  if (enc.embed_dim == 0) throw ConfigError("encoder.dim", "must be positive");
  if (encoder == EncoderKind::kGnn) {
    if (enc.hops < 1 || enc.hops > 4) throw ConfigError("encoder.hops", "must be in 1..4");
    if (enc.attention_hidden == 0) throw ConfigError("encoder.attention_hidden", "must be positive");
    if (sampler.fanout_per_hop.size() != enc.hops) {
      throw ConfigError("sampler.fanout", "needs one entry per hop (" + std::to_string(enc.hops) + ")");
    }
  }
  if (!(enc.leaky_slope >= 0.0 && enc.leaky_slope < 1.0)) throw ConfigError("encoder.leaky_slope", "must be in [0, 1)");
  sampler.validate();
  train.validate();
  if (eval_modes.empty()) throw ConfigError("eval.modes", "at least one mode required");
  if (eval.fanout == 0) throw ConfigError("eval.fanout", "must be positive");
  if (eval.chunk == 0) throw ConfigError("eval.chunk", "must be positive");
  if (eval.threads == 0) throw ConfigError("eval.threads", "must be positive");
  if (eval_split != "test" && eval_split != "valid" && eval_split != "train") {
    throw ConfigError("eval.split", "expected test|valid|train");
  }
  if (runtime.workers == 0) throw ConfigError("runtime.workers", "must be positive");
  if (runtime.mode == RuntimeMode::kDistributed && runtime.transport == Transport::kTcp &&
      !runtime.endpoints.empty() && runtime.endpoints.size() != runtime.effective_shards()) {
    throw ConfigError("runtime.endpoints", "needs one endpoint per shard (" +
                                               std::to_string(runtime.effective_shards()) + ")");
  }
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  bool fanout_given = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key, "unknown key");
    it->second(cfg, key, value);
    fanout_given = fanout_given || key == "sampler.fanout";
  }
  if (!fanout_given) cfg.sampler.fanout_per_hop = SamplerConfig::default_fanout(std::max<std::size_t>(1, cfg.enc.hops));
  if (!base_dir.empty()) {
    if (!cfg.data_dir.empty() && cfg.data_dir.is_relative()) cfg.data_dir = (base_dir / cfg.data_dir).lexically_normal();
    if (cfg.out_dir.is_relative()) cfg.out_dir = (base_dir / cfg.out_dir).lexically_normal();
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string render_config(const RunConfig& c) {
  std::ostringstream out;
  auto kv = [&](const char* k, const std::string& v) { out << k << " = " << v << '\n'; };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::vector<std::string> fanout, modes;
  for (auto f : c.sampler.fanout_per_hop) fanout.push_back(std::to_string(f));
  for (auto m : c.eval_modes) modes.emplace_back(to_string(m));
  kv("data.dir", std::filesystem::absolute(c.data_dir).lexically_normal().string());
  kv("data.inverse_edges", b(c.inverse_edges));
  kv("encoder.type", std::string(to_string(c.encoder)));
  kv("encoder.hops", std::to_string(c.enc.hops));
  kv("encoder.dim", std::to_string(c.enc.embed_dim));
  kv("encoder.attention_hidden", std::to_string(c.enc.attention_hidden));
  kv("encoder.use_attributes", b(c.enc.use_attributes));
  kv("encoder.leaky_slope", real(c.enc.leaky_slope));
  kv("encoder.strict", b(c.enc.strict));
  kv("encoder.share_relations", b(c.share_relations));
  kv("decoder.kind", std::string(to_string(c.decoder)));
  kv("decoder.norm", std::string(to_string(c.norm)));
  kv("sampler.fanout", join(fanout));
  kv("sampler.negatives", std::to_string(c.sampler.negatives_per_positive));
  kv("sampler.filter", b(c.sampler.filter_false_negatives));
  kv("sampler.mask_targets", b(c.sampler.mask_targets));
  kv("train.lr", real(c.train.adam.lr));
  kv("train.beta1", real(c.train.adam.beta1));
  kv("train.beta2", real(c.train.adam.beta2));
  kv("train.eps", real(c.train.adam.eps));
  kv("train.batch_size", std::to_string(c.train.batch_size));
  kv("train.margin", real(c.train.margin));
  kv("train.epochs", std::to_string(c.train.epochs));
  kv("train.seed", std::to_string(c.train.seed));
  kv("train.patience", std::to_string(c.train.patience));
  kv("train.keep_checkpoints", std::to_string(c.train.keep_checkpoints));
  kv("eval.modes", join(modes));
  kv("eval.seed", std::to_string(c.eval.seed));
  kv("eval.fanout", std::to_string(c.eval.fanout));
  kv("eval.chunk", std::to_string(c.eval.chunk));
  kv("eval.threads", std::to_string(c.eval.threads));
  kv("eval.split", c.eval_split);
  kv("eval.classification_seed", std::to_string(c.classification_seed));
  kv("runtime.mode", c.runtime.mode == RuntimeMode::kLocal ? "local" : "distributed");
  kv("runtime.workers", std::to_string(c.runtime.workers));
  kv("runtime.shards", std::to_string(c.runtime.shards));
  kv("runtime.transport", c.runtime.transport == Transport::kTcp ? "tcp" : "inproc");
  kv("runtime.endpoints", join(c.runtime.endpoints));
  kv("runtime.coordinator", c.runtime.coordinator);
  kv("runtime.debug_checksums", b(c.runtime.debug_checksums));
  kv("output.dir", std::filesystem::absolute(c.out_dir).lexically_normal().string());
  return out.str();
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  out << render_config(cfg);
}

}  // namespace kgnn
