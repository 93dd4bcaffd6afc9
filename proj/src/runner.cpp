#include "kgnn/runner.hpp"

#include <numeric>

#include "kgnn/bytes.hpp"
#include "kgnn/error.hpp"
#include "kgnn/log.hpp"
#include "kgnn/ps/runtime.hpp"

namespace kgnn {
namespace fs = std::filesystem;

namespace {

const char* const kSourceStems[] = {"train", "valid", "test", "attributes", "entity2id", "relation2id"};

std::optional<fs::path> find_source(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".tsv", ".txt"}) {
    fs::path p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

void fnv(std::uint64_t& h, std::span<const std::uint8_t> bytes) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
}

}  // namespace

std::uint64_t dataset_fingerprint(const fs::path& dir) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char* stem : kSourceStems) {
    auto p = find_source(dir, stem);
    if (!p) continue;
    const std::string name = p->filename().string();
    fnv(h, std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
    fnv(h, read_file_bytes(*p));
  }
  return h;
}

PrepareResult prepare_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LookupError("data directory " + dir.string() + " does not exist");
  const std::uint64_t fp = dataset_fingerprint(dir);
  const fs::path cache = dir / kGraphCacheName;
  PrepareResult out;
  if (fs::exists(cache)) {
    std::uint64_t stored = 0;
    try {
      const KnowledgeGraph g = load_graph_cache(cache, true, &stored);
      if (stored == fp) {
        out.up_to_date = true;
        out.entities = g.num_entities();
        out.relations = g.num_relations();
        out.triples = g.split().train.size() + g.split().valid.size() + g.split().test.size();
        return out;
      }
    } catch (const Error& e) {
      spdlog::warn("ignoring unreadable cache {}: {}", cache.string(), e.what());
    }
  }
  KnowledgeGraph g = build_graph(load_dataset(dir));
  g.entity_vocab().save(dir / "entities.vocab");
  g.relation_vocab().save(dir / "relations.vocab");
  save_graph_cache(cache, g, fp);
  out.entities = g.num_entities();
  out.relations = g.num_relations();
  out.triples = g.split().train.size() + g.split().valid.size() + g.split().test.size();
  return out;
}

KnowledgeGraph load_graph(const RunConfig& cfg) {
  const fs::path cache = cfg.data_dir / kGraphCacheName;
  if (fs::exists(cache)) {
    try {
      std::uint64_t stored = 0;
      KnowledgeGraph g = load_graph_cache(cache, cfg.inverse_edges, &stored);
      if (stored == dataset_fingerprint(cfg.data_dir)) return g;
      spdlog::info("graph cache in {} is stale; parsing the TSV files", cfg.data_dir.string());
    } catch (const CheckpointError& e) {
      spdlog::warn("ignoring unreadable cache {}: {}", cache.string(), e.what());
    }
  }
  return build_graph(load_dataset(cfg.data_dir), cfg.inverse_edges);
}

ModelSpec build_spec(const RunConfig& cfg, const KnowledgeGraph& g) {
  if (cfg.enc.use_attributes && cfg.encoder == EncoderKind::kGnn && !g.attributes()) {
    throw ConfigError("encoder.use_attributes", "dataset has no attributes file");
  }
  return make_model_spec(g, cfg.encoder, cfg.enc, cfg.decoder, cfg.norm, cfg.share_relations);
}

TrainResult run_training(const RunConfig& cfg, const KnowledgeGraph& g, const ModelSpec& spec,
                         const std::optional<fs::path>& out_dir, const TrainHooks& extra) {
  TrainHooks hooks = extra;
  hooks.out_dir = out_dir;
  if (out_dir) {
    fs::create_directories(*out_dir);
    save_config(*out_dir / "effective.conf", cfg);
  }
  if (cfg.train.patience > 0 && !hooks.validate && !g.split().valid.empty()) {
    hooks.validate = [&](const ParameterSet& params) {
      return link_prediction(spec, params, g, g.split().valid, RankMode::kFiltered, cfg.eval).hr(10);
    };
  }
  if (cfg.runtime.mode == RuntimeMode::kDistributed) {
    return ps::train_distributed(g, spec, cfg.train, cfg.sampler, cfg.runtime, hooks);
  }
  return train_local(g, spec, cfg.train, cfg.sampler, hooks);
}

std::span<const Triple> eval_split(const RunConfig& cfg, const KnowledgeGraph& g) {
  if (cfg.eval_split == "train") return g.split().train;
  if (cfg.eval_split == "valid") return g.split().valid;
  return g.split().test;
}

EvalReport run_evaluation(const RunConfig& cfg, const KnowledgeGraph& g, const ModelSpec& spec,
                          const ParameterSet& params, const std::optional<fs::path>& out_dir) {
  const auto split = eval_split(cfg, g);
  EvalReport report;
  for (auto mode : cfg.eval_modes) report.rankings.push_back(link_prediction(spec, params, g, split, mode, cfg.eval));
  report.classification = triplet_classification(spec, params, g, split, cfg.classification_seed, cfg.eval);
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_ranking_csv(*out_dir / "ranking.csv", report.rankings);
    write_classification_csv(*out_dir / "classification.csv", report.classification);
  }
  return report;
}

namespace {

double filtered_hr10(const RunConfig& cfg, const KnowledgeGraph& g, const ModelSpec& spec, const ParameterSet& params) {
  return link_prediction(spec, params, g, eval_split(cfg, g), RankMode::kFiltered, cfg.eval).hr(10);
}

double mean_epoch_seconds(const std::vector<EpochReport>& reports) {
  if (reports.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : reports) total += r.seconds;
  return total / static_cast<double>(reports.size());
}

template <typename Mutate>
SweepReport sweep(const char* axis, const RunConfig& base, const KnowledgeGraph& g,
                  const std::vector<std::size_t>& settings, const fs::path& out_dir, Mutate mutate) {
  if (settings.empty()) throw ConfigError(std::string("sweep.") + axis, "no settings given");
  for (std::size_t i = 1; i < settings.size(); ++i) {
    if (settings[i] <= settings[i - 1]) throw ConfigError(std::string("sweep.") + axis, "settings must be strictly increasing");
  }
  SweepReport report;
  report.axis = axis;
  for (auto s : settings) {
    RunConfig cfg = base;
    mutate(cfg, s);
    const fs::path run_dir = out_dir / (std::string(axis) + "-" + std::to_string(s));
    cfg.out_dir = run_dir;
    cfg.validate();
    fs::create_directories(run_dir);
    save_config(run_dir / "config.conf", cfg);
    const ModelSpec spec = build_spec(cfg, g);
    const TrainResult trained = run_training(cfg, g, spec, run_dir);
    SweepPoint p;
    p.setting = s;
    p.hr10 = filtered_hr10(cfg, g, spec, trained.params);
    p.epoch_seconds = mean_epoch_seconds(trained.reports);
    spdlog::info("{} = {}: filtered HR@10 {:.4f}, {:.3f} s/epoch", axis, s, p.hr10, p.epoch_seconds);
    report.points.push_back(p);
  }
  write_sweep_csv(out_dir / (std::string("sweep_") + axis + ".csv"), report);
  write_plot_data(out_dir / "plot", report);
  return report;
}

}  // namespace

SweepReport sweep_hops(const RunConfig& base, const KnowledgeGraph& g, const std::vector<std::size_t>& hops,
                       const fs::path& out_dir) {
  return sweep("hops", base, g, hops, out_dir, [](RunConfig& cfg, std::size_t k) {
    cfg.encoder = EncoderKind::kGnn;
    // Keep the configured per-hop fan-outs where they exist and extend with the last one.
    std::vector<std::size_t> fanout;
    for (std::size_t i = 0; i < k; ++i) {
      fanout.push_back(cfg.sampler.fanout_per_hop.empty()
                           ? SamplerConfig::default_fanout(k)[i]
                           : cfg.sampler.fanout_per_hop[std::min(i, cfg.sampler.fanout_per_hop.size() - 1)]);
    }
    cfg.enc.hops = k;
    cfg.sampler.fanout_per_hop = fanout;
  });
}

SweepReport sweep_workers(const RunConfig& base, const KnowledgeGraph& g, const std::vector<std::size_t>& workers,
                          const fs::path& out_dir) {
  return sweep("workers", base, g, workers, out_dir, [](RunConfig& cfg, std::size_t w) {
    cfg.runtime.mode = RuntimeMode::kDistributed;
    cfg.runtime.workers = w;
  });
}

}  // namespace kgnn
