#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "kgnn/config.hpp"
#include "kgnn/eval.hpp"
#include "kgnn/kg_store.hpp"
#include "kgnn/trainer.hpp"

namespace kgnn {

inline constexpr const char* kGraphCacheName = "graph.kgc";

// FNV-1a over the names and bytes of the split, attribute and id-mapping files.
std::uint64_t dataset_fingerprint(const std::filesystem::path& dir);

struct PrepareResult {
  bool up_to_date = false;
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t triples = 0;
};

// Parses the TSV splits and writes entities.vocab, relations.vocab and the binary
// graph cache into `dir`. A second call with unchanged inputs does nothing.
PrepareResult prepare_dataset(const std::filesystem::path& dir);

// Loads from the cache when it matches the source files, else from the TSVs.
KnowledgeGraph load_graph(const RunConfig& cfg);
ModelSpec build_spec(const RunConfig& cfg, const KnowledgeGraph& g);

// Trains under the configured runtime. With `out_dir` set, writes the effective
// config, epochs.csv and checkpoints there.
TrainResult run_training(const RunConfig& cfg, const KnowledgeGraph& g, const ModelSpec& spec,
                         const std::optional<std::filesystem::path>& out_dir, const TrainHooks& extra = {});

struct EvalReport {
  std::vector<RankingResult> rankings;
  ClassificationResult classification;
};

std::span<const Triple> eval_split(const RunConfig& cfg, const KnowledgeGraph& g);

// Link prediction in every configured mode plus triplet classification; CSVs go
// to out_dir when given.
EvalReport run_evaluation(const RunConfig& cfg, const KnowledgeGraph& g, const ModelSpec& spec,
                          const ParameterSet& params, const std::optional<std::filesystem::path>& out_dir);

// One training run per setting from a derived config written under out_dir.
SweepReport sweep_hops(const RunConfig& base, const KnowledgeGraph& g, const std::vector<std::size_t>& hops,
                       const std::filesystem::path& out_dir);
SweepReport sweep_workers(const RunConfig& base, const KnowledgeGraph& g, const std::vector<std::size_t>& workers,
                          const std::filesystem::path& out_dir);

}  // namespace kgnn
