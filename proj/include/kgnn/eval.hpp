#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kgnn/kg_store.hpp"
#include "kgnn/model.hpp"

namespace kgnn {

enum class RankMode { kRaw, kFiltered };
std::string_view to_string(RankMode mode);
RankMode parse_rank_mode(std::string_view s);

struct EvalConfig {
  // Independent of the training seed so two evaluations of one checkpoint agree.
  std::uint64_t seed = 0xE7A1;
  // Neighbour fan-out per entity for GNN encodings.
  std::size_t fanout = 16;
  // Entities encoded per forward pass.
  std::size_t chunk = 512;
  // Ranking threads; results are merged in test order.
  std::size_t threads = 1;
};

// Final representation of every entity, one row per id. Lookup models give unseen
// entities a zero row.
Tensor encode_entities(const ModelSpec& spec, const ParameterSet& params, const KnowledgeGraph& g,
                       const EvalConfig& cfg = {});

// Energy of every candidate as the tail (or head) of (h, r, ?) given the entity table.
std::vector<double> tail_energies(const ModelSpec& spec, const ParameterSet& params, const Tensor& table,
                                  EntityId head, RelationId r);
std::vector<double> head_energies(const ModelSpec& spec, const ParameterSet& params, const Tensor& table,
                                  RelationId r, EntityId tail);

struct TripleRanks {
  std::size_t head = 0;
  std::size_t tail = 0;
};

// Optimistic ranks: 1 + number of candidates with strictly lower energy. Filtered
// mode skips candidates forming another known triple.
TripleRanks rank_triple(const Triple& t, const ModelSpec& spec, const ParameterSet& params, const Tensor& table,
                        const KnowledgeGraph& g, RankMode mode);

struct SideMetrics {
  std::map<std::size_t, double> hits;  // k -> HR@k
  double mean_rank = 0.0;
};

struct RankingResult {
  RankMode mode = RankMode::kFiltered;
  std::size_t queries = 0;
  SideMetrics head;
  SideMetrics tail;
  SideMetrics both;  // average over both sides

  double hr(std::size_t k) const { return both.hits.at(k); }
};

RankingResult summarize_ranks(std::span<const TripleRanks> ranks, RankMode mode,
                              std::span<const std::size_t> ks = std::vector<std::size_t>{1, 3, 10});

RankingResult link_prediction(const ModelSpec& spec, const ParameterSet& params, const KnowledgeGraph& g,
                              std::span<const Triple> test, RankMode mode, const EvalConfig& cfg = {},
                              std::span<const std::size_t> ks = std::vector<std::size_t>{1, 3, 10});

struct ClassificationResult {
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::uint64_t seed = 0;
};

// AUC by the rank-sum identity with score = -energy: a positive ranked above a
// negative (lower energy) counts 1, a tie counts 1/2.
double auc_rank_sum(std::span<const double> pos_energy, std::span<const double> neg_energy);

ClassificationResult triplet_classification(const ModelSpec& spec, const ParameterSet& params,
                                            const KnowledgeGraph& g, std::span<const Triple> test,
                                            std::uint64_t seed, const EvalConfig& cfg = {});

struct SweepPoint {
  std::size_t setting = 0;
  double hr10 = 0.0;
  double epoch_seconds = 0.0;
};

struct SweepReport {
  std::string axis;  // "hops" or "workers"
  std::vector<SweepPoint> points;
};

void write_ranking_csv(const std::filesystem::path& path, const std::vector<RankingResult>& results);
void write_classification_csv(const std::filesystem::path& path, const ClassificationResult& result);
void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report);
// (x, y) series for plotting: x = setting, y = HR@10 and y = epoch seconds.
void write_plot_data(const std::filesystem::path& dir, const SweepReport& report);

}  // namespace kgnn
