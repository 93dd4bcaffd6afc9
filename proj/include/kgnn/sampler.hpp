#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "kgnn/kg_store.hpp"
#include "kgnn/rng.hpp"

namespace kgnn {

struct SamplerConfig {
  // One entry per hop; its length is the hop count K.
  std::vector<std::size_t> fanout_per_hop{16, 8, 8, 8};
  std::size_t negatives_per_positive = 1;
  bool filter_false_negatives = true;
  // Hide each training batch's positive triples from its own subgraph so the
  // encoder cannot read a target edge off the adjacency.
  bool mask_targets = true;
  std::uint64_t seed = 0;

  void validate() const;
  // Default fan-out truncated (or extended with the last value) to `hops` entries.
  static std::vector<std::size_t> default_fanout(std::size_t hops);
};

enum class Slot : std::uint8_t { kHead, kTail };

struct CorruptedTriple {
  Triple triple;
  Slot corrupted_slot = Slot::kTail;
};

inline constexpr std::size_t kMaxCorruptionRetries = 100;

// Replaces the head or the tail (chosen uniformly) with a different entity drawn
// uniformly from ids [0, pool). pool = 0 means the entities seen in training. With
// filtering on, draws that form a known triple are redrawn up to
// kMaxCorruptionRetries times, after which the last draw is accepted.
std::vector<CorruptedTriple> corrupt(const Triple& t, const KnowledgeGraph& g, const SamplerConfig& cfg, Rng& rng,
                                     std::size_t pool = 0);

// Layered k-hop sample around a set of seeds.
//
// Nodes are numbered seeds first, then in discovery order, so node depth is
// non-decreasing in the local index. Each node at depth < K owns exactly one
// sampled neighbour list, drawn in layer depth+1.
struct SubGraph {
  std::vector<EntityId> seed_entities;
  // layers[k] holds hop k+1: frontier entity -> sampled entries.
  std::vector<std::map<EntityId, std::vector<NeighborEntry>>> layers;
  std::unordered_map<EntityId, std::size_t> node_index;
  std::vector<EntityId> nodes;
  std::vector<std::size_t> depth;

  std::size_t hops() const { return layers.size(); }
  std::size_t size() const { return nodes.size(); }
  // Sampled list of a node at depth < K; nullptr otherwise.
  const std::vector<NeighborEntry>* sampled(EntityId e) const;
  // Number of leading nodes with depth <= max_depth.
  std::size_t count_within(std::size_t max_depth) const;
};

// Duplicate seeds are collapsed (first occurrence kept). Entries whose stored
// triple is in `masked` are never sampled.
SubGraph sample_subgraph(std::span<const EntityId> seeds, const KnowledgeGraph& g, const SamplerConfig& cfg, Rng& rng,
                         std::span<const Triple> masked = {});

// Evaluation sampler: every entity's neighbour list is drawn from its own stream
// keyed by (seed, entity) with the same fan-out at every depth, so an entity's
// encoding does not depend on which other seeds share the batch.
SubGraph sample_subgraph_keyed(std::span<const EntityId> seeds, const KnowledgeGraph& g, std::size_t hops,
                               std::size_t fanout, std::uint64_t seed);

}  // namespace kgnn
