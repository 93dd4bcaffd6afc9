#include "kgnn/sampler.hpp"

#include <unordered_set>

#include <algorithm>
#include <functional>
#include <iterator>
#include <random>

#include "kgnn/error.hpp"

namespace kgnn {

void SamplerConfig::validate() const {
  if (fanout_per_hop.empty()) throw ConfigError("sampler.fanout", "at least one hop required (K >= 1)");
  for (auto f : fanout_per_hop) {
    if (f < 1) throw ConfigError("sampler.fanout", "fan-out entries must be >= 1");
  }
  if (negatives_per_positive < 1) throw ConfigError("sampler.negatives", "must be >= 1");
}

std::vector<std::size_t> SamplerConfig::default_fanout(std::size_t hops) {
  std::vector<std::size_t> base{16, 8, 8, 8};
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < hops; ++k) out.push_back(base[std::min(k, base.size() - 1)]);
  return out;
}

std::vector<CorruptedTriple> corrupt(const Triple& t, const KnowledgeGraph& g, const SamplerConfig& cfg, Rng& rng,
                                     std::size_t pool) {
  const std::size_t n = pool == 0 ? g.num_train_entities() : pool;
  if (n < 2) throw ExhaustionError("cannot corrupt a triple with fewer than 2 candidate entities");
  std::bernoulli_distribution coin(0.5);
  std::vector<CorruptedTriple> out;
  out.reserve(cfg.negatives_per_positive);
  for (std::size_t i = 0; i < cfg.negatives_per_positive; ++i) {
    const Slot slot = coin(rng) ? Slot::kHead : Slot::kTail;
    const std::uint32_t original = slot == Slot::kHead ? t.head.value : t.tail.value;
    Triple c = t;
    // Uniform over the pool minus the original entity.
    const bool excluded = original < n;
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(excluded ? n - 2 : n - 1));
    for (std::size_t attempt = 0; attempt <= kMaxCorruptionRetries; ++attempt) {
      std::uint32_t e = pick(rng);
      if (excluded && e >= original) ++e;
      (slot == Slot::kHead ? c.head : c.tail) = EntityId{e};
      if (!cfg.filter_false_negatives || !g.is_known(c)) break;
    }
    out.push_back({c, slot});
  }
  return out;
}

const std::vector<NeighborEntry>* SubGraph::sampled(EntityId e) const {
  auto it = node_index.find(e);
  if (it == node_index.end()) return nullptr;
  const std::size_t d = depth[it->second];
  if (d >= layers.size()) return nullptr;
  auto jt = layers[d].find(e);
  return jt == layers[d].end() ? nullptr : &jt->second;
}

std::size_t SubGraph::count_within(std::size_t max_depth) const {
  return static_cast<std::size_t>(
      std::partition_point(depth.begin(), depth.end(), [&](std::size_t d) { return d <= max_depth; }) - depth.begin());
}

namespace {

using Picker = std::function<std::vector<NeighborEntry>(EntityId, std::size_t hop)>;

SubGraph build_subgraph(std::span<const EntityId> seeds, const KnowledgeGraph& g, std::size_t hops,
                        const Picker& pick) {
  if (seeds.empty()) throw ContractError("sample_subgraph: empty seed list");
  SubGraph sg;
  auto add_node = [&](EntityId e, std::size_t depth) -> bool {
    if (sg.node_index.contains(e)) return false;
    if (e.value >= g.num_entities()) throw LookupError("seed entity " + std::to_string(e.value) + " out of range");
    sg.node_index.emplace(e, sg.nodes.size());
    sg.nodes.push_back(e);
    sg.depth.push_back(depth);
    return true;
  };
  std::vector<EntityId> frontier;
  for (auto e : seeds) {
    if (add_node(e, 0)) {
      sg.seed_entities.push_back(e);
      frontier.push_back(e);
    }
  }
  sg.layers.resize(hops);
  for (std::size_t k = 0; k < hops; ++k) {
    std::vector<EntityId> next;
    for (auto e : frontier) {
      auto picked = pick(e, k);
      for (const auto& entry : picked) {
        if (add_node(entry.neighbor, k + 1)) next.push_back(entry.neighbor);
      }
      sg.layers[k].emplace(e, std::move(picked));
    }
    frontier = std::move(next);
  }
  return sg;
}

std::vector<NeighborEntry> pick_uniform(std::span<const NeighborEntry> all, std::size_t fanout, Rng& rng) {
  if (all.size() <= fanout) return {all.begin(), all.end()};
  std::vector<NeighborEntry> picked;
  picked.reserve(fanout);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), fanout, rng);
  return picked;
}

}  // namespace

SubGraph sample_subgraph(std::span<const EntityId> seeds, const KnowledgeGraph& g, const SamplerConfig& cfg, Rng& rng,
                         std::span<const Triple> masked) {
  cfg.validate();
  if (masked.empty()) {
    return build_subgraph(seeds, g, cfg.fanout_per_hop.size(), [&](EntityId e, std::size_t k) {
      return pick_uniform(g.neighbors(e), cfg.fanout_per_hop[k], rng);
    });
  }
  const std::unordered_set<Triple, TripleHash> hidden(masked.begin(), masked.end());
  std::vector<NeighborEntry> visible;
  return build_subgraph(seeds, g, cfg.fanout_per_hop.size(), [&](EntityId e, std::size_t k) {
    visible.clear();
    for (const auto& entry : g.neighbors(e)) {
      const Triple t = entry.direction == Direction::kOutgoing ? Triple{e, entry.relation, entry.neighbor}
                                                               : Triple{entry.neighbor, entry.relation, e};
      if (!hidden.contains(t)) visible.push_back(entry);
    }
    return pick_uniform(visible, cfg.fanout_per_hop[k], rng);
  });
}

SubGraph sample_subgraph_keyed(std::span<const EntityId> seeds, const KnowledgeGraph& g, std::size_t hops,
                               std::size_t fanout, std::uint64_t seed) {
  if (hops < 1) throw ConfigError("sampler.fanout", "at least one hop required (K >= 1)");
  if (fanout < 1) throw ConfigError("sampler.fanout", "fan-out entries must be >= 1");
  return build_subgraph(seeds, g, hops, [&](EntityId e, std::size_t) {
    Rng rng = make_rng({seed, 0x5A3Bu, e.value});
    return pick_uniform(g.neighbors(e), fanout, rng);
  });
}

}  // namespace kgnn
