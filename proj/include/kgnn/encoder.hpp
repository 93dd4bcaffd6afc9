#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kgnn/kg_store.hpp"
#include "kgnn/model.hpp"
#include "kgnn/sampler.hpp"

namespace kgnn {

// Final representations for a list of entities, one row each.
struct EncodedBatch {
  std::vector<EntityId> entities;
  Var embeddings;  // [entities.size() x d]

  // Row of `e`; throws LookupError if it was not encoded.
  std::size_t row(EntityId e) const;
};

// e^0: attribute projection on the attribute path, the free embedding row for
// trained entities, zeros for unseen entities without attributes (CoverageError
// in strict mode).
Var base_embedding(const ModelContext& ctx, const KnowledgeGraph& g, EntityId e);

struct AttentionInput {
  NeighborEntry entry;
  Var neighbor;  // e^k of the neighbour, [d]
};

// alpha_i = softmax_i(u . leaky_relu(W_a [head; rel(entry_i); neighbor_i])).
Var attention_weights(const ModelContext& ctx, const Var& head, std::span<const AttentionInput> entries);

// sum_i alpha_i * neighbor_i; the zero vector of width `dim` when entries is empty.
Var aggregate(const ModelContext& ctx, const Var& head, std::span<const AttentionInput> entries);

// K rounds of attention aggregation followed by a shared LSTM update, with hidden
// state e^k and cell state starting at zero. Returns e^K of the subgraph seeds.
EncodedBatch encode(const ModelContext& ctx, const KnowledgeGraph& g, const SubGraph& sg);

// Raw embedding rows, for decoder-only baselines.
EncodedBatch lookup_encode(const ModelContext& ctx, std::span<const EntityId> entities);

// Parameter keys read by encode() on this subgraph (or lookup_encode on its seeds).
std::vector<ParamKey> encoder_keys(const ModelSpec& spec, const KnowledgeGraph& g, const SubGraph& sg);

}  // namespace kgnn
