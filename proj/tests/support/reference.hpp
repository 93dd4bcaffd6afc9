#pragma once

// Plain-loop forward model used as an oracle in tests. It shares only the
// parameter layout with the library (keys, packed row order), never its ops.

#include <map>
#include <span>
#include <vector>

#include "kgnn/kg_store.hpp"
#include "kgnn/model.hpp"
#include "kgnn/sampler.hpp"

namespace kgnn::reference {

using Vec = std::vector<double>;

Vec param_vec(const ParameterSet& params, const ParamKey& key);

double energy(const ModelSpec& spec, const ParameterSet& params, const Vec& h, RelationId r, const Vec& t);

// e^0 of an entity: attribute projection, free embedding, or zeros.
Vec base(const ModelSpec& spec, const ParameterSet& params, const KnowledgeGraph& g, EntityId e);

// Attention softmax weights for a head vector over explicit (entry, neighbour) pairs.
Vec attention(const ModelSpec& spec, const ParameterSet& params, const Vec& head,
              std::span<const NeighborEntry> entries, std::span<const Vec> neighbors);

struct LstmOut {
  Vec h;
  Vec c;
};
LstmOut lstm(const ModelSpec& spec, const ParameterSet& params, const Vec& x, const Vec& h, const Vec& c);

// e^K for every seed of the subgraph, by recursion over hops.
std::map<EntityId, Vec> encode(const ModelSpec& spec, const ParameterSet& params, const KnowledgeGraph& g,
                               const SubGraph& sg);

// Summed hinge over (positive, corruption) pairs, same layout as margin_objective.
double margin_loss(const ModelSpec& spec, const ParameterSet& params, const KnowledgeGraph& g,
                   std::span<const Triple> triples, std::size_t positives, std::size_t negatives_per_positive,
                   const SubGraph* sg, double margin);

}  // namespace kgnn::reference
