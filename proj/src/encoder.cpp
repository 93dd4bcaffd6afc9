#include "kgnn/encoder.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "kgnn/error.hpp"

namespace kgnn {
namespace {

bool has_free_embedding(const ModelSpec& spec, EntityId e) { return e.value < spec.num_entities; }

// Logits for E entries given head, relation and neighbour rows (each [E x d]).
Var attention_logits(const ModelContext& ctx, const Var& packed, const Var& heads, const Var& rels, const Var& nbrs) {
  const ModelSpec& spec = ctx.spec();
  const std::size_t d = spec.dim();
  const Var w = slice_cols(packed, 0, 3 * d);
  const Var u = reshape(slice_cols(packed, 3 * d, 3 * d + 1), {spec.enc.attention_hidden});
  const Var hidden = leaky_relu(matmul_nt(concat_cols({heads, rels, nbrs}), w), spec.enc.leaky_slope);
  return matvec(hidden, u);
}

Var attention_packed(const ModelContext& ctx) {
  return ctx.packed(ParamKind::kAttnWeight, ctx.spec().enc.attention_hidden);
}

Var zeros(Tape& tape, Tensor::Shape shape) { return tape.constant(Tensor(std::move(shape))); }

struct EntryRows {
  Var heads;
  Var rels;
  Var nbrs;
};

EntryRows stack_single(const ModelContext& ctx, const Var& head, std::span<const AttentionInput> entries) {
  std::vector<Var> hs, rs, ns;
  for (const auto& in : entries) {
    hs.push_back(head);
    rs.push_back(ctx.param(attention_relation_key(ctx.spec(), in.entry.relation.value,
                                                  in.entry.direction == Direction::kIncoming)));
    ns.push_back(in.neighbor);
  }
  return {stack_rows(hs), stack_rows(rs), stack_rows(ns)};
}

}  // namespace

std::size_t EncodedBatch::row(EntityId e) const {
  auto it = std::find(entities.begin(), entities.end(), e);
  if (it == entities.end()) throw LookupError("entity " + std::to_string(e.value) + " not in encoded batch");
  return static_cast<std::size_t>(it - entities.begin());
}

Var base_embedding(const ModelContext& ctx, const KnowledgeGraph& g, EntityId e) {
  const ModelSpec& spec = ctx.spec();
  if (e.value >= g.num_entities()) throw LookupError("entity id " + std::to_string(e.value) + " out of range");
  if (spec.attribute_path() && g.attributes()) {
    const Tensor& attrs = *g.attributes();
    auto row = attrs.row(e.value);
    const Var x = ctx.tape().constant(Tensor::vector(std::vector<double>(row.begin(), row.end())));
    return matvec(ctx.param({ParamKind::kAttrProj, 0}), x);
  }
  if (has_free_embedding(spec, e)) return ctx.param(entity_key(e.value));
  if (spec.enc.strict) {
    throw CoverageError("entity " + std::to_string(e.value) + " unseen in training and has no attributes");
  }
  return zeros(ctx.tape(), {spec.dim()});
}

Var attention_weights(const ModelContext& ctx, const Var& head, std::span<const AttentionInput> entries) {
  if (entries.empty()) throw ContractError("attention_weights: empty entry list");
  const auto rows = stack_single(ctx, head, entries);
  return softmax(attention_logits(ctx, attention_packed(ctx), rows.heads, rows.rels, rows.nbrs));
}

Var aggregate(const ModelContext& ctx, const Var& head, std::span<const AttentionInput> entries) {
  if (entries.empty()) return zeros(ctx.tape(), {ctx.spec().dim()});
  const auto rows = stack_single(ctx, head, entries);
  const Var alpha = softmax(attention_logits(ctx, attention_packed(ctx), rows.heads, rows.rels, rows.nbrs));
  const std::size_t offsets[2] = {0, entries.size()};
  return reshape(segment_weighted_sum(alpha, rows.nbrs, offsets), {ctx.spec().dim()});
}

EncodedBatch encode(const ModelContext& ctx, const KnowledgeGraph& g, const SubGraph& sg) {
  const ModelSpec& spec = ctx.spec();
  const std::size_t hops = spec.enc.hops;
  const std::size_t d = spec.dim();
  if (spec.encoder != EncoderKind::kGnn) throw ContractError("encode: model uses the lookup encoder");
  if (sg.hops() != hops) {
    throw ContractError("encode: subgraph has " + std::to_string(sg.hops()) + " hops, model expects " +
                        std::to_string(hops));
  }
  Tape& tape = ctx.tape();

  // e^0 for every node.
  Var h;
  if (spec.attribute_path() && g.attributes()) {
    const Tensor& attrs = *g.attributes();
    Tensor x({sg.size(), attrs.cols()});
    for (std::size_t i = 0; i < sg.size(); ++i) {
      auto src = attrs.row(sg.nodes[i].value);
      std::copy(src.begin(), src.end(), x.row(i).begin());
    }
    h = matmul_nt(tape.constant(std::move(x)), ctx.param({ParamKind::kAttrProj, 0}));
  } else {
    std::vector<Var> rows;
    rows.reserve(sg.size());
    for (auto e : sg.nodes) rows.push_back(base_embedding(ctx, g, e));
    h = stack_rows(rows);
  }
  Var c = zeros(tape, {sg.size(), d});
  const Var lstm = ctx.packed(ParamKind::kLstmWeight, 4 * d);
  const Var attn = attention_packed(ctx);

  for (std::size_t m = 0; m < hops; ++m) {
    // Nodes that still need e^{m+1}.
    const std::size_t active = sg.count_within(hops - m - 1);
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> head_idx, nbr_idx, rel_idx;
    std::map<ParamKey, std::size_t> rel_slot;
    std::vector<ParamKey> rel_keys;
    for (std::size_t i = 0; i < active; ++i) {
      const auto* list = sg.sampled(sg.nodes[i]);
      if (list == nullptr) throw ContractError("encode: node within K-1 hops has no sampled list");
      for (const auto& entry : *list) {
        const ParamKey rk = attention_relation_key(spec, entry.relation.value, entry.direction == Direction::kIncoming);
        auto [it, inserted] = rel_slot.emplace(rk, rel_keys.size());
        if (inserted) rel_keys.push_back(rk);
        head_idx.push_back(i);
        nbr_idx.push_back(sg.node_index.at(entry.neighbor));
        rel_idx.push_back(it->second);
      }
      offsets.push_back(head_idx.size());
    }

    Var agg;
    if (head_idx.empty()) {
      agg = zeros(tape, {active, d});
    } else {
      const Var heads = gather_rows(h, head_idx);
      const Var nbrs = gather_rows(h, nbr_idx);
      const Var rels = gather_rows(ctx.rows(rel_keys), rel_idx);
      const Var alpha = segment_softmax(attention_logits(ctx, attn, heads, rels, nbrs), offsets);
      agg = segment_weighted_sum(alpha, nbrs, offsets);
    }
    const LstmState next = lstm_cell(agg, slice_rows(h, 0, active), slice_rows(c, 0, active), lstm);
    h = next.h;
    c = next.c;
  }
  return {sg.seed_entities, h};
}

EncodedBatch lookup_encode(const ModelContext& ctx, std::span<const EntityId> entities) {
  std::vector<ParamKey> keys;
  std::map<EntityId, std::size_t> slot;
  std::vector<std::size_t> idx;
  for (auto e : entities) {
    if (!has_free_embedding(ctx.spec(), e)) {
      throw LookupError("entity " + std::to_string(e.value) + " has no embedding row");
    }
    auto [it, inserted] = slot.emplace(e, keys.size());
    if (inserted) keys.push_back(entity_key(e.value));
    idx.push_back(it->second);
  }
  if (keys.empty()) throw ContractError("lookup_encode: empty entity list");
  return {std::vector<EntityId>(entities.begin(), entities.end()), gather_rows(ctx.rows(keys), idx)};
}

std::vector<ParamKey> encoder_keys(const ModelSpec& spec, const KnowledgeGraph& g, const SubGraph& sg) {
  std::set<ParamKey> keys;
  const bool attr = spec.attribute_path() && g.attributes();
  if (spec.encoder == EncoderKind::kLookup) {
    for (auto e : sg.seed_entities) keys.insert(entity_key(e.value));
    return {keys.begin(), keys.end()};
  }
  if (attr) {
    keys.insert({ParamKind::kAttrProj, 0});
  } else {
    for (auto e : sg.nodes) {
      if (has_free_embedding(spec, e)) keys.insert(entity_key(e.value));
    }
  }
  for (const auto& layer : sg.layers) {
    for (const auto& [e, list] : layer) {
      for (const auto& entry : list) {
        keys.insert(attention_relation_key(spec, entry.relation.value, entry.direction == Direction::kIncoming));
      }
    }
  }
  for (std::size_t j = 0; j < spec.enc.attention_hidden; ++j) keys.insert({ParamKind::kAttnWeight, j});
  for (std::size_t j = 0; j < 4 * spec.dim(); ++j) keys.insert({ParamKind::kLstmWeight, j});
  return {keys.begin(), keys.end()};
}

}  // namespace kgnn
