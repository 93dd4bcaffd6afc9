#include "kgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kgnn/error.hpp"
#include "kgnn/kg_store.hpp"
#include "kgnn/rng.hpp"

namespace kgnn {

std::string_view to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::kEntityEmb: return "entity_emb";
    case ParamKind::kRelationEmb: return "relation_emb";
    case ParamKind::kHyperplane: return "hyperplane";
    case ParamKind::kProjMatrix: return "proj_matrix";
    case ParamKind::kAttnWeight: return "attn_weight";
    case ParamKind::kLstmWeight: return "lstm_weight";
    case ParamKind::kAttrProj: return "attr_proj";
  }
  return "unknown";
}

std::optional<ParamKind> param_kind_from_byte(std::uint8_t b) {
  if (b >= kNumParamKinds) return std::nullopt;
  return static_cast<ParamKind>(b);
}

std::string to_string(const ParamKey& key) {
  return std::string(to_string(key.kind)) + "/" + std::to_string(key.id);
}

std::string_view to_string(EncoderKind kind) { return kind == EncoderKind::kGnn ? "gnn" : "lookup"; }

std::string_view to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::kTransE: return "transe";
    case DecoderKind::kTransH: return "transh";
    case DecoderKind::kTransR: return "transr";
    case DecoderKind::kDistMult: return "distmult";
  }
  return "unknown";
}

std::string_view to_string(Norm norm) { return norm == Norm::kL1 ? "l1" : "l2"; }

EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "gnn") return EncoderKind::kGnn;
  if (s == "lookup") return EncoderKind::kLookup;
  throw ConfigError("encoder.type", "expected gnn|lookup, got '" + std::string(s) + "'");
}

DecoderKind parse_decoder_kind(std::string_view s) {
  if (s == "transe") return DecoderKind::kTransE;
  if (s == "transh") return DecoderKind::kTransH;
  if (s == "transr") return DecoderKind::kTransR;
  if (s == "distmult") return DecoderKind::kDistMult;
  throw ConfigError("decoder.kind", "expected transe|transh|transr|distmult, got '" + std::string(s) + "'");
}

Norm parse_norm(std::string_view s) {
  if (s == "l1") return Norm::kL1;
  if (s == "l2") return Norm::kL2;
  throw ConfigError("decoder.norm", "expected l1|l2, got '" + std::string(s) + "'");
}

void ModelSpec::validate() const {
  if (enc.embed_dim == 0) throw ConfigError("encoder.dim", "must be positive");
  if (encoder == EncoderKind::kGnn) {
    if (enc.hops < 1) throw ConfigError("encoder.hops", "must be >= 1 for the gnn encoder");
    if (enc.attention_hidden == 0) throw ConfigError("encoder.attention_hidden", "must be positive");
  }
  if (num_relations == 0) throw ConfigError("data", "graph has no relations");
}

ModelSpec make_model_spec(const KnowledgeGraph& g, EncoderKind encoder, const EncoderConfig& enc, DecoderKind decoder,
                          Norm norm, bool share_relations) {
  ModelSpec spec;
  spec.encoder = encoder;
  spec.enc = enc;
  spec.decoder = decoder;
  spec.norm = norm;
  spec.share_relations = share_relations;
  spec.inverse_edges = g.inverse_edges();
  spec.num_entities = g.num_train_entities();
  spec.num_relations = g.num_relations();
  spec.attr_dim = g.attribute_dim();
  spec.validate();
  return spec;
}

Tensor::Shape param_shape(const ModelSpec& spec, ParamKind kind) {
  const std::size_t d = spec.dim();
  switch (kind) {
    case ParamKind::kEntityEmb:
    case ParamKind::kRelationEmb:
    case ParamKind::kHyperplane: return {d};
    case ParamKind::kProjMatrix: return {d, d};
    case ParamKind::kAttnWeight: return {3 * d + 1};
    case ParamKind::kLstmWeight: return {2 * d + 1};
    case ParamKind::kAttrProj: return {d, spec.attr_dim};
  }
  throw LookupError("unknown parameter kind");
}

std::size_t param_size(const ModelSpec& spec, ParamKind kind) { return shape_numel(param_shape(spec, kind)); }

ParamKey entity_key(std::uint64_t entity) { return {ParamKind::kEntityEmb, entity}; }

ParamKey decoder_relation_key(std::uint64_t relation) { return {ParamKind::kRelationEmb, relation}; }

ParamKey attention_relation_key(const ModelSpec& spec, std::uint64_t relation, bool incoming) {
  const std::uint64_t r = spec.num_relations;
  if (incoming) return {ParamKind::kRelationEmb, 2 * r + relation};
  return {ParamKind::kRelationEmb, spec.share_relations ? relation : r + relation};
}

std::vector<ParamKey> model_keys(const ModelSpec& spec) {
  std::vector<ParamKey> keys;
  const std::uint64_t d = spec.dim();
  const std::uint64_t r = spec.num_relations;
  const bool gnn = spec.encoder == EncoderKind::kGnn;
  if (!spec.attribute_path()) {
    for (std::uint64_t e = 0; e < spec.num_entities; ++e) keys.push_back(entity_key(e));
  }
  for (std::uint64_t i = 0; i < r; ++i) keys.push_back(decoder_relation_key(i));
  if (gnn) {
    if (!spec.share_relations) {
      for (std::uint64_t i = 0; i < r; ++i) keys.push_back({ParamKind::kRelationEmb, r + i});
    }
    if (spec.inverse_edges) {
      for (std::uint64_t i = 0; i < r; ++i) keys.push_back({ParamKind::kRelationEmb, 2 * r + i});
    }
  }
  if (spec.decoder == DecoderKind::kTransH) {
    for (std::uint64_t i = 0; i < r; ++i) keys.push_back({ParamKind::kHyperplane, i});
  }
  if (spec.decoder == DecoderKind::kTransR) {
    for (std::uint64_t i = 0; i < r; ++i) keys.push_back({ParamKind::kProjMatrix, i});
  }
  if (gnn) {
    for (std::uint64_t j = 0; j < spec.enc.attention_hidden; ++j) keys.push_back({ParamKind::kAttnWeight, j});
    for (std::uint64_t j = 0; j < 4 * d; ++j) keys.push_back({ParamKind::kLstmWeight, j});
  }
  if (spec.attribute_path()) keys.push_back({ParamKind::kAttrProj, 0});
  std::sort(keys.begin(), keys.end());
  return keys;
}

bool owns_key(const ModelSpec& spec, const ParamKey& key) {
  const auto keys = model_keys(spec);
  return std::binary_search(keys.begin(), keys.end(), key);
}

Tensor initial_value(const ModelSpec& spec, const ParamKey& key, std::uint64_t seed) {
  Rng rng = make_rng({seed, 0x1417u, static_cast<std::uint64_t>(key.kind), key.id});
  const double d = static_cast<double>(spec.dim());
  Tensor value(param_shape(spec, key.kind));
  auto fill_uniform = [&](std::span<double> out, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : out) x = u(rng);
  };
  const double embed_bound = 6.0 / std::sqrt(d);
  switch (key.kind) {
    case ParamKind::kEntityEmb:
    case ParamKind::kRelationEmb:
    case ParamKind::kAttrProj:
      fill_uniform(value.data(), embed_bound);
      break;
    case ParamKind::kHyperplane: {
      double n2 = 0.0;
      do {
        fill_uniform(value.data(), 1.0);
        n2 = 0.0;
        for (double x : value.storage()) n2 += x * x;
      } while (n2 < 1e-12);
      const double n = std::sqrt(n2);
      for (auto& x : value.storage()) x /= n;
      break;
    }
    case ParamKind::kProjMatrix:
      for (std::size_t i = 0; i < spec.dim(); ++i) value.at(i, i) = 1.0;
      break;
    case ParamKind::kAttnWeight: {
      const double h = static_cast<double>(spec.enc.attention_hidden);
      auto row = value.data();
      fill_uniform(row.first(3 * spec.dim()), std::sqrt(6.0 / (3.0 * d + h)));
      fill_uniform(row.last(1), std::sqrt(6.0 / (h + 1.0)));
      break;
    }
    case ParamKind::kLstmWeight: {
      auto row = value.data();
      fill_uniform(row.first(2 * spec.dim()), 1.0 / std::sqrt(d));
      // Forget-gate rows start with bias 1.
      const bool forget = key.id >= spec.dim() && key.id < 2 * spec.dim();
      row.back() = forget ? 1.0 : 0.0;
      break;
    }
  }
  return value;
}

ParameterSet initial_parameters(const ModelSpec& spec, std::uint64_t seed) {
  ParameterSet out;
  for (const auto& key : model_keys(spec)) out.emplace(key, initial_value(spec, key, seed));
  return out;
}

Var ModelContext::param(const ParamKey& key) const {
  if (auto v = tape_.find_parameter(key)) return *v;
  auto it = params_.find(key);
  if (it == params_.end()) throw LookupError("parameter " + to_string(key) + " missing from snapshot");
  return tape_.parameter(key, it->second, requires_grad_);
}

Var ModelContext::rows(const std::vector<ParamKey>& keys) const {
  std::vector<Var> vs;
  vs.reserve(keys.size());
  for (const auto& k : keys) vs.push_back(param(k));
  return stack_rows(vs);
}

Var ModelContext::packed(ParamKind kind, std::size_t count) const {
  std::vector<ParamKey> keys;
  keys.reserve(count);
  for (std::size_t i = 0; i < count; ++i) keys.push_back({kind, i});
  return rows(keys);
}

}  // namespace kgnn
