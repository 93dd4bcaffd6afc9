#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kgnn/ops.hpp"
#include "kgnn/params.hpp"
#include "kgnn/tape.hpp"

namespace kgnn {

class KnowledgeGraph;

enum class EncoderKind { kGnn, kLookup };
enum class DecoderKind { kTransE, kTransH, kTransR, kDistMult };

std::string_view to_string(EncoderKind kind);
std::string_view to_string(DecoderKind kind);
std::string_view to_string(Norm norm);
EncoderKind parse_encoder_kind(std::string_view s);
DecoderKind parse_decoder_kind(std::string_view s);
Norm parse_norm(std::string_view s);

struct EncoderConfig {
  std::size_t hops = 2;
  std::size_t embed_dim = 64;
  std::size_t attention_hidden = 32;
  bool use_attributes = false;
  double leaky_slope = 0.2;
  // Unseen entity without attributes: CoverageError instead of a zero vector.
  bool strict = false;
};

// Everything needed to enumerate, shape and initialise the parameters of one model.
//
// Relation-table layout (kind kRelationEmb):
//   [0, R)    decoder relation vectors e_r (DistMult: the diagonal)
//   [R, 2R)   attention embedding of outgoing entries (aliases [0, R) when shared)
//   [2R, 3R)  attention embedding of incoming entries
// LSTM and attention weights are stored one row per key so every key of a kind
// has the same shape.
struct ModelSpec {
  EncoderKind encoder = EncoderKind::kGnn;
  EncoderConfig enc;
  DecoderKind decoder = DecoderKind::kTransH;
  Norm norm = Norm::kL2;
  bool share_relations = false;
  bool inverse_edges = true;
  // Entities with ids below this own a free embedding row.
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  // Width of the attribute matrix; 0 when the graph carries none.
  std::size_t attr_dim = 0;

  std::size_t dim() const { return enc.embed_dim; }
  bool attribute_path() const { return encoder == EncoderKind::kGnn && enc.use_attributes && attr_dim > 0; }
  bool translational() const { return decoder != DecoderKind::kDistMult; }

  void validate() const;
};

ModelSpec make_model_spec(const KnowledgeGraph& g, EncoderKind encoder, const EncoderConfig& enc,
                          DecoderKind decoder, Norm norm, bool share_relations = false);

Tensor::Shape param_shape(const ModelSpec& spec, ParamKind kind);
std::size_t param_size(const ModelSpec& spec, ParamKind kind);

ParamKey entity_key(std::uint64_t entity);
ParamKey decoder_relation_key(std::uint64_t relation);
ParamKey attention_relation_key(const ModelSpec& spec, std::uint64_t relation, bool incoming);

// Every key the model owns, sorted.
std::vector<ParamKey> model_keys(const ModelSpec& spec);
bool owns_key(const ModelSpec& spec, const ParamKey& key);

// Deterministic per-key initialisation: the value depends only on (spec, key, seed),
// never on which process or shard creates it.
Tensor initial_value(const ModelSpec& spec, const ParamKey& key, std::uint64_t seed);
ParameterSet initial_parameters(const ModelSpec& spec, std::uint64_t seed);

// Binds a tape to a parameter snapshot; leaves are registered on first use.
class ModelContext {
 public:
  ModelContext(Tape& tape, const ParameterSet& params, const ModelSpec& spec, bool requires_grad = true)
      : tape_(tape), params_(params), spec_(spec), requires_grad_(requires_grad) {}

  Tape& tape() const { return tape_; }
  const ModelSpec& spec() const { return spec_; }
  const ParameterSet& params() const { return params_; }

  Var param(const ParamKey& key) const;
  // Matrix with one row per key (keys may repeat).
  Var rows(const std::vector<ParamKey>& keys) const;
  // All `count` row-keys of a kind stacked as a matrix (attention and LSTM weights).
  Var packed(ParamKind kind, std::size_t count) const;

 private:
  Tape& tape_;
  const ParameterSet& params_;
  const ModelSpec& spec_;
  bool requires_grad_;
};

}  // namespace kgnn
