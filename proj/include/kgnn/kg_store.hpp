#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgnn/tensor.hpp"

namespace kgnn {

struct EntityId {
  std::uint32_t value = 0;
  friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

struct RelationId {
  std::uint32_t value = 0;
  friend auto operator<=>(const RelationId&, const RelationId&) = default;
};

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t x = (static_cast<std::uint64_t>(t.head.value) << 32) ^ t.tail.value;
    x ^= static_cast<std::uint64_t>(t.relation.value) * 0x9E3779B97F4A7C15ULL;
    x ^= x >> 29;
    return static_cast<std::size_t>(x * 0xBF58476D1CE4E5B9ULL);
  }
};

enum class Direction : std::uint8_t { kOutgoing = 0, kIncoming = 1 };

struct NeighborEntry {
  RelationId relation;
  EntityId neighbor;
  Direction direction = Direction::kOutgoing;
  friend auto operator<=>(const NeighborEntry&, const NeighborEntry&) = default;
};

// Bijective name <-> dense id map. Ids are assigned in insertion order.
class Vocab {
 public:
  // Returns the existing id or appends. Throws LookupError when frozen and unknown.
  std::uint32_t add(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  std::uint32_t at(std::string_view name) const;
  const std::string& name(std::uint32_t id) const;
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  const std::vector<std::string>& names() const { return names_; }

  // "name<TAB>id" lines. Loading accepts an optional leading count line and
  // returns a frozen vocabulary; ids must be dense in [0, n).
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
  bool frozen_ = false;
};

struct DatasetSplit {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
};

// Parses "head<TAB>relation<TAB>tail" lines, extending the vocabularies unless frozen.
std::vector<Triple> load_triples(const std::filesystem::path& path, Vocab& entities, Vocab& relations);

struct LoadedTriples {
  std::vector<Triple> triples;
  Vocab entities;
  Vocab relations;
};
LoadedTriples load_triples(const std::filesystem::path& path);

void save_triples(const std::filesystem::path& path, std::span<const Triple> triples, const Vocab& entities,
                  const Vocab& relations);

// "entity<TAB>v1,v2,...". Every entity of the vocabulary must be present; the
// result is a |E| x d matrix.
Tensor load_attributes(const std::filesystem::path& path, const Vocab& entities);

struct Dataset {
  DatasetSplit split;
  Vocab entities;
  Vocab relations;
  std::optional<Tensor> attributes;
};

// Reads train/valid/test (".tsv" or ".txt"), optional entity2id/relation2id and
// attributes files from a directory.
Dataset load_dataset(const std::filesystem::path& dir);

// Immutable triple store with CSR adjacency built from the train split.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  // Entities appearing in the train split have ids below this bound.
  std::size_t num_train_entities() const { return num_train_entities_; }
  bool inverse_edges() const { return inverse_edges_; }

  std::span<const Triple> triples() const { return split_.train; }
  const DatasetSplit& split() const { return split_; }
  const Vocab& entity_vocab() const { return entities_; }
  const Vocab& relation_vocab() const { return relations_; }
  const std::optional<Tensor>& attributes() const { return attributes_; }
  std::size_t attribute_dim() const { return attributes_ ? attributes_->cols() : 0; }

  // Sorted by (relation, neighbor, direction). Throws LookupError for invalid ids.
  std::span<const NeighborEntry> neighbors(EntityId e) const;
  std::size_t degree(EntityId e) const { return neighbors(e).size(); }
  std::size_t adjacency_size() const { return adjacency_.size(); }

  // Membership over train, valid and test.
  bool is_known(const Triple& t) const { return known_.contains(t); }
  std::size_t num_known() const { return known_.size(); }

  friend KnowledgeGraph build_graph(DatasetSplit split, Vocab entities, Vocab relations,
                                    std::optional<Tensor> attributes, bool inverse_edges);

 private:
  DatasetSplit split_;
  Vocab entities_;
  Vocab relations_;
  std::optional<Tensor> attributes_;
  bool inverse_edges_ = true;
  std::size_t num_train_entities_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<NeighborEntry> adjacency_;
  std::unordered_set<Triple, TripleHash> known_;
};

KnowledgeGraph build_graph(DatasetSplit split, Vocab entities, Vocab relations,
                           std::optional<Tensor> attributes = std::nullopt, bool inverse_edges = true);
KnowledgeGraph build_graph(Dataset dataset, bool inverse_edges = true);

// Binary cache of vocabularies, splits and attributes. Re-serialising a loaded
// cache reproduces the same bytes.
std::vector<std::uint8_t> serialize_graph(const KnowledgeGraph& g, std::uint64_t source_hash = 0);
KnowledgeGraph deserialize_graph(std::span<const std::uint8_t> bytes, bool inverse_edges = true,
                                 std::uint64_t* source_hash = nullptr);
void save_graph_cache(const std::filesystem::path& path, const KnowledgeGraph& g, std::uint64_t source_hash);
KnowledgeGraph load_graph_cache(const std::filesystem::path& path, bool inverse_edges = true,
                                std::uint64_t* source_hash = nullptr);

}  // namespace kgnn

template <>
struct std::hash<kgnn::EntityId> {
  std::size_t operator()(const kgnn::EntityId& e) const noexcept { return std::hash<std::uint32_t>{}(e.value); }
};
