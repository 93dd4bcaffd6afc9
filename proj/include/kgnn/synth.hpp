#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kgnn {

// Generators for the synthetic benchmark graphs. Output is written as a regular
// dataset directory (train/valid/test.tsv, optional attributes.tsv) so the same
// loading path is exercised as for real data.

struct NamedTriple {
  std::string head;
  std::string relation;
  std::string tail;
  friend bool operator==(const NamedTriple&, const NamedTriple&) = default;
};

struct SyntheticKg {
  std::vector<NamedTriple> train;
  std::vector<NamedTriple> valid;
  std::vector<NamedTriple> test;
  std::map<std::string, std::vector<double>> attributes;
};

// Leaves hang off mids, mids hang off cluster hubs, and every leaf's "likes" tail
// is drawn from its hub's answer set. A leaf and its mid never carry the answer
// directly, so the tail is only predictable through the two-hop path to the hub.
// Each leaf also "mentions" random mids of other clusters, which a model has to
// learn to discount.
struct CompositionalOptions {
  std::size_t clusters = 50;
  std::size_t mids_per_cluster = 4;
  std::size_t leaves_per_mid = 8;
  std::size_t answers_per_cluster = 4;
  std::size_t distractors_per_leaf = 0;
  double heldout_fraction = 0.3;
  std::uint64_t seed = 1;
};
SyntheticKg compositional_kg(const CompositionalOptions& opts);

// Entities in clusters; relation r maps cluster c to cluster perm_r(c), with a
// fraction of uniformly random edges as noise.
struct ClusteredOptions {
  std::size_t entities = 5000;
  std::size_t relations = 10;
  std::size_t clusters = 50;
  std::size_t triples = 50000;
  double noise = 0.1;
  double test_fraction = 0.02;
  std::uint64_t seed = 1;
};
SyntheticKg clustered_kg(const ClusteredOptions& opts);

// Clustered graph whose entities carry noisy cluster-prototype attributes. A
// fraction of entities is held out entirely: none of their triples is in train
// and every test triple touches one of them.
struct AttributeOptions {
  std::size_t entities = 600;
  std::size_t relations = 4;
  std::size_t clusters = 12;
  std::size_t attribute_dim = 16;
  std::size_t edges_per_entity = 6;
  double attribute_noise = 0.3;
  double heldout_fraction = 0.1;
  std::uint64_t seed = 1;
};
SyntheticKg attribute_kg(const AttributeOptions& opts);

// Writes train/valid/test.tsv and, when present, attributes.tsv. Train triples
// come first so that train entities receive the lowest ids on load.
void write_synthetic(const std::filesystem::path& dir, const SyntheticKg& kg);

}  // namespace kgnn
