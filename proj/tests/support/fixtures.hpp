#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kgnn/kg_store.hpp"
#include "kgnn/model.hpp"
#include "kgnn/rng.hpp"

namespace kgnn::testing {

inline Triple tri(std::uint32_t h, std::uint32_t r, std::uint32_t t) { return {EntityId{h}, RelationId{r}, EntityId{t}}; }

// Graph over entities e0..e{n-1} and relations r0..r{m-1} from explicit id triples.
inline KnowledgeGraph graph_from(std::size_t entities, std::size_t relations, std::vector<Triple> train,
                                 std::vector<Triple> valid = {}, std::vector<Triple> test = {},
                                 std::optional<Tensor> attributes = std::nullopt, bool inverse_edges = true) {
  Vocab ev, rv;
  for (std::size_t i = 0; i < entities; ++i) ev.add("e" + std::to_string(i));
  for (std::size_t i = 0; i < relations; ++i) rv.add("r" + std::to_string(i));
  DatasetSplit split{std::move(train), std::move(valid), std::move(test)};
  return build_graph(std::move(split), std::move(ev), std::move(rv), std::move(attributes), inverse_edges);
}

// Six entities, two relations, a connected mix of chains and a cycle.
inline KnowledgeGraph toy_graph(std::optional<Tensor> attributes = std::nullopt) {
  return graph_from(6, 2,
                    {tri(0, 0, 1), tri(1, 0, 2), tri(2, 1, 3), tri(3, 1, 4), tri(4, 0, 5), tri(5, 1, 0), tri(1, 1, 4),
                     tri(0, 1, 3)},
                    {}, {tri(2, 0, 5)}, std::move(attributes));
}

// Random graph with `triples` distinct train triples, every entity used.
inline KnowledgeGraph random_graph(std::size_t entities, std::size_t relations, std::size_t triples,
                                   std::uint64_t seed) {
  Rng rng = make_rng({seed, 0x7E57});
  std::uniform_int_distribution<std::uint32_t> pick_e(0, static_cast<std::uint32_t>(entities - 1));
  std::uniform_int_distribution<std::uint32_t> pick_r(0, static_cast<std::uint32_t>(relations - 1));
  std::vector<Triple> train;
  for (std::uint32_t e = 0; e + 1 < entities; ++e) train.push_back(tri(e, pick_r(rng), e + 1));
  while (train.size() < triples) {
    const Triple t = tri(pick_e(rng), pick_r(rng), pick_e(rng));
    if (t.head == t.tail || std::find(train.begin(), train.end(), t) != train.end()) continue;
    train.push_back(t);
  }
  return graph_from(entities, relations, std::move(train));
}

inline ModelSpec spec_for(const KnowledgeGraph& g, EncoderKind encoder, DecoderKind decoder, std::size_t dim = 8,
                          std::size_t hops = 2, Norm norm = Norm::kL2, bool use_attributes = false) {
  EncoderConfig enc;
  enc.hops = hops;
  enc.embed_dim = dim;
  enc.attention_hidden = dim;
  enc.use_attributes = use_attributes;
  return make_model_spec(g, encoder, enc, decoder, norm);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("kgnn-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace kgnn::testing
