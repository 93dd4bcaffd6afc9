#include "kgnn/kg_store.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kgnn/bytes.hpp"
#include "kgnn/error.hpp"

namespace kgnn {
namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open " + path.string());
  return in;
}

constexpr std::uint32_t kCacheMagic = 0x4347474B;  // "KGGC"
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LookupError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LookupError("short write to " + path);
}

std::uint32_t Vocab::add(std::string_view name) {
  if (auto id = find(name)) return *id;
  if (frozen_) throw LookupError("unknown symbol '" + std::string(name) + "' under a frozen vocabulary");
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocab::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocab::at(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw LookupError("unknown symbol '" + std::string(name) + "'");
}

const std::string& Vocab::name(std::uint32_t id) const {
  if (id >= names_.size()) throw LookupError("id " + std::to_string(id) + " out of vocabulary");
  return names_[id];
}

Vocab Vocab::load(const fs::path& path) {
  auto in = open_input(path);
  std::vector<std::pair<std::string, std::uint32_t>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    auto fields = split(text, '\t');
    if (fields.size() == 1 && lineno == 1) continue;  // leading count line
    if (fields.size() != 2) throw ParseError(path.string(), lineno, "expected 'name<TAB>id'");
    std::uint32_t id = 0;
    auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), id);
    if (ec != std::errc() || ptr != fields[1].data() + fields[1].size()) {
      throw ParseError(path.string(), lineno, "bad id '" + std::string(fields[1]) + "'");
    }
    rows.emplace_back(std::string(fields[0]), id);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  Vocab v;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].second != i) throw ParseError(path.string(), 0, "ids are not dense in [0, n)");
    if (v.add(rows[i].first) != i) throw ParseError(path.string(), 0, "duplicate name '" + rows[i].first + "'");
  }
  v.freeze();
  return v;
}

void Vocab::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LookupError("cannot write " + path.string());
  for (std::size_t i = 0; i < names_.size(); ++i) out << names_[i] << '\t' << i << '\n';
}

std::vector<Triple> load_triples(const fs::path& path, Vocab& entities, Vocab& relations) {
  auto in = open_input(path);
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    auto fields = split(text, '\t');
    if (fields.size() != 3) {
      throw ParseError(path.string(), lineno, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    Triple t;
    t.head = EntityId{entities.add(fields[0])};
    t.relation = RelationId{relations.add(fields[1])};
    t.tail = EntityId{entities.add(fields[2])};
    out.push_back(t);
  }
  return out;
}

LoadedTriples load_triples(const fs::path& path) {
  LoadedTriples out;
  out.triples = load_triples(path, out.entities, out.relations);
  return out;
}

void save_triples(const fs::path& path, std::span<const Triple> triples, const Vocab& entities,
                  const Vocab& relations) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LookupError("cannot write " + path.string());
  for (const auto& t : triples) {
    out << entities.name(t.head.value) << '\t' << relations.name(t.relation.value) << '\t'
        << entities.name(t.tail.value) << '\n';
  }
}

Tensor load_attributes(const fs::path& path, const Vocab& entities) {
  auto in = open_input(path);
  std::vector<std::vector<double>> rows(entities.size());
  std::vector<bool> seen(entities.size(), false);
  std::size_t dim = 0;
  bool have_dim = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    auto fields = split(text, '\t');
    if (fields.size() != 2) throw ParseError(path.string(), lineno, "expected 'entity<TAB>v1,v2,...'");
    const auto id = entities.find(fields[0]);
    if (!id) throw ParseError(path.string(), lineno, "unknown entity '" + std::string(fields[0]) + "'");
    std::vector<double> values;
    for (auto tok : split(fields[1], ',')) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError(path.string(), lineno, "bad number '" + std::string(tok) + "'");
      }
      values.push_back(v);
    }
    if (!have_dim) {
      dim = values.size();
      have_dim = true;
    } else if (values.size() != dim) {
      throw ParseError(path.string(), lineno, "attribute width " + std::to_string(values.size()) + " != " +
                                                  std::to_string(dim));
    }
    rows[*id] = std::move(values);
    seen[*id] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw DimensionError("attributes missing for entity '" + entities.name(i) + "'");
  }
  std::vector<double> flat;
  flat.reserve(entities.size() * dim);
  for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::matrix(entities.size(), dim, std::move(flat));
}

Dataset load_dataset(const fs::path& dir) {
  auto find = [&](std::string_view stem) -> std::optional<fs::path> {
    for (const char* ext : {".tsv", ".txt"}) {
      fs::path p = dir / (std::string(stem) + ext);
      if (fs::exists(p)) return p;
    }
    return std::nullopt;
  };
  Dataset ds;
  if (auto p = find("entity2id")) ds.entities = Vocab::load(*p);
  if (auto p = find("relation2id")) ds.relations = Vocab::load(*p);
  auto train = find("train");
  if (!train) throw LookupError("no train.tsv or train.txt in " + dir.string());
  ds.split.train = load_triples(*train, ds.entities, ds.relations);
  if (auto p = find("valid")) ds.split.valid = load_triples(*p, ds.entities, ds.relations);
  if (auto p = find("test")) ds.split.test = load_triples(*p, ds.entities, ds.relations);
  if (auto p = find("attributes")) ds.attributes = load_attributes(*p, ds.entities);
  return ds;
}

KnowledgeGraph build_graph(DatasetSplit split, Vocab entities, Vocab relations, std::optional<Tensor> attributes,
                           bool inverse_edges) {
  const std::size_t n = entities.size();
  auto check = [&](const Triple& t) {
    if (t.head.value >= n || t.tail.value >= n || t.relation.value >= relations.size()) {
      throw LookupError("triple references an id outside the vocabulary");
    }
  };
  for (const auto* part : {&split.train, &split.valid, &split.test}) {
    for (const auto& t : *part) check(t);
  }
  if (attributes && (attributes->rank() != 2 || attributes->rows() != n)) {
    throw DimensionError("attribute rows " + std::to_string(attributes->rows()) + " != entity count " +
                         std::to_string(n));
  }

  KnowledgeGraph g;
  g.inverse_edges_ = inverse_edges;
  std::vector<std::vector<NeighborEntry>> lists(n);
  std::uint32_t max_train = 0;
  bool any = false;
  for (const auto& t : split.train) {
    lists[t.head.value].push_back({t.relation, t.tail, Direction::kOutgoing});
    if (inverse_edges) lists[t.tail.value].push_back({t.relation, t.head, Direction::kIncoming});
    max_train = std::max({max_train, t.head.value, t.tail.value});
    any = true;
  }
  g.num_train_entities_ = any ? max_train + 1 : 0;
  g.offsets_.assign(n + 1, 0);
  for (std::size_t e = 0; e < n; ++e) {
    std::sort(lists[e].begin(), lists[e].end());
    g.offsets_[e + 1] = g.offsets_[e] + lists[e].size();
  }
  g.adjacency_.reserve(g.offsets_[n]);
  for (auto& l : lists) g.adjacency_.insert(g.adjacency_.end(), l.begin(), l.end());

  for (const auto* part : {&split.train, &split.valid, &split.test}) g.known_.insert(part->begin(), part->end());
  g.split_ = std::move(split);
  g.entities_ = std::move(entities);
  g.relations_ = std::move(relations);
  g.attributes_ = std::move(attributes);
  return g;
}

KnowledgeGraph build_graph(Dataset dataset, bool inverse_edges) {
  return build_graph(std::move(dataset.split), std::move(dataset.entities), std::move(dataset.relations),
                     std::move(dataset.attributes), inverse_edges);
}

std::span<const NeighborEntry> KnowledgeGraph::neighbors(EntityId e) const {
  if (e.value >= num_entities()) throw LookupError("entity id " + std::to_string(e.value) + " out of range");
  return std::span<const NeighborEntry>(adjacency_).subspan(offsets_[e.value], offsets_[e.value + 1] - offsets_[e.value]);
}

std::vector<std::uint8_t> serialize_graph(const KnowledgeGraph& g, std::uint64_t source_hash) {
  ByteWriter w;
  w.u32(kCacheMagic);
  w.u32(kCacheVersion);
  w.u64(source_hash);
  for (const Vocab* v : {&g.entity_vocab(), &g.relation_vocab()}) {
    w.u32(static_cast<std::uint32_t>(v->size()));
    for (const auto& name : v->names()) w.str(name);
  }
  for (const auto* part : {&g.split().train, &g.split().valid, &g.split().test}) {
    w.u32(static_cast<std::uint32_t>(part->size()));
    for (const auto& t : *part) {
      w.u32(t.head.value);
      w.u32(t.relation.value);
      w.u32(t.tail.value);
    }
  }
  const auto& attrs = g.attributes();
  w.u8(attrs ? 1 : 0);
  if (attrs) {
    w.u32(static_cast<std::uint32_t>(attrs->rows()));
    w.u32(static_cast<std::uint32_t>(attrs->cols()));
    for (double x : attrs->storage()) w.f64(x);
  }
  return w.take();
}

KnowledgeGraph deserialize_graph(std::span<const std::uint8_t> bytes, bool inverse_edges, std::uint64_t* source_hash) {
  ByteReader r(bytes);
  if (r.u32() != kCacheMagic) throw CheckpointError("graph cache: bad magic");
  if (r.u32() != kCacheVersion) throw CheckpointError("graph cache: unsupported version");
  const std::uint64_t hash = r.u64();
  if (source_hash) *source_hash = hash;
  Vocab vocabs[2];
  for (auto& v : vocabs) {
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) v.add(r.str());
  }
  DatasetSplit split;
  for (auto* part : {&split.train, &split.valid, &split.test}) {
    const std::uint32_t n = r.u32();
    part->reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      Triple t;
      t.head.value = r.u32();
      t.relation.value = r.u32();
      t.tail.value = r.u32();
      part->push_back(t);
    }
  }
  std::optional<Tensor> attrs;
  if (r.u8()) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (auto& x : data) x = r.f64();
    attrs = Tensor::matrix(rows, cols, std::move(data));
  }
  if (!r.done()) throw CheckpointError("graph cache: trailing bytes");
  return build_graph(std::move(split), std::move(vocabs[0]), std::move(vocabs[1]), std::move(attrs), inverse_edges);
}

void save_graph_cache(const fs::path& path, const KnowledgeGraph& g, std::uint64_t source_hash) {
  write_file_bytes(path.string(), serialize_graph(g, source_hash));
}

KnowledgeGraph load_graph_cache(const fs::path& path, bool inverse_edges, std::uint64_t* source_hash) {
  const auto bytes = read_file_bytes(path.string());
  return deserialize_graph(bytes, inverse_edges, source_hash);
}

}  // namespace kgnn
