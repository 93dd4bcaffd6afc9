#include "kgnn/synth.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "kgnn/error.hpp"
#include "kgnn/rng.hpp"

namespace kgnn {
namespace fs = std::filesystem;

namespace {

std::string name(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

std::size_t uniform(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

// Splits `items` into (kept, held) with round(fraction * n) held out.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_off(std::vector<T> items, double fraction, Rng& rng) {
  std::shuffle(items.begin(), items.end(), rng);
  const auto held = static_cast<std::size_t>(fraction * static_cast<double>(items.size()) + 0.5);
  std::vector<T> out(items.end() - static_cast<std::ptrdiff_t>(held), items.end());
  items.resize(items.size() - held);
  return {std::move(items), std::move(out)};
}

// Halves `held` into valid and test.
void assign_heldout(SyntheticKg& kg, std::vector<NamedTriple> held) {
  const std::size_t half = held.size() / 2;
  kg.valid.assign(held.begin(), held.begin() + static_cast<std::ptrdiff_t>(half));
  kg.test.assign(held.begin() + static_cast<std::ptrdiff_t>(half), held.end());
}

}  // namespace

SyntheticKg compositional_kg(const CompositionalOptions& o) {
  if (o.clusters == 0 || o.mids_per_cluster == 0 || o.leaves_per_mid == 0 || o.answers_per_cluster == 0) {
    throw ContractError("compositional_kg: all counts must be positive");
  }
  Rng rng = make_rng({o.seed, 0xC0C0});
  SyntheticKg kg;
  std::vector<NamedTriple> likes;
  std::size_t mid = 0;
  std::size_t leaf = 0;
  for (std::size_t c = 0; c < o.clusters; ++c) {
    const std::string hub = name("hub", c);
    for (std::size_t a = 0; a < o.answers_per_cluster; ++a) {
      kg.train.push_back({hub, "offers", name("item", c * o.answers_per_cluster + a)});
    }
    for (std::size_t m = 0; m < o.mids_per_cluster; ++m, ++mid) {
      kg.train.push_back({name("mid", mid), "member_of", hub});
      for (std::size_t l = 0; l < o.leaves_per_mid; ++l, ++leaf) {
        kg.train.push_back({name("leaf", leaf), "follows", name("mid", mid)});
        for (std::size_t k = 0; k < o.distractors_per_leaf && o.clusters > 1; ++k) {
          const std::size_t other = (c + 1 + uniform(rng, o.clusters - 1)) % o.clusters;
          const std::size_t target = other * o.mids_per_cluster + uniform(rng, o.mids_per_cluster);
          kg.train.push_back({name("leaf", leaf), "mentions", name("mid", target)});
        }
        const std::size_t a = uniform(rng, o.answers_per_cluster);
        likes.push_back({name("leaf", leaf), "likes", name("item", c * o.answers_per_cluster + a)});
      }
    }
  }
  auto [kept, held] = split_off(std::move(likes), o.heldout_fraction, rng);
  kg.train.insert(kg.train.end(), kept.begin(), kept.end());
  std::shuffle(kg.train.begin(), kg.train.end(), rng);
  assign_heldout(kg, std::move(held));
  return kg;
}

SyntheticKg clustered_kg(const ClusteredOptions& o) {
  if (o.entities < 2 || o.relations == 0 || o.clusters == 0 || o.clusters > o.entities) {
    throw ContractError("clustered_kg: need entities >= clusters >= 1 and relations >= 1");
  }
  Rng rng = make_rng({o.seed, 0xC1C1});
  std::vector<std::vector<std::size_t>> members(o.clusters);
  for (std::size_t e = 0; e < o.entities; ++e) members[e % o.clusters].push_back(e);
  std::vector<std::vector<std::size_t>> perm(o.relations, std::vector<std::size_t>(o.clusters));
  for (auto& p : perm) {
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), rng);
  }
  std::bernoulli_distribution noisy(o.noise);
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  std::vector<NamedTriple> all;
  const std::size_t max_attempts = o.triples * 20;
  for (std::size_t attempt = 0; all.size() < o.triples && attempt < max_attempts; ++attempt) {
    const std::size_t h = uniform(rng, o.entities);
    const std::size_t r = uniform(rng, o.relations);
    const auto& pool = noisy(rng) ? members[uniform(rng, o.clusters)] : members[perm[r][h % o.clusters]];
    const std::size_t t = pool[uniform(rng, pool.size())];
    if (t == h || !seen.emplace(h, r, t).second) continue;
    all.push_back({name("e", h), name("r", r), name("e", t)});
  }
  if (all.size() < o.triples) throw ExhaustionError("clustered_kg: could not draw enough distinct triples");
  SyntheticKg kg;
  auto [kept, held] = split_off(std::move(all), 2.0 * o.test_fraction, rng);
  kg.train = std::move(kept);
  assign_heldout(kg, std::move(held));
  return kg;
}

SyntheticKg attribute_kg(const AttributeOptions& o) {
  if (o.entities < 2 * o.clusters || o.relations == 0 || o.clusters == 0 || o.attribute_dim == 0) {
    throw ContractError("attribute_kg: need entities >= 2 * clusters and positive sizes");
  }
  Rng rng = make_rng({o.seed, 0xA77B});
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> prototypes(o.clusters, std::vector<double>(o.attribute_dim));
  for (auto& p : prototypes) {
    for (auto& v : p) v = gauss(rng);
  }
  std::vector<std::size_t> cluster(o.entities);
  std::vector<std::vector<std::size_t>> members(o.clusters);
  for (std::size_t e = 0; e < o.entities; ++e) {
    cluster[e] = e % o.clusters;
    members[cluster[e]].push_back(e);
  }
  std::vector<std::size_t> ids(o.entities);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  auto [seen_ids, unseen_ids] = split_off(ids, o.heldout_fraction, rng);
  std::vector<bool> unseen(o.entities, false);
  for (auto e : unseen_ids) unseen[e] = true;

  std::vector<std::vector<std::size_t>> perm(o.relations, std::vector<std::size_t>(o.clusters));
  for (auto& p : perm) {
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), rng);
  }
  SyntheticKg kg;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> used;
  std::vector<NamedTriple> held;
  for (std::size_t h = 0; h < o.entities; ++h) {
    for (std::size_t k = 0; k < o.edges_per_entity; ++k) {
      const std::size_t r = uniform(rng, o.relations);
      const auto& pool = members[perm[r][cluster[h]]];
      const std::size_t t = pool[uniform(rng, pool.size())];
      if (t == h || !used.emplace(h, r, t).second) continue;
      NamedTriple triple{name("e", h), name("r", r), name("e", t)};
      (unseen[h] || unseen[t] ? held : kg.train).push_back(std::move(triple));
    }
  }
  assign_heldout(kg, std::move(held));
  for (std::size_t e = 0; e < o.entities; ++e) {
    std::vector<double> a = prototypes[cluster[e]];
    for (auto& v : a) v += o.attribute_noise * gauss(rng);
    kg.attributes.emplace(name("e", e), std::move(a));
  }
  return kg;
}

void write_synthetic(const fs::path& dir, const SyntheticKg& kg) {
  fs::create_directories(dir);
  auto write = [&](const char* file, const std::vector<NamedTriple>& triples) {
    std::ofstream out(dir / file);
    for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
    if (!out) throw LookupError("cannot write " + (dir / file).string());
  };
  write("train.tsv", kg.train);
  write("valid.tsv", kg.valid);
  write("test.tsv", kg.test);
  if (!kg.attributes.empty()) {
    std::ofstream out(dir / "attributes.tsv");
    out.precision(17);
    for (const auto& [entity, values] : kg.attributes) {
      out << entity << '\t';
      for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
      out << '\n';
    }
    if (!out) throw LookupError("cannot write " + (dir / "attributes.tsv").string());
  }
}

}  // namespace kgnn
