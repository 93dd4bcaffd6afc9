#include "kgnn/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <thread>

#include "kgnn/decoder.hpp"
#include "kgnn/encoder.hpp"
#include "kgnn/error.hpp"
#include "kgnn/sampler.hpp"

namespace kgnn {
namespace {

const Tensor& need(const ParameterSet& params, const ParamKey& key) {
  auto it = params.find(key);
  if (it == params.end()) throw LookupError("parameter " + to_string(key) + " missing");
  return it->second;
}

// Decoder parameters of one relation, fetched once per query.
class RelationScorer {
 public:
  RelationScorer(const ModelSpec& spec, const ParameterSet& params, RelationId r)
      : spec_(spec), er_(need(params, decoder_relation_key(r.value)).data()) {
    if (spec.decoder == DecoderKind::kTransH) w_ = need(params, {ParamKind::kHyperplane, r.value}).data();
    if (spec.decoder == DecoderKind::kTransR) m_ = &need(params, {ParamKind::kProjMatrix, r.value});
  }

  double operator()(std::span<const double> h, std::span<const double> t) const {
    switch (spec_.decoder) {
      case DecoderKind::kTransE: return score_transe(h, er_, t, spec_.norm);
      case DecoderKind::kTransH: return score_transh(h, er_, w_, t, spec_.norm, spec_.enc.strict);
      case DecoderKind::kTransR: return score_transr(h, er_, *m_, t, spec_.norm);
      case DecoderKind::kDistMult: return score_distmult(h, er_, t);
    }
    throw ContractError("unknown decoder");
  }

 private:
  const ModelSpec& spec_;
  std::span<const double> er_;
  std::span<const double> w_;
  const Tensor* m_ = nullptr;
};

void check_table(const Tensor& table, EntityId e) {
  if (e.value >= table.rows()) throw LookupError("entity " + std::to_string(e.value) + " outside the entity table");
}

}  // namespace

std::string_view to_string(RankMode mode) { return mode == RankMode::kRaw ? "raw" : "filtered"; }

RankMode parse_rank_mode(std::string_view s) {
  if (s == "raw") return RankMode::kRaw;
  if (s == "filtered") return RankMode::kFiltered;
  throw ConfigError("eval.mode", "expected raw|filtered, got '" + std::string(s) + "'");
}

Tensor encode_entities(const ModelSpec& spec, const ParameterSet& params, const KnowledgeGraph& g,
                       const EvalConfig& cfg) {
  const std::size_t n = g.num_entities();
  const std::size_t d = spec.dim();
  Tensor table({n, d});
  if (spec.encoder == EncoderKind::kLookup) {
    for (std::size_t e = 0; e < std::min(n, spec.num_entities); ++e) {
      const auto row = need(params, entity_key(e)).data();
      std::copy(row.begin(), row.end(), table.row(e).begin());
    }
    return table;
  }
  const std::size_t chunk = std::max<std::size_t>(1, cfg.chunk);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    std::vector<EntityId> seeds;
    for (std::size_t e = begin; e < std::min(n, begin + chunk); ++e) seeds.push_back(EntityId{static_cast<std::uint32_t>(e)});
    const SubGraph sg = sample_subgraph_keyed(seeds, g, spec.enc.hops, cfg.fanout, cfg.seed);
    Tape tape;
    ModelContext ctx(tape, params, spec, /*requires_grad=*/false);
    const EncodedBatch enc = encode(ctx, g, sg);
    const Tensor& rows = enc.embeddings.value();
    for (std::size_t i = 0; i < enc.entities.size(); ++i) {
      auto src = rows.row(i);
      std::copy(src.begin(), src.end(), table.row(enc.entities[i].value).begin());
    }
  }
  return table;
}

std::vector<double> tail_energies(const ModelSpec& spec, const ParameterSet& params, const Tensor& table,
                                  EntityId head, RelationId r) {
  check_table(table, head);
  const RelationScorer scorer(spec, params, r);
  std::vector<double> out(table.rows());
  for (std::size_t e = 0; e < table.rows(); ++e) out[e] = scorer(table.row(head.value), table.row(e));
  return out;
}

std::vector<double> head_energies(const ModelSpec& spec, const ParameterSet& params, const Tensor& table,
                                  RelationId r, EntityId tail) {
  check_table(table, tail);
  const RelationScorer scorer(spec, params, r);
  std::vector<double> out(table.rows());
  for (std::size_t e = 0; e < table.rows(); ++e) out[e] = scorer(table.row(e), table.row(tail.value));
  return out;
}

TripleRanks rank_triple(const Triple& t, const ModelSpec& spec, const ParameterSet& params, const Tensor& table,
                        const KnowledgeGraph& g, RankMode mode) {
  check_table(table, t.head);
  check_table(table, t.tail);
  TripleRanks out;
  {
    const auto energy = tail_energies(spec, params, table, t.head, t.relation);
    const double target = energy[t.tail.value];
    std::size_t better = 0;
    for (std::size_t e = 0; e < energy.size(); ++e) {
      if (!(energy[e] < target)) continue;
      if (mode == RankMode::kFiltered && g.is_known({t.head, t.relation, EntityId{static_cast<std::uint32_t>(e)}})) continue;
      ++better;
    }
    out.tail = better + 1;
  }
  {
    const auto energy = head_energies(spec, params, table, t.relation, t.tail);
    const double target = energy[t.head.value];
    std::size_t better = 0;
    for (std::size_t e = 0; e < energy.size(); ++e) {
      if (!(energy[e] < target)) continue;
      if (mode == RankMode::kFiltered && g.is_known({EntityId{static_cast<std::uint32_t>(e)}, t.relation, t.tail})) continue;
      ++better;
    }
    out.head = better + 1;
  }
  return out;
}

RankingResult summarize_ranks(std::span<const TripleRanks> ranks, RankMode mode, std::span<const std::size_t> ks) {
  if (ranks.empty()) throw ContractError("link_prediction: empty test split");
  RankingResult out;
  out.mode = mode;
  out.queries = ranks.size();
  const double n = static_cast<double>(ranks.size());
  double head_sum = 0.0, tail_sum = 0.0;
  for (const auto& r : ranks) {
    head_sum += static_cast<double>(r.head);
    tail_sum += static_cast<double>(r.tail);
  }
  out.head.mean_rank = head_sum / n;
  out.tail.mean_rank = tail_sum / n;
  out.both.mean_rank = (head_sum + tail_sum) / (2.0 * n);
  for (auto k : ks) {
    std::size_t head_hits = 0, tail_hits = 0;
    for (const auto& r : ranks) {
      head_hits += r.head <= k ? 1 : 0;
      tail_hits += r.tail <= k ? 1 : 0;
    }
    out.head.hits[k] = static_cast<double>(head_hits) / n;
    out.tail.hits[k] = static_cast<double>(tail_hits) / n;
    out.both.hits[k] = static_cast<double>(head_hits + tail_hits) / (2.0 * n);
  }
  return out;
}

RankingResult link_prediction(const ModelSpec& spec, const ParameterSet& params, const KnowledgeGraph& g,
                              std::span<const Triple> test, RankMode mode, const EvalConfig& cfg,
                              std::span<const std::size_t> ks) {
  if (test.empty()) throw ContractError("link_prediction: empty test split");
  const Tensor table = encode_entities(spec, params, g, cfg);
  std::vector<TripleRanks> ranks(test.size());
  const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, test.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) ranks[i] = rank_triple(test[i], spec, params, table, g, mode);
  };
  if (threads == 1) {
    work(0, test.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t per = (test.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * per;
      if (begin >= test.size()) break;
      pool.emplace_back(work, begin, std::min(test.size(), begin + per));
    }
  }
  return summarize_ranks(ranks, mode, ks);
}

double auc_rank_sum(std::span<const double> pos_energy, std::span<const double> neg_energy) {
  const std::size_t np = pos_energy.size();
  const std::size_t nn = neg_energy.size();
  if (np == 0 || nn == 0) throw ContractError("auc: need at least one positive and one negative");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(np + nn);
  for (double e : pos_energy) items.push_back({-e, true});
  for (double e : neg_energy) items.push_back({-e, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    // Ranks i+1 .. j share their mean.
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (items[k].positive) rank_sum += midrank;
    }
    i = j;
  }
  const double dp = static_cast<double>(np);
  return (rank_sum - dp * (dp + 1.0) / 2.0) / (dp * static_cast<double>(nn));
}

ClassificationResult triplet_classification(const ModelSpec& spec, const ParameterSet& params,
                                            const KnowledgeGraph& g, std::span<const Triple> test,
                                            std::uint64_t seed, const EvalConfig& cfg) {
  if (test.empty()) throw ContractError("triplet_classification: empty test split");
  const Tensor table = encode_entities(spec, params, g, cfg);
  SamplerConfig sampler;
  sampler.negatives_per_positive = 1;
  sampler.filter_false_negatives = true;
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Triple& t = test[i];
    Rng rng = make_rng({seed, 0xC1A5u, i});
    const Triple c = corrupt(t, g, sampler, rng, g.num_entities()).front().triple;
    pos.push_back(RelationScorer(spec, params, t.relation)(table.row(t.head.value), table.row(t.tail.value)));
    neg.push_back(RelationScorer(spec, params, c.relation)(table.row(c.head.value), table.row(c.tail.value)));
  }
  ClassificationResult out;
  out.auc = auc_rank_sum(pos, neg);
  out.positives = pos.size();
  out.negatives = neg.size();
  out.seed = seed;
  return out;
}

void write_ranking_csv(const std::filesystem::path& path, const std::vector<RankingResult>& results) {
  std::ofstream out(path);
  out << "mode,side,k,hit_ratio,mean_rank\n";
  for (const auto& r : results) {
    const std::pair<const char*, const SideMetrics*> sides[] = {{"head", &r.head}, {"tail", &r.tail}, {"both", &r.both}};
    for (const auto& [name, side] : sides) {
      for (const auto& [k, hr] : side->hits) {
        out << to_string(r.mode) << ',' << name << ',' << k << ',' << hr << ',' << side->mean_rank << '\n';
      }
    }
  }
}

void write_classification_csv(const std::filesystem::path& path, const ClassificationResult& result) {
  std::ofstream out(path);
  out << "auc,n_pos,n_neg,seed\n" << result.auc << ',' << result.positives << ',' << result.negatives << ','
      << result.seed << '\n';
}

void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report) {
  std::ofstream out(path);
  out << "setting,hr10,epoch_seconds\n";
  for (const auto& p : report.points) out << p.setting << ',' << p.hr10 << ',' << p.epoch_seconds << '\n';
}

void write_plot_data(const std::filesystem::path& dir, const SweepReport& report) {
  std::filesystem::create_directories(dir);
  std::ofstream hr(dir / (report.axis + "_hr10.csv"));
  std::ofstream secs(dir / (report.axis + "_epoch_seconds.csv"));
  hr << "x,y\n";
  secs << "x,y\n";
  for (const auto& p : report.points) {
    hr << p.setting << ',' << p.hr10 << '\n';
    secs << p.setting << ',' << p.epoch_seconds << '\n';
  }
}

}  // namespace kgnn
