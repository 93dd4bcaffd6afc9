// End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
// `acceptance N` runs criterion N alone, no argument runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "kgnn/config.hpp"
#include "kgnn/decoder.hpp"
#include "kgnn/encoder.hpp"
#include "kgnn/eval.hpp"
#include "kgnn/ps/runtime.hpp"
#include "kgnn/runner.hpp"
#include "kgnn/synth.hpp"
#include "oracles.hpp"
#include "session.hpp"

using namespace kgnn;
using namespace kgnn::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

const DecoderKind kDecoders[] = {DecoderKind::kTransE, DecoderKind::kTransH, DecoderKind::kTransR,
                                 DecoderKind::kDistMult};

RunConfig load_bundled(const std::string& name) { return load_config(fs::path(KGNN_SOURCE_DIR) / "configs" / name); }

double filtered_hr10(const RunConfig& cfg, const KnowledgeGraph& g, const ModelSpec& spec, const ParameterSet& p,
                     std::span<const Triple> split) {
  return link_prediction(spec, p, g, split, RankMode::kFiltered, cfg.eval).hr(10);
}

// 1. Analytic gradients of the full model against central differences.
Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  const KnowledgeGraph g = toy_graph();
  double worst = 0.0;
  std::string where;
  std::size_t checks = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    for (auto decoder : kDecoders) {
      const ModelSpec spec = spec_for(g, EncoderKind::kGnn, decoder, 8, 2);
      const ParameterSet params = initial_parameters(spec, seed);
      const auto c = make_case(spec, g, 3, 2, seed);
      const GradCheckResult r = gradcheck(spec, g, params, c, 1e-5);
      ++checks;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        where = std::string(to_string(decoder)) + " seed " + std::to_string(seed) + " " + r.worst;
      }
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-4 && secs < 60.0,
          fmt("gradient correctness: max relative error %.3g over %zu checks (%s), %.1f s", worst, checks,
              where.c_str(), secs)};
}

// 2. Ranking and AUC against brute-force oracles.
Outcome oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t rank_mismatch = 0, ranks = 0, auc_mismatch = 0;
  Rng rng = make_rng({0xA0C});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const RankInstance inst = make_rank_instance(seed, 200);
    for (const auto& t : inst.queries) {
      for (RankMode mode : {RankMode::kRaw, RankMode::kFiltered}) {
        const bool filtered = mode == RankMode::kFiltered;
        const TripleRanks r = rank_triple(t, inst.spec, inst.params, inst.table, inst.graph, mode);
        rank_mismatch += r.tail != brute_force_rank(inst.spec, inst.params, inst.table, inst.graph, t, true, filtered);
        rank_mismatch += r.head != brute_force_rank(inst.spec, inst.params, inst.table, inst.graph, t, false, filtered);
        ranks += 2;
      }
    }
    const std::size_t n = inst.graph.num_entities();
    const auto pos = grid_energies(rng, 1 + seed % n);
    const auto neg = grid_energies(rng, n - seed % n);
    auc_mismatch += auc_rank_sum(pos, neg) != pairwise_auc(pos, neg);
  }
  const double secs = seconds_since(start);
  return {rank_mismatch == 0 && auc_mismatch == 0 && secs < 30.0,
          fmt("oracle equivalence: %zu/%zu rank mismatches, %zu/100 AUC mismatches, %.1f s", rank_mismatch, ranks,
              auc_mismatch, secs)};
}

// 3. Algebraic identities between decoders.
Outcome decoder_identities() {
  Rng rng = make_rng({0xDEC});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto vec = [&](std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = u(rng);
    return v;
  };
  double transr = 0.0, transh = 0.0, ortho = 0.0;
  bool symmetric = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + trial % 15;
    auto h = vec(d), r = vec(d), t = vec(d);
    Tensor eye({d, d});
    for (std::size_t i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    for (Norm n : {Norm::kL1, Norm::kL2}) {
      transr = std::max(transr, std::abs(score_transr(h, r, eye, t, n) - score_transe(h, r, t, n)));
    }
    symmetric = symmetric && score_distmult(h, r, t) == score_distmult(t, r, h);

    // Normal along one axis that h, r and t do not use.
    const std::size_t axis = static_cast<std::size_t>(trial) % d;
    h[axis] = r[axis] = t[axis] = 0.0;
    std::vector<double> w(d, 0.0);
    w[axis] = 1.0;
    for (Norm n : {Norm::kL1, Norm::kL2}) {
      transh = std::max(transh, std::abs(score_transh(h, r, w, t, n, true) - score_transe(h, r, t, n)));
    }

    // |h_perp|^2 + (w.h)^2 = |h|^2 holds exactly when h_perp is orthogonal to w.
    auto x = vec(d), normal = vec(d);
    double nn = 0.0;
    for (double v : normal) nn += v * v;
    for (auto& v : normal) v /= std::sqrt(nn);
    const std::vector<double> zero(d, 0.0);
    const double perp = score_transh(x, zero, normal, zero, Norm::kL2, true);
    double wx = 0.0, xx = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      wx += normal[i] * x[i];
      xx += x[i] * x[i];
    }
    ortho = std::max(ortho, std::abs(perp * perp + wx * wx - xx));
  }
  const bool pass = transr < 1e-10 && transh < 1e-10 && ortho < 1e-10 && symmetric;
  return {pass, fmt("decoder identities: TransR(I)-TransE %.2g, TransH(orthogonal)-TransE %.2g, projection "
                    "residual %.2g, DistMult symmetric %s",
                    transr, transh, ortho, symmetric ? "exactly" : "NOT exactly")};
}

// 4. Learning on the bundled 12-entity KG.
Outcome tiny_kg() {
  const auto start = std::chrono::steady_clock::now();
  RunConfig lookup = load_bundled("tiny-lookup-transe.conf");
  const KnowledgeGraph g = load_graph(lookup);
  const ModelSpec lspec = build_spec(lookup, g);
  const TrainResult lt = run_training(lookup, g, lspec, std::nullopt);
  const double train_hr1 = link_prediction(lspec, lt.params, g, g.split().train, RankMode::kFiltered, lookup.eval).hr(1);

  double hr10[2] = {0.0, 0.0};
  const char* names[2] = {"tiny-gnn-k1.conf", "tiny-gnn-k2.conf"};
  for (int i = 0; i < 2; ++i) {
    const RunConfig cfg = load_bundled(names[i]);
    const ModelSpec spec = build_spec(cfg, g);
    const TrainResult r = run_training(cfg, g, spec, std::nullopt);
    hr10[i] = filtered_hr10(cfg, g, spec, r.params, g.split().test);
  }
  const double secs = seconds_since(start);
  const bool pass = train_hr1 >= 0.9 && lookup.train.epochs <= 200 && hr10[1] > hr10[0] && secs < 300.0;
  return {pass, fmt("tiny KG: lookup+TransE train filtered HR@1 %.4f after %zu epochs; held-out filtered HR@10 "
                    "K=1 %.4f vs K=2 %.4f; %.1f s",
                    train_hr1, lookup.train.epochs, hr10[0], hr10[1], secs)};
}

// 5. GNN encoder against lookup embeddings where answers depend on 2-hop context.
Outcome encoder_vs_lookup() {
  const auto start = std::chrono::steady_clock::now();
  TempDir dir("compositional");
  std::vector<double> gaps;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CompositionalOptions o;
    o.clusters = 40;
    o.mids_per_cluster = 4;
    o.leaves_per_mid = 10;
    o.answers_per_cluster = 5;
    o.seed = seed;
    const fs::path data = dir.path() / ("seed-" + std::to_string(seed));
    write_synthetic(data, compositional_kg(o));
    RunConfig cfg = load_bundled("compositional-gnn.conf");
    cfg.data_dir = data;
    cfg.train.seed = seed;
    const KnowledgeGraph g = load_graph(cfg);
    double hr[2] = {0.0, 0.0};
    for (int i = 0; i < 2; ++i) {
      RunConfig run = cfg;
      if (i == 0) run.encoder = EncoderKind::kLookup;
      const ModelSpec spec = build_spec(run, g);
      const TrainResult r = run_training(run, g, spec, std::nullopt);
      hr[i] = filtered_hr10(run, g, spec, r.params, g.split().test);
    }
    gaps.push_back(hr[1] - hr[0]);
    detail += fmt(" seed %llu lookup %.4f gnn %.4f;", static_cast<unsigned long long>(seed), hr[0], hr[1]);
  }
  std::sort(gaps.begin(), gaps.end());
  const double secs = seconds_since(start);
  return {gaps[1] >= 0.05 && secs < 1800.0,
          fmt("encoder vs lookup: median HR@10 gain %.4f (need >= 0.05);%s %.1f s", gaps[1], detail.c_str(), secs)};
}

// 6. Parameter-server runs against local training and across worker counts.
Outcome distributed_fidelity() {
  const auto start = std::chrono::steady_clock::now();
  // Bit-level agreement of one worker with the local trainer on a small graph.
  const KnowledgeGraph small = random_graph(60, 3, 240, 6);
  RunConfig base = load_bundled("clustered-gnn.conf");
  const ModelSpec sspec = build_spec(base, small);
  TrainConfig short_cfg = base.train;
  short_cfg.epochs = 2;
  const TrainResult local = train_local(small, sspec, short_cfg, base.sampler);
  RuntimeConfig one;
  one.mode = RuntimeMode::kDistributed;
  one.workers = 1;
  const TrainResult dist = ps::train_distributed(small, sspec, short_cfg, base.sampler, one);
  const std::vector<Triple> probe(small.triples().begin(), small.triples().begin() + 60);
  const double local_hr = link_prediction(sspec, local.params, small, probe, RankMode::kFiltered).hr(10);
  const double dist_hr = link_prediction(sspec, dist.params, small, probe, RankMode::kFiltered).hr(10);
  double loss_gap = 0.0;
  for (std::size_t i = 0; i < local.reports.size(); ++i) {
    loss_gap = std::max(loss_gap, std::abs(local.reports[i].loss - dist.reports[i].loss));
  }
  const bool same = std::abs(local_hr - dist_hr) <= 1e-6 && loss_gap <= 1e-6;

  // Speed and accuracy on the 50k-triple graph.
  TempDir dir("clustered");
  ClusteredOptions co;
  write_synthetic(dir.path(), clustered_kg(co));
  base.data_dir = dir.path();
  const KnowledgeGraph g = load_graph(base);
  const ModelSpec spec = build_spec(base, g);
  double secs_per_epoch[2] = {0.0, 0.0}, hr10[2] = {0.0, 0.0};
  const std::size_t workers[2] = {1, 4};
  for (int i = 0; i < 2; ++i) {
    RunConfig cfg = base;
    cfg.runtime.mode = RuntimeMode::kDistributed;
    cfg.runtime.workers = workers[i];
    const TrainResult r = run_training(cfg, g, spec, std::nullopt);
    for (const auto& rep : r.reports) secs_per_epoch[i] += rep.seconds / static_cast<double>(r.reports.size());
    hr10[i] = filtered_hr10(cfg, g, spec, r.params, g.split().test);
  }
  const double ratio = secs_per_epoch[1] / secs_per_epoch[0];
  const double secs = seconds_since(start);
  const bool pass = same && ratio <= 0.6 && std::abs(hr10[1] - hr10[0]) <= 0.02 && secs < 1200.0;
  return {pass, fmt("distributed fidelity: 1 worker vs local HR@10 gap %.2g, loss gap %.2g; 50k triples: "
                    "%.2f s/epoch (1 worker) vs %.2f s/epoch (4 workers), ratio %.2f (need <= 0.6), HR@10 "
                    "%.4f vs %.4f; %u hardware threads; %.1f s",
                    std::abs(local_hr - dist_hr), loss_gap, secs_per_epoch[0], secs_per_epoch[1], ratio, hr10[0],
                    hr10[1], std::thread::hardware_concurrency(), secs)};
}

// 7. Byte-level replay of a recorded session, and transport independence.
Outcome protocol_conformance() {
  const KnowledgeGraph g = random_graph(40, 3, 120, 7);
  const ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransH, 8, 2);
  TrainConfig cfg;
  cfg.adam.lr = 0.01;
  cfg.batch_size = 16;
  cfg.epochs = 3;
  cfg.seed = 3;
  SamplerConfig sampler;
  sampler.fanout_per_hop = {4, 3};
  sampler.negatives_per_positive = 2;

  TempDir dir("protocol");
  Session session;
  record_session(g, spec, cfg, sampler, 2, dir / "recorded", session);
  std::set<ps::Opcode> ops;
  for (const auto& e : session.exchanges) ops.insert(ps::decode_frame(e.request).op);
  const fs::path file = dir / "session.bin";
  write_file_bytes(file.string(), encode_session(session.exchanges));
  const ReplayResult replay = replay_session(decode_session(read_file_bytes(file.string())), spec, cfg, 2);

  std::size_t identical = 0;
  for (Transport t : {Transport::kInProcess, Transport::kTcp}) {
    RuntimeConfig rt;
    rt.mode = RuntimeMode::kDistributed;
    rt.workers = 1;
    rt.shards = 2;
    rt.transport = t;
    TrainHooks hooks;
    hooks.out_dir = dir / (t == Transport::kTcp ? "tcp" : "inproc");
    ps::train_distributed(g, spec, cfg, sampler, rt, hooks);
  }
  for (std::size_t epoch = 2; epoch <= 3; ++epoch) {
    const auto name = checkpoint_name(epoch).string();
    identical += read_file_bytes((dir / "tcp" / name).string()) == read_file_bytes((dir / "inproc" / name).string());
  }
  const bool pass = replay.mismatches == 0 && replay.frames > 0 && ops.size() == 4 && identical == 2;
  return {pass, fmt("protocol conformance: %zu frames replayed (%zu opcodes), %zu mismatches; TCP vs in-process "
                    "checkpoints identical for %zu/2 epochs",
                    replay.frames, ops.size(), replay.mismatches, identical)};
}

// 8. Encodings and ranks for entities seen only through their attributes.
Outcome inductive_path() {
  const auto start = std::chrono::steady_clock::now();
  TempDir dir("inductive");
  AttributeOptions o;
  write_synthetic(dir.path(), attribute_kg(o));
  RunConfig cfg = load_bundled("attributes-gnn.conf");
  cfg.data_dir = dir.path();
  const KnowledgeGraph g = load_graph(cfg);
  const ModelSpec spec = build_spec(cfg, g);
  const TrainResult r = run_training(cfg, g, spec, std::nullopt);

  std::vector<Triple> unseen;
  for (const auto& t : g.split().test) {
    if (t.head.value >= g.num_train_entities() || t.tail.value >= g.num_train_entities()) unseen.push_back(t);
  }
  const Tensor table = encode_entities(spec, r.params, g, cfg.eval);
  bool finite = true, attribute_derived = true;
  for (std::uint32_t e = static_cast<std::uint32_t>(g.num_train_entities()); e < g.num_entities(); ++e) {
    const auto row = table.row(e);
    finite = finite && std::all_of(row.begin(), row.end(), [](double x) { return std::isfinite(x); });
    attribute_derived = attribute_derived && std::any_of(row.begin(), row.end(), [](double x) { return x != 0.0; });
  }
  const double hr10 = link_prediction(spec, r.params, g, unseen, RankMode::kFiltered, cfg.eval).hr(10);
  // A uniformly random ranking hits the top 10 of n admissible candidates with
  // probability min(10, n) / n.
  double random = 0.0;
  for (const auto& t : unseen) {
    for (bool tail_side : {true, false}) {
      std::size_t n = 1;
      for (std::uint32_t e = 0; e < g.num_entities(); ++e) {
        const Triple c = tail_side ? Triple{t.head, t.relation, EntityId{e}} : Triple{EntityId{e}, t.relation, t.tail};
        if (c != t && !g.is_known(c)) ++n;
      }
      random += static_cast<double>(std::min<std::size_t>(10, n)) / static_cast<double>(n);
    }
  }
  random /= 2.0 * static_cast<double>(unseen.size());
  const double secs = seconds_since(start);
  const bool pass = !unseen.empty() && finite && attribute_derived && hr10 > 2.0 * random;
  return {pass, fmt("inductive path: %zu unseen entities with %s %s encodings; filtered HR@10 %.4f on %zu test "
                    "triples vs random %.4f (need > %.4f); %.1f s",
                    g.num_entities() - g.num_train_entities(), finite ? "finite" : "NON-FINITE",
                    attribute_derived ? "attribute-derived" : "zero", hr10, unseen.size(), random, 2.0 * random,
                    secs)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::function<Outcome()>> criteria{gradient_correctness, oracle_equivalence, decoder_identities,
                                                       tiny_kg,              encoder_vs_lookup,  distributed_fidelity,
                                                       protocol_conformance, inductive_path};
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoul(argv[i]));
  if (selected.empty()) {
    for (std::size_t i = 1; i <= criteria.size(); ++i) selected.push_back(i);
  }
  int failed = 0;
  for (auto n : selected) {
    if (n < 1 || n > criteria.size()) {
      std::fprintf(stderr, "no criterion %zu\n", n);
      return 2;
    }
    Outcome o;
    try {
      o = criteria[n - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %zu: %s %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
