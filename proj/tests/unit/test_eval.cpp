#include <doctest.h>

#include "fixtures.hpp"
#include "kgnn/error.hpp"
#include "kgnn/eval.hpp"
#include "oracles.hpp"

using namespace kgnn;
using namespace kgnn::testing;

TEST_SUITE("eval") {
  TEST_CASE("ranks match the brute-force oracle in both modes") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const RankInstance inst = make_rank_instance(seed, 60);
      for (const auto& t : inst.queries) {
        for (RankMode mode : {RankMode::kRaw, RankMode::kFiltered}) {
          const bool filtered = mode == RankMode::kFiltered;
          const TripleRanks r = rank_triple(t, inst.spec, inst.params, inst.table, inst.graph, mode);
          CHECK(r.tail == brute_force_rank(inst.spec, inst.params, inst.table, inst.graph, t, true, filtered));
          CHECK(r.head == brute_force_rank(inst.spec, inst.params, inst.table, inst.graph, t, false, filtered));
        }
      }
    }
  }

  TEST_CASE("filtered ranks never exceed raw ranks") {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
      const RankInstance inst = make_rank_instance(seed, 80);
      for (const auto& t : inst.queries) {
        const auto raw = rank_triple(t, inst.spec, inst.params, inst.table, inst.graph, RankMode::kRaw);
        const auto filt = rank_triple(t, inst.spec, inst.params, inst.table, inst.graph, RankMode::kFiltered);
        CHECK(filt.head <= raw.head);
        CHECK(filt.tail <= raw.tail);
        CHECK(filt.head >= 1);
      }
    }
  }

  TEST_CASE("rank-sum AUC equals the pairwise definition exactly") {
    Rng rng = make_rng({5});
    for (int trial = 0; trial < 50; ++trial) {
      const auto pos = grid_energies(rng, 1 + trial % 17);
      const auto neg = grid_energies(rng, 1 + (trial * 7) % 23);
      CHECK(auc_rank_sum(pos, neg) == pairwise_auc(pos, neg));
    }
    const std::vector<double> low{0.0, 0.1}, high{1.0, 2.0};
    CHECK(auc_rank_sum(low, high) == 1.0);
    CHECK(auc_rank_sum(high, low) == 0.0);
    CHECK(auc_rank_sum(low, low) == 0.5);
    CHECK_THROWS_AS(auc_rank_sum({}, high), ContractError);
  }

  TEST_CASE("summaries average hits and ranks over both sides") {
    const std::vector<TripleRanks> ranks{{1, 2}, {5, 20}, {3, 1}};
    const RankingResult r = summarize_ranks(ranks, RankMode::kRaw);
    CHECK(r.queries == 3);
    CHECK(r.head.hits.at(1) == doctest::Approx(1.0 / 3.0));
    CHECK(r.tail.hits.at(3) == doctest::Approx(2.0 / 3.0));
    CHECK(r.both.hits.at(10) == doctest::Approx(5.0 / 6.0));
    CHECK(r.head.mean_rank == doctest::Approx(3.0));
    CHECK(r.both.mean_rank == doctest::Approx(32.0 / 6.0));
    CHECK(r.hr(1) == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("an untrained model ranks near the random expectation") {
    const KnowledgeGraph g = random_graph(100, 2, 400, 8);
    std::vector<Triple> test(g.triples().begin(), g.triples().begin() + 200);
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const ModelSpec spec = spec_for(g, EncoderKind::kLookup, DecoderKind::kTransE, 16, 1);
      total += link_prediction(spec, initial_parameters(spec, seed), g, test, RankMode::kRaw).hr(10);
    }
    // 10 of 100 candidates.
    CHECK(total / 5.0 == doctest::Approx(0.1).epsilon(0.35));
  }

  TEST_CASE("GNN evaluation is independent of chunking and repeatable") {
    const KnowledgeGraph g = random_graph(30, 2, 70, 3);
    const ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransH, 6, 2);
    const ParameterSet params = initial_parameters(spec, 2);
    EvalConfig a;
    a.chunk = 30;
    EvalConfig b;
    b.chunk = 7;
    const Tensor ta = encode_entities(spec, params, g, a);
    const Tensor tb = encode_entities(spec, params, g, b);
    CHECK(ta == tb);
    const std::vector<Triple> test(g.triples().begin(), g.triples().begin() + 10);
    const auto r1 = link_prediction(spec, params, g, test, RankMode::kFiltered, a);
    EvalConfig threaded = b;
    threaded.threads = 3;
    const auto r2 = link_prediction(spec, params, g, test, RankMode::kFiltered, threaded);
    CHECK(r1.both.mean_rank == r2.both.mean_rank);
    const auto c1 = triplet_classification(spec, params, g, test, 4);
    const auto c2 = triplet_classification(spec, params, g, test, 4);
    CHECK(c1.auc == c2.auc);
    CHECK(c1.positives == 10);
    CHECK(c1.negatives == 10);
  }
}
