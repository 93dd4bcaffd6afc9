#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "kgnn/encoder.hpp"
#include "kgnn/error.hpp"
#include "reference.hpp"

using namespace kgnn;
using namespace kgnn::testing;

namespace {

std::vector<AttentionInput> entries_of(const ModelContext& ctx, const KnowledgeGraph& g, EntityId e) {
  std::vector<AttentionInput> out;
  for (const auto& n : g.neighbors(e)) out.push_back({n, ctx.param(entity_key(n.neighbor.value))});
  return out;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("attention weights form a distribution that follows entry order") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const KnowledgeGraph g = random_graph(12, 3, 40, seed);
      const ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransH, 6, 2);
      const ParameterSet params = initial_parameters(spec, seed);
      Tape tape;
      ModelContext ctx(tape, params, spec, false);
      for (std::uint32_t e = 0; e < g.num_entities(); ++e) {
        auto entries = entries_of(ctx, g, EntityId{e});
        if (entries.empty()) continue;
        const Var head = ctx.param(entity_key(e));
        const Tensor alpha = attention_weights(ctx, head, entries).value();
        double total = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
          CHECK(alpha[i] > 0.0);
          total += alpha[i];
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
        std::reverse(entries.begin(), entries.end());
        const Tensor reversed = attention_weights(ctx, head, entries).value();
        for (std::size_t i = 0; i < alpha.size(); ++i) {
          CHECK(reversed[alpha.size() - 1 - i] == doctest::Approx(alpha[i]).epsilon(1e-14));
        }
      }
    }
  }

  TEST_CASE("aggregate is the attention-weighted mean and zero when empty") {
    const KnowledgeGraph g = toy_graph();
    const ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransE, 5, 1);
    const ParameterSet params = initial_parameters(spec, 3);
    Tape tape;
    ModelContext ctx(tape, params, spec, false);
    const Var head = ctx.param(entity_key(1));
    const auto entries = entries_of(ctx, g, EntityId{1});
    const Tensor alpha = attention_weights(ctx, head, entries).value();
    const Tensor agg = aggregate(ctx, head, entries).value();
    for (std::size_t j = 0; j < 5; ++j) {
      double expect = 0.0;
      for (std::size_t i = 0; i < entries.size(); ++i) expect += alpha[i] * entries[i].neighbor.value()[j];
      CHECK(agg[j] == doctest::Approx(expect).epsilon(1e-13));
    }
    const Tensor empty = aggregate(ctx, head, {}).value();
    CHECK(empty.size() == 5);
    CHECK(empty.all_zero());
    CHECK_THROWS_AS(attention_weights(ctx, head, {}), ContractError);
  }

  TEST_CASE("an isolated seed still encodes to a finite vector") {
    const KnowledgeGraph g = graph_from(4, 1, {tri(0, 0, 1), tri(1, 0, 2)});
    const ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransH, 4, 2);
    const ParameterSet params = initial_parameters(spec, 1);
    SamplerConfig cfg;
    cfg.fanout_per_hop = {3, 3};
    Rng rng = make_rng({1});
    const std::vector<EntityId> seeds{EntityId{0}, EntityId{3}};
    const SubGraph sg = sample_subgraph(seeds, g, cfg, rng);
    Tape tape;
    ModelContext ctx(tape, params, spec, false);
    const EncodedBatch out = encode(ctx, g, sg);
    CHECK(out.embeddings.value().all_finite());
    const auto expect = reference::encode(spec, params, g, sg);
    for (const auto& e : seeds) {
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(out.embeddings.value().at(out.row(e), j) == doctest::Approx(expect.at(e)[j]).epsilon(1e-12));
      }
    }
    CHECK_THROWS_AS(out.row(EntityId{2}), LookupError);
  }

  TEST_CASE("unseen entities without attributes are zero or a coverage error in strict mode") {
    // e3 appears only in the test split, so it owns no free embedding row.
    const KnowledgeGraph g = graph_from(4, 1, {tri(0, 0, 1), tri(1, 0, 2)}, {}, {tri(3, 0, 0)});
    REQUIRE(g.num_train_entities() == 3);
    ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransE, 4, 1);
    const ParameterSet params = initial_parameters(spec, 1);
    {
      Tape tape;
      ModelContext ctx(tape, params, spec, false);
      CHECK(base_embedding(ctx, g, EntityId{3}).value().all_zero());
      CHECK_THROWS_AS(base_embedding(ctx, g, EntityId{9}), LookupError);
    }
    spec.enc.strict = true;
    Tape tape;
    ModelContext ctx(tape, params, spec, false);
    CHECK_THROWS_AS(base_embedding(ctx, g, EntityId{3}), CoverageError);
  }

  TEST_CASE("unseen entities with attributes get a finite attribute-derived encoding") {
    Tensor attrs({4, 3});
    for (std::size_t i = 0; i < attrs.size(); ++i) attrs[i] = std::sin(1.0 + static_cast<double>(i));
    const KnowledgeGraph g = graph_from(4, 1, {tri(0, 0, 1), tri(1, 0, 2)}, {}, {tri(3, 0, 0)}, attrs);
    const ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransE, 4, 1, Norm::kL2, true);
    const ParameterSet params = initial_parameters(spec, 1);
    Tape tape;
    ModelContext ctx(tape, params, spec, false);
    const Tensor e0 = base_embedding(ctx, g, EntityId{3}).value();
    CHECK(e0.all_finite());
    CHECK_FALSE(e0.all_zero());
    const Tensor& proj = params.at({ParamKind::kAttrProj, 0});
    for (std::size_t j = 0; j < 4; ++j) {
      double expect = 0.0;
      for (std::size_t k = 0; k < 3; ++k) expect += proj.at(j, k) * attrs.at(3, k);
      CHECK(e0[j] == doctest::Approx(expect).epsilon(1e-14));
    }
  }

  TEST_CASE("subgraphs with the wrong hop count are rejected") {
    const KnowledgeGraph g = toy_graph();
    const ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransE, 4, 2);
    const ParameterSet params = initial_parameters(spec, 1);
    SamplerConfig cfg;
    cfg.fanout_per_hop = {2};
    Rng rng = make_rng({1});
    const std::vector<EntityId> seeds{EntityId{0}};
    const SubGraph sg = sample_subgraph(seeds, g, cfg, rng);
    Tape tape;
    ModelContext ctx(tape, params, spec, false);
    CHECK_THROWS_AS(encode(ctx, g, sg), ContractError);
  }
}
