#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "fixtures.hpp"
#include "kgnn/checkpoint.hpp"
#include "kgnn/trainer.hpp"

using namespace kgnn;
using namespace kgnn::testing;

namespace {

TrainConfig small_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.adam.lr = 0.05;
  cfg.batch_size = 3;
  cfg.epochs = epochs;
  cfg.seed = 7;
  return cfg;
}

SamplerConfig small_sampler() {
  SamplerConfig s;
  s.fanout_per_hop = {3, 2};
  s.negatives_per_positive = 2;
  return s;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("adam matches a textbook scalar implementation") {
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
    AdamSlot slot;
    Tensor x = Tensor::vector({0.5, -1.0, 2.0});
    double m[3] = {0, 0, 0}, v[3] = {0, 0, 0}, ref[3] = {0.5, -1.0, 2.0};
    Rng rng = make_rng({3});
    std::normal_distribution<double> n(0.0, 1.0);
    for (int step = 1; step <= 50; ++step) {
      Tensor g = Tensor::vector({n(rng), n(rng), n(rng)});
      adam_apply(slot, x, g, cfg);
      for (int i = 0; i < 3; ++i) {
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        const double mh = m[i] / (1.0 - std::pow(0.9, step));
        const double vh = v[i] / (1.0 - std::pow(0.999, step));
        ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      }
      for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(ref[i]).epsilon(1e-13));
    }
    CHECK(slot.t == 50);
    Tensor wrong({2});
    CHECK_THROWS_AS(adam_apply(slot, x, wrong, cfg), DimensionError);
  }

  TEST_CASE("the margin loss is a hinge") {
    CHECK(margin_loss(1.0, 3.0, 1.0) == 0.0);
    CHECK(margin_loss(1.0, 2.0, 1.0) == 0.0);
    CHECK(margin_loss(2.0, 1.0, 1.0) == doctest::Approx(2.0));
  }

  TEST_CASE("epoch batches partition the triples and depend only on seed and epoch") {
    for (std::size_t n : {1u, 7u, 64u, 101u}) {
      for (std::size_t b : {1u, 8u, 200u}) {
        const auto batches = epoch_batches(n, b, 3, 2);
        std::multiset<std::size_t> seen;
        for (const auto& batch : batches) {
          CHECK(batch.size() >= 1);
          CHECK(batch.size() <= b);
          seen.insert(batch.begin(), batch.end());
        }
        CHECK(seen.size() == n);
        CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == n);
        CHECK(batches == epoch_batches(n, b, 3, 2));
      }
    }
    CHECK(epoch_batches(100, 10, 3, 1) != epoch_batches(100, 10, 3, 2));
  }

  TEST_CASE("training is bit-reproducible for a fixed seed") {
    const KnowledgeGraph g = random_graph(15, 2, 30, 4);
    for (EncoderKind enc : {EncoderKind::kLookup, EncoderKind::kGnn}) {
      const ModelSpec spec = spec_for(g, enc, DecoderKind::kTransH, 6, 2);
      const TrainResult a = train_local(g, spec, small_config(3), small_sampler());
      const TrainResult b = train_local(g, spec, small_config(3), small_sampler());
      CHECK(encode_checkpoint(a.params) == encode_checkpoint(b.params));
      REQUIRE(a.reports.size() == 3);
      for (std::size_t i = 0; i < 3; ++i) CHECK(a.reports[i].loss == b.reports[i].loss);
    }
  }

  TEST_CASE("zero epochs returns the initial parameters and writes checkpoint zero") {
    const KnowledgeGraph g = toy_graph();
    const ModelSpec spec = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransE, 4, 2);
    TempDir dir("epochs0");
    TrainHooks hooks;
    hooks.out_dir = dir.path();
    const TrainResult r = train_local(g, spec, small_config(0), small_sampler(), hooks);
    CHECK(r.reports.empty());
    CHECK(encode_checkpoint(r.params) == encode_checkpoint(initial_parameters(spec, 7)));
    CHECK(read_checkpoint(resolve_checkpoint(dir.path())) == r.params);
  }

  TEST_CASE("loss decreases on a small graph") {
    const KnowledgeGraph g = toy_graph();
    const ModelSpec spec = spec_for(g, EncoderKind::kLookup, DecoderKind::kTransE, 8, 1, Norm::kL1);
    const TrainResult r = train_local(g, spec, small_config(60), small_sampler());
    CHECK(r.reports.back().loss < 0.5 * r.reports.front().loss);
  }

  TEST_CASE("a non-finite parameter aborts training with its location") {
    const KnowledgeGraph g = toy_graph();
    const ModelSpec spec = spec_for(g, EncoderKind::kLookup, DecoderKind::kTransE, 4, 1);
    ParameterSet init = initial_parameters(spec, 7);
    for (std::uint32_t e = 0; e < 6; ++e) init.at(entity_key(e))[0] = std::numeric_limits<double>::quiet_NaN();
    try {
      train_local(g, spec, small_config(2), small_sampler(), {}, init);
      FAIL("expected TrainingAborted");
    } catch (const TrainingAborted& e) {
      CHECK(e.epoch() == 1);
      CHECK(e.batch() == 0);
    }
  }

  TEST_CASE("early stopping halts after `patience` epochs without improvement") {
    const KnowledgeGraph g = toy_graph();
    const ModelSpec spec = spec_for(g, EncoderKind::kLookup, DecoderKind::kTransE, 4, 1);
    TrainConfig cfg = small_config(20);
    cfg.patience = 3;
    TrainHooks hooks;
    int calls = 0;
    hooks.validate = [&](const ParameterSet&) { return ++calls <= 2 ? static_cast<double>(calls) : 0.0; };
    const TrainResult r = train_local(g, spec, cfg, small_sampler(), hooks);
    CHECK(r.reports.size() == 5);
  }

  TEST_CASE("batch keys cover every parameter that receives a gradient") {
    const KnowledgeGraph g = random_graph(12, 2, 25, 1);
    for (EncoderKind enc : {EncoderKind::kLookup, EncoderKind::kGnn}) {
      for (DecoderKind dec : {DecoderKind::kTransE, DecoderKind::kTransH, DecoderKind::kTransR, DecoderKind::kDistMult}) {
        const ModelSpec spec = spec_for(g, enc, dec, 4, 2);
        LocalStore store(spec, initial_parameters(spec, 1), AdamConfig{}, 1);
        Rng rng = make_rng({1});
        const auto batch = std::vector<Triple>(g.triples().begin(), g.triples().begin() + 5);
        const BatchResult r = train_batch(batch, g, spec, small_sampler(), 5.0, store, rng);
        CHECK(r.pairs == 10);
        for (const auto& [key, grad] : r.grads) CHECK(owns_key(spec, key));
      }
    }
  }
}
