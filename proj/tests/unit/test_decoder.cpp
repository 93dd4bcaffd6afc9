#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "kgnn/decoder.hpp"
#include "kgnn/error.hpp"
#include "reference.hpp"

using namespace kgnn;
using namespace kgnn::testing;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(d);
  for (auto& x : v) x = u(rng);
  return v;
}

double l2(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

std::vector<double> unit(std::vector<double> v) {
  const double n = l2(v);
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

TEST_SUITE("decoder") {
  TEST_CASE("TransR with the identity matrix is TransE") {
    Rng rng = make_rng({1});
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = 1 + trial % 9;
      Tensor eye({d, d});
      for (std::size_t i = 0; i < d; ++i) eye.at(i, i) = 1.0;
      const auto h = random_vec(rng, d), r = random_vec(rng, d), t = random_vec(rng, d);
      for (Norm n : {Norm::kL1, Norm::kL2}) {
        CHECK(std::abs(score_transr(h, r, eye, t, n) - score_transe(h, r, t, n)) < 1e-10);
      }
    }
  }

  TEST_CASE("TransH with a normal orthogonal to every vector is TransE") {
    Rng rng = make_rng({2});
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = 3 + trial % 6;
      // The last coordinate is zero in h, r and t; the normal is the last axis.
      auto h = random_vec(rng, d), r = random_vec(rng, d), t = random_vec(rng, d);
      h.back() = r.back() = t.back() = 0.0;
      std::vector<double> w(d, 0.0);
      w.back() = 1.0;
      for (Norm n : {Norm::kL1, Norm::kL2}) {
        CHECK(std::abs(score_transh(h, r, w, t, n, true) - score_transe(h, r, t, n)) < 1e-10);
      }
    }
  }

  TEST_CASE("TransH projection is orthogonal to the normal") {
    Rng rng = make_rng({3});
    const std::vector<double> zero(6, 0.0);
    for (int trial = 0; trial < 100; ++trial) {
      const auto h = random_vec(rng, 6);
      const auto w = unit(random_vec(rng, 6));
      double wh = 0.0;
      for (std::size_t i = 0; i < 6; ++i) wh += w[i] * h[i];
      // Energy with r = t = 0 is the length of the projection; Pythagoras holds
      // exactly when the projection is orthogonal to w.
      const double proj = score_transh(h, zero, w, zero, Norm::kL2, true);
      CHECK(std::abs(proj * proj + wh * wh - l2(h) * l2(h)) < 1e-10);
      // Moving a tail along the normal leaves the energy unchanged.
      auto t = random_vec(rng, 6);
      auto shifted = t;
      for (std::size_t i = 0; i < 6; ++i) shifted[i] += 0.7 * w[i];
      const auto r = random_vec(rng, 6);
      CHECK(std::abs(score_transh(h, r, w, t, Norm::kL2) - score_transh(h, r, w, shifted, Norm::kL2)) < 1e-10);
    }
  }

  TEST_CASE("DistMult is exactly symmetric") {
    Rng rng = make_rng({4});
    for (int trial = 0; trial < 100; ++trial) {
      const auto h = random_vec(rng, 7), r = random_vec(rng, 7), t = random_vec(rng, 7);
      CHECK(score_distmult(h, r, t) == score_distmult(t, r, h));
    }
  }

  TEST_CASE("strict TransH rejects non-unit normals and mismatched widths throw") {
    const std::vector<double> v{1.0, 2.0}, w{1.0, 1.0};
    CHECK_THROWS_AS(score_transh(v, v, w, v, Norm::kL2, true), ConstraintError);
    CHECK_NOTHROW(score_transh(v, v, w, v, Norm::kL2, false));
    CHECK_THROWS_AS(score_transe(v, std::vector<double>{1.0}, v, Norm::kL1), DimensionError);
    CHECK_THROWS_AS(score_transr(v, v, Tensor({3, 2}), v, Norm::kL1), DimensionError);
  }

  TEST_CASE("batched tape energies equal the scalar scores") {
    const KnowledgeGraph g = toy_graph();
    for (DecoderKind dec : {DecoderKind::kTransE, DecoderKind::kTransH, DecoderKind::kTransR, DecoderKind::kDistMult}) {
      for (Norm n : {Norm::kL1, Norm::kL2}) {
        const ModelSpec spec = spec_for(g, EncoderKind::kLookup, dec, 5, 1, n);
        const ParameterSet params = initial_parameters(spec, 9);
        Tape tape;
        ModelContext ctx(tape, params, spec, false);
        const auto triples = g.triples();
        std::vector<ParamKey> hk, tk;
        std::vector<RelationId> rels;
        for (const auto& t : triples) {
          hk.push_back(entity_key(t.head.value));
          tk.push_back(entity_key(t.tail.value));
          rels.push_back(t.relation);
        }
        const Var e = score_rows(ctx, ctx.rows(hk), ctx.rows(tk), rels);
        for (std::size_t i = 0; i < triples.size(); ++i) {
          const double s = score(spec, params, params.at(hk[i]).data(), rels[i], params.at(tk[i]).data());
          CHECK(e.value()[i] == doctest::Approx(s).epsilon(1e-12));
          CHECK(s == doctest::Approx(reference::energy(spec, params, params.at(hk[i]).storage(), rels[i],
                                                       params.at(tk[i]).storage()))
                         .epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("constraints renormalise normals and clip lookup entity rows") {
    const KnowledgeGraph g = toy_graph();
    const ModelSpec spec = spec_for(g, EncoderKind::kLookup, DecoderKind::kTransH, 4, 1);
    Tensor w = Tensor::vector({3.0, 0.0, 4.0, 0.0});
    CHECK(apply_constraint(spec, ParamKey{ParamKind::kHyperplane, 0}, w, 1) == ConstraintAction::kAdjusted);
    CHECK(w[0] == doctest::Approx(0.6));
    CHECK(w[2] == doctest::Approx(0.8));
    Tensor z({4});
    CHECK(apply_constraint(spec, ParamKey{ParamKind::kHyperplane, 0}, z, 1) == ConstraintAction::kReinitialized);
    CHECK(std::abs(l2(z.storage()) - 1.0) < 1e-12);
    Tensor big = Tensor::vector({2.0, 0.0, 0.0, 0.0});
    CHECK(apply_constraint(spec, entity_key(0), big, 1) == ConstraintAction::kAdjusted);
    CHECK(big[0] == doctest::Approx(1.0));
    Tensor small = Tensor::vector({0.5, 0.0, 0.0, 0.0});
    CHECK(apply_constraint(spec, entity_key(0), small, 1) == ConstraintAction::kNone);
    const ModelSpec gnn = spec_for(g, EncoderKind::kGnn, DecoderKind::kTransH, 4, 1);
    Tensor free = Tensor::vector({2.0, 0.0, 0.0, 0.0});
    CHECK(apply_constraint(gnn, entity_key(0), free, 1) == ConstraintAction::kNone);
  }
}
