#include "kgnn/decoder.hpp"

#include <cmath>
#include <map>
#include <set>

#include "kgnn/error.hpp"
#include "kgnn/log.hpp"

namespace kgnn {
namespace {

void check_dims(std::string_view op, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": dimension mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
}

double vec_norm(std::span<const double> v, Norm norm) {
  double acc = 0.0;
  if (norm == Norm::kL1) {
    for (double x : v) acc += std::abs(x);
    return acc;
  }
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double dot_span(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<double> mat_vec(const Tensor& m, std::span<const double> v) {
  if (m.rank() != 2 || m.cols() != v.size()) {
    throw DimensionError("score_transr: matrix " + shape_string(m.shape()) + " vs vector of " +
                         std::to_string(v.size()));
  }
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot_span(m.row(i), v);
  return out;
}

const Tensor& lookup(const ParameterSet& params, const ParamKey& key) {
  auto it = params.find(key);
  if (it == params.end()) throw LookupError("parameter " + to_string(key) + " missing");
  return it->second;
}

// x - (x . w) w, row-wise.
Var project(const Var& x, const Var& w) { return sub(x, scale_rows(w, row_dot(x, w))); }

}  // namespace

double score_transe(std::span<const double> h, std::span<const double> r, std::span<const double> t, Norm norm) {
  check_dims("score_transe", h, r);
  check_dims("score_transe", h, t);
  std::vector<double> d(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) d[i] = h[i] + r[i] - t[i];
  return vec_norm(d, norm);
}

double score_transh(std::span<const double> h, std::span<const double> r, std::span<const double> w,
                    std::span<const double> t, Norm norm, bool strict) {
  check_dims("score_transh", h, r);
  check_dims("score_transh", h, w);
  check_dims("score_transh", h, t);
  if (strict) {
    const double n = vec_norm(w, Norm::kL2);
    if (std::abs(n - 1.0) > 1e-6) throw ConstraintError("score_transh: hyperplane normal has norm " + std::to_string(n));
  }
  const double wh = dot_span(w, h);
  const double wt = dot_span(w, t);
  std::vector<double> d(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) d[i] = (h[i] - wh * w[i]) + r[i] - (t[i] - wt * w[i]);
  return vec_norm(d, norm);
}

double score_transr(std::span<const double> h, std::span<const double> r, const Tensor& m,
                    std::span<const double> t, Norm norm) {
  check_dims("score_transr", h, t);
  const auto mh = mat_vec(m, h);
  const auto mt = mat_vec(m, t);
  check_dims("score_transr", mh, r);
  std::vector<double> d(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) d[i] = mh[i] + r[i] - mt[i];
  return vec_norm(d, norm);
}

double score_distmult(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
  check_dims("score_distmult", h, r);
  check_dims("score_distmult", h, t);
  double acc = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * t[i] * r[i];
  return -acc;
}

double score(const ModelSpec& spec, const ParameterSet& params, std::span<const double> h, RelationId r,
             std::span<const double> t) {
  const auto er = lookup(params, decoder_relation_key(r.value)).data();
  switch (spec.decoder) {
    case DecoderKind::kTransE: return score_transe(h, er, t, spec.norm);
    case DecoderKind::kTransH:
      return score_transh(h, er, lookup(params, {ParamKind::kHyperplane, r.value}).data(), t, spec.norm,
                          spec.enc.strict);
    case DecoderKind::kTransR:
      return score_transr(h, er, lookup(params, {ParamKind::kProjMatrix, r.value}), t, spec.norm);
    case DecoderKind::kDistMult: return score_distmult(h, er, t);
  }
  throw ContractError("unknown decoder");
}

Var score_rows(const ModelContext& ctx, const Var& heads, const Var& tails, std::span<const RelationId> relations) {
  const ModelSpec& spec = ctx.spec();
  if (heads.shape() != tails.shape() || heads.value().rank() != 2 || heads.value().rows() != relations.size()) {
    throw DimensionError("score_rows: heads " + shape_string(heads.shape()) + ", tails " +
                         shape_string(tails.shape()) + ", " + std::to_string(relations.size()) + " relations");
  }
  std::vector<ParamKey> rel_keys;
  rel_keys.reserve(relations.size());
  for (auto r : relations) rel_keys.push_back(decoder_relation_key(r.value));
  const Var er = ctx.rows(rel_keys);

  switch (spec.decoder) {
    case DecoderKind::kTransE: return row_norms(sub(add(heads, er), tails), spec.norm);
    case DecoderKind::kTransH: {
      std::vector<ParamKey> w_keys;
      w_keys.reserve(relations.size());
      for (auto r : relations) w_keys.push_back({ParamKind::kHyperplane, r.value});
      const Var w = ctx.rows(w_keys);
      return row_norms(sub(add(project(heads, w), er), project(tails, w)), spec.norm);
    }
    case DecoderKind::kTransR: {
      // Group rows by relation, project each group with its matrix, then restore order.
      std::map<std::uint32_t, std::vector<std::size_t>> groups;
      for (std::size_t i = 0; i < relations.size(); ++i) groups[relations[i].value].push_back(i);
      const Var diff = sub(heads, tails);
      std::vector<Var> parts;
      std::vector<std::size_t> position(relations.size());
      std::size_t next = 0;
      for (const auto& [r, rows] : groups) {
        parts.push_back(matmul_nt(gather_rows(diff, rows), ctx.param({ParamKind::kProjMatrix, r})));
        for (auto i : rows) position[i] = next++;
      }
      const Var projected = gather_rows(concat_rows(parts), position);
      return row_norms(add(projected, er), spec.norm);
    }
    case DecoderKind::kDistMult: return scale(row_dot(mul(heads, tails), er), -1.0);
  }
  throw ContractError("unknown decoder");
}

std::vector<ParamKey> decoder_keys(const ModelSpec& spec, std::span<const RelationId> relations) {
  std::set<ParamKey> keys;
  for (auto r : relations) {
    keys.insert(decoder_relation_key(r.value));
    if (spec.decoder == DecoderKind::kTransH) keys.insert({ParamKind::kHyperplane, r.value});
    if (spec.decoder == DecoderKind::kTransR) keys.insert({ParamKind::kProjMatrix, r.value});
  }
  return {keys.begin(), keys.end()};
}

ConstraintAction apply_constraint(const ModelSpec& spec, const ParamKey& key, Tensor& value, std::uint64_t seed) {
  if (key.kind == ParamKind::kHyperplane && spec.decoder == DecoderKind::kTransH) {
    const double n = vec_norm(value.data(), Norm::kL2);
    if (n == 0.0 || !std::isfinite(n)) {
      spdlog::warn("hyperplane {} has norm {}; re-initialising", key.id, n);
      value = initial_value(spec, key, seed ^ 0x5EEDu);
      return ConstraintAction::kReinitialized;
    }
    if (n == 1.0) return ConstraintAction::kNone;
    for (auto& x : value.storage()) x /= n;
    return ConstraintAction::kAdjusted;
  }
  if (key.kind == ParamKind::kEntityEmb && spec.encoder == EncoderKind::kLookup && spec.translational()) {
    const double n = vec_norm(value.data(), Norm::kL2);
    if (n <= 1.0) return ConstraintAction::kNone;
    for (auto& x : value.storage()) x /= n;
    return ConstraintAction::kAdjusted;
  }
  return ConstraintAction::kNone;
}

void post_step_constraints(const ModelSpec& spec, ParameterSet& params, std::uint64_t seed) {
  for (auto& [key, value] : params) apply_constraint(spec, key, value, seed);
}

}  // namespace kgnn
