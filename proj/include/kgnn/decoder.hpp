#pragma once

#include <cstdint>
#include <span>

#include "kgnn/kg_store.hpp"
#include "kgnn/model.hpp"

namespace kgnn {

// Energies: lower means more plausible. DistMult returns the negated similarity.
double score_transe(std::span<const double> h, std::span<const double> r, std::span<const double> t, Norm norm);
// strict: throws ConstraintError unless |‖w‖ − 1| <= 1e-6.
double score_transh(std::span<const double> h, std::span<const double> r, std::span<const double> w,
                    std::span<const double> t, Norm norm, bool strict = false);
double score_transr(std::span<const double> h, std::span<const double> r, const Tensor& m,
                    std::span<const double> t, Norm norm);
double score_distmult(std::span<const double> h, std::span<const double> r, std::span<const double> t);

// Energy of (h, r, t) using the decoder parameters of `spec` read from `params`.
double score(const ModelSpec& spec, const ParameterSet& params, std::span<const double> h, RelationId r,
             std::span<const double> t);

// Batched energies for rows of `heads` and `tails` ([B x d]) under relations[i]; returns [B].
Var score_rows(const ModelContext& ctx, const Var& heads, const Var& tails, std::span<const RelationId> relations);

// Decoder parameter keys used by the given relations.
std::vector<ParamKey> decoder_keys(const ModelSpec& spec, std::span<const RelationId> relations);

// Projects one freshly updated parameter back onto its constraint set: unit
// hyperplane normals, and entity rows clipped to norm <= 1 when a translational
// decoder runs on lookup embeddings. A zero normal is re-drawn from `seed` and
// reported through the return value.
enum class ConstraintAction { kNone, kAdjusted, kReinitialized };
ConstraintAction apply_constraint(const ModelSpec& spec, const ParamKey& key, Tensor& value, std::uint64_t seed);

// apply_constraint over every parameter.
void post_step_constraints(const ModelSpec& spec, ParameterSet& params, std::uint64_t seed);

}  // namespace kgnn
