#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "kgnn/tape.hpp"

// Differentiable primitives. Every op checks shapes (DimensionError) and that its
// output is finite (NumericError naming the op). Vectors are rank-1; matrices
// are row-major rank-2. Ops documented as row-wise treat each matrix row as an
// independent vector.
namespace kgnn {

enum class Norm { kL1, kL2 };

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// x[r, c] + bias[c] for every row r.
Var add_bias(const Var& x, const Var& bias);
// Multiplies row r of x by s[r].
Var scale_rows(const Var& x, const Var& s);

Var matvec(const Var& m, const Var& v);
Var matmul(const Var& a, const Var& b);
// a * b^T, for weights stored as [out x in].
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var concat(const std::vector<Var>& vectors);
Var concat_cols(const std::vector<Var>& matrices);
Var concat_rows(const std::vector<Var>& parts);
// Vectors of equal length -> matrix with one row each.
Var stack_rows(const std::vector<Var>& vectors);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var reshape(const Var& x, Tensor::Shape shape);
Var gather_rows(const Var& m, std::span<const std::size_t> indices);

Var sum(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
// Subgradient at 0 is `slope`.
Var leaky_relu(const Var& x, double slope);
// max(0, x); subgradient at 0 is 0.
Var hinge(const Var& x);

Var softmax(const Var& logits);
// Softmax within each segment [offsets[s], offsets[s+1]) of a vector.
Var segment_softmax(const Var& logits, std::span<const std::size_t> offsets);
// out[s] = sum_{i in segment s} w[i] * x[i, :]; empty segments give zero rows.
Var segment_weighted_sum(const Var& weights, const Var& x, std::span<const std::size_t> offsets);

Var l1_norm(const Var& v);
Var l2_norm(const Var& v);
Var norm(const Var& v, Norm kind);
Var row_norms(const Var& x, Norm kind);
Var dot(const Var& a, const Var& b);
Var row_dot(const Var& a, const Var& b);

// Packed LSTM weights: [4d x (d_in + d + 1)] = [W_x | W_h | b], gate row blocks
// in the order input, forget, cell, output.
struct LstmState {
  Var h;
  Var c;
};
LstmState lstm_cell(const Var& x, const Var& h_prev, const Var& c_prev, const Var& packed_weights);

}  // namespace kgnn
