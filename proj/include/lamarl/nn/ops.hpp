#pragma once

#include "lamarl/nn/tape.hpp"

#include <span>
#include <vector>

// Differentiable primitives recorded on a Tape. Shapes follow the
// batch-major convention: rows are samples, columns are features.
namespace lamarl::nn {

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Adds a 1xN row to every row of `a`.
Var add_row(const Var& a, const Var& row);
/// Multiplies every column of `a` by the Bx1 column `col`.
Var mul_col(const Var& a, const Var& col);
/// Divides every column of `a` by the Bx1 column `col`.
Var div_col(const Var& a, const Var& col);
Var scale(const Var& a, Real s);
Var add_scalar(const Var& a, Real s);
Var one_minus(const Var& a);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
/// Gradient passes only where lo < a < hi.
Var clamp(const Var& a, Real lo, Real hi);
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index count);

Var sum(const Var& a);
Var mean(const Var& a);
/// Bx1 column of row sums.
Var row_sum(const Var& a);

Var log_softmax_rows(const Var& a);
Var softmax_rows(const Var& a);
/// Bx1 column with a(i, index[i]).
Var pick(const Var& a, std::span<const int> index);
/// Rows of `table` selected by `ids`.
Var embedding_lookup(const Var& table, std::span<const int> ids);

/// mask*a + (1-mask)*b with a constant Bx1 mask.
Var blend(const Matrix& mask, const Var& a, const Var& b);
/// Row-wise L2 normalisation, with a floor on the norm.
Var normalize_rows(const Var& a, Real eps = 1e-12);

// Plain-matrix helpers shared with the inference path.
Matrix log_softmax_rows(const Matrix& logits);
Matrix softmax_rows(const Matrix& logits);

}  // namespace lamarl::nn
