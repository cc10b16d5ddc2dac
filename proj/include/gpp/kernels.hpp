#pragma once

#include "gpp/matrix.hpp"

namespace gpp::kernels {

// OpenMP-parallel dense kernels. Every output element is written by exactly
// one thread and inner reductions run in a fixed order, so results are
// bitwise identical for any thread count.

// C = A * B            (m x k) * (k x n)
RealMatrix matmul(const RealMatrix& a, const RealMatrix& b);

// C = A^T * B          (k x m)^T * (k x n) -> m x n
RealMatrix matmul_trans_a(const RealMatrix& a, const RealMatrix& b);

// C = A * B^T          (m x k) * (n x k)^T -> m x n
RealMatrix matmul_trans_b(const RealMatrix& a, const RealMatrix& b);

// out[r, :] = m[r, :] + bias (bias is 1 x cols)
void add_bias_rows(RealMatrix& m, const RealMatrix& bias);

// Row-wise softmax with max subtraction.
void softmax_rows(RealMatrix& m);

// out = max(m, 0) applied in place.
void relu_inplace(RealMatrix& m);

// grad *= (pre > 0), elementwise.
void relu_backward_inplace(RealMatrix& grad, const RealMatrix& pre);

// 1 x cols row of column sums.
RealMatrix col_sums(const RealMatrix& m);

}  // namespace gpp::kernels
