#pragma once

#include "gpp/matrix.hpp"

namespace gpp::ref {

// Straight-loop serial implementations of the dense kernels. These are the
// oracle the parallel kernels are tested against and the baseline the
// benchmark compares against; they share no code with gpp::kernels.

RealMatrix matmul(const RealMatrix& a, const RealMatrix& b);
RealMatrix matmul_trans_a(const RealMatrix& a, const RealMatrix& b);
RealMatrix matmul_trans_b(const RealMatrix& a, const RealMatrix& b);
void add_bias_rows(RealMatrix& m, const RealMatrix& bias);
void softmax_rows(RealMatrix& m);
void relu_inplace(RealMatrix& m);
void relu_backward_inplace(RealMatrix& grad, const RealMatrix& pre);
RealMatrix col_sums(const RealMatrix& m);

}  // namespace gpp::ref
