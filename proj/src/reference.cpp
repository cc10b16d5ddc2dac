#include "gpp/reference.hpp"

#include <algorithm>
#include <cmath>

namespace gpp::ref {

RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("ref::matmul: inner dimension mismatch");
    RealMatrix c(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
            c(i, j) = acc;
        }
    }
    return c;
}

RealMatrix matmul_trans_a(const RealMatrix& a, const RealMatrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("ref::matmul_trans_a: inner dimension mismatch");
    RealMatrix c(a.cols(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.cols(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < a.rows(); ++p) acc += a(p, i) * b(p, j);
            c(i, j) = acc;
        }
    }
    return c;
}

RealMatrix matmul_trans_b(const RealMatrix& a, const RealMatrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("ref::matmul_trans_b: inner dimension mismatch");
    RealMatrix c(a.rows(), b.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(j, p);
            c(i, j) = acc;
        }
    }
    return c;
}

void add_bias_rows(RealMatrix& m, const RealMatrix& bias) {
    require_shape(bias, 1, m.cols(), "ref::add_bias_rows bias");
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += bias(0, j);
}

void softmax_rows(RealMatrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double mx = m(i, 0);
        for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            m(i, j) = std::exp(m(i, j) - mx);
            sum += m(i, j);
        }
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) /= sum;
    }
}

void relu_inplace(RealMatrix& m) {
    for (auto& v : m.values()) v = std::max(v, 0.0);
}

void relu_backward_inplace(RealMatrix& grad, const RealMatrix& pre) {
    if (!grad.same_shape(pre)) throw ShapeError("ref::relu_backward: shape mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (pre.values()[i] <= 0.0) grad.values()[i] = 0.0;
    }
}

RealMatrix col_sums(const RealMatrix& m) {
    RealMatrix out(1, m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
    return out;
}

}  // namespace gpp::ref
