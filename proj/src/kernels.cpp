#include "gpp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace gpp::kernels {

namespace {

void require_inner(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": inner dimensions " + std::to_string(a) +
                         " and " + std::to_string(b) + " do not match");
    }
}

}  // namespace

RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
    require_inner(a.cols(), b.rows(), "matmul");
    const std::int64_t m = static_cast<std::int64_t>(a.rows());
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    RealMatrix c(a.rows(), n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a.row(static_cast<std::size_t>(i));
        double* crow = c.row(static_cast<std::size_t>(i));
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.row(p);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

RealMatrix matmul_trans_a(const RealMatrix& a, const RealMatrix& b) {
    require_inner(a.rows(), b.rows(), "matmul_trans_a");
    const std::int64_t m = static_cast<std::int64_t>(a.cols());
    const std::size_t k = a.rows();
    const std::size_t n = b.cols();
    RealMatrix c(a.cols(), n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        double* crow = c.row(static_cast<std::size_t>(i));
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(p, static_cast<std::size_t>(i));
            if (av == 0.0) continue;
            const double* brow = b.row(p);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

RealMatrix matmul_trans_b(const RealMatrix& a, const RealMatrix& b) {
    require_inner(a.cols(), b.cols(), "matmul_trans_b");
    const std::int64_t m = static_cast<std::int64_t>(a.rows());
    const std::size_t k = a.cols();
    const std::size_t n = b.rows();
    RealMatrix c(a.rows(), n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a.row(static_cast<std::size_t>(i));
        double* crow = c.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
    return c;
}

void add_bias_rows(RealMatrix& m, const RealMatrix& bias) {
    require_shape(bias, 1, m.cols(), "add_bias_rows bias");
    const std::int64_t rows = static_cast<std::int64_t>(m.rows());
    const std::size_t cols = m.cols();
    const double* b = bias.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < rows; ++i) {
        double* row = m.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < cols; ++j) row[j] += b[j];
    }
}

void softmax_rows(RealMatrix& m) {
    const std::int64_t rows = static_cast<std::int64_t>(m.rows());
    const std::size_t cols = m.cols();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < rows; ++i) {
        double* row = m.row(static_cast<std::size_t>(i));
        double mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < cols; ++j) row[j] /= sum;
    }
}

void relu_inplace(RealMatrix& m) {
    const std::int64_t n = static_cast<std::int64_t>(m.size());
    double* d = m.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) d[i] = d[i] > 0.0 ? d[i] : 0.0;
}

void relu_backward_inplace(RealMatrix& grad, const RealMatrix& pre) {
    if (!grad.same_shape(pre)) throw ShapeError("relu_backward: shape mismatch");
    const std::int64_t n = static_cast<std::int64_t>(grad.size());
    double* g = grad.data();
    const double* p = pre.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        if (p[i] <= 0.0) g[i] = 0.0;
    }
}

RealMatrix col_sums(const RealMatrix& m) {
    RealMatrix out(1, m.cols(), 0.0);
    const std::int64_t cols = static_cast<std::int64_t>(m.cols());
    const std::size_t rows = m.rows();
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += m(i, static_cast<std::size_t>(j));
        out(0, static_cast<std::size_t>(j)) = acc;
    }
    return out;
}

}  // namespace gpp::kernels
