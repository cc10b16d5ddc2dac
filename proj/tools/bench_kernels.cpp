// Times the OpenMP kernels against the serial reference implementation at
// the shapes the trainer actually hits.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "gpp/kernels.hpp"
#include "gpp/reference.hpp"
#include "gpp/rng.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace {

using gpp::RealMatrix;

RealMatrix random_matrix(std::size_t rows, std::size_t cols, gpp::Rng& rng) {
    RealMatrix m(rows, cols);
    for (auto& v : m.values()) v = rng.uniform(-1.0, 1.0);
    return m;
}

double time_seconds(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
           reps;
}

void bench_case(const char* name, std::size_t m, std::size_t k, std::size_t n, int reps,
                gpp::Rng& rng) {
    const RealMatrix a = random_matrix(m, k, rng);
    const RealMatrix b = random_matrix(k, n, rng);
    const double flops = 2.0 * static_cast<double>(m) * k * n;

    const double t_par = time_seconds([&] { gpp::kernels::matmul(a, b); }, reps);
    const double t_ser = time_seconds([&] { gpp::ref::matmul(a, b); }, reps);

    const RealMatrix c_par = gpp::kernels::matmul(a, b);
    const RealMatrix c_ser = gpp::ref::matmul(a, b);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < c_par.size(); ++i) {
        const double d = c_par.values()[i] - c_ser.values()[i];
        max_diff = std::max(max_diff, d < 0 ? -d : d);
    }

    std::printf("%-28s %8.2f ms parallel (%5.2f GF/s) %8.2f ms serial (%5.2f GF/s) "
                "speedup %.2fx, max |diff| %.2e\n",
                name, t_par * 1e3, flops / t_par * 1e-9, t_ser * 1e3, flops / t_ser * 1e-9,
                t_ser / t_par, max_diff);
}

}  // namespace

int main() {
#if defined(_OPENMP)
    std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns are serial\n");
#endif
    gpp::Rng rng(7);
    bench_case("forward 64x1568 . 1568x256", 64, 1568, 256, 20, rng);
    bench_case("forward 64x256 . 256x128", 64, 256, 128, 200, rng);
    bench_case("batch  512x784 . 784x256", 512, 784, 256, 10, rng);
    bench_case("grads  256x512 . 512x512", 256, 512, 512, 10, rng);
    return 0;
}
