#include "doctest.h"

#include <cmath>

#include "gpp/encoder.hpp"
#include "gpp/rng.hpp"

using namespace gpp;

namespace {

RealMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    RealMatrix m(rows, cols);
    for (auto& v : m.values()) v = rng.uniform(-scale, scale);
    return m;
}

}  // namespace

TEST_CASE("encode: zero weights give zero mean and logvar") {
    Rng rng(11);
    encoder::GaussianEncoderParams params = encoder::make_encoder(6, {8}, 3, rng);
    for (auto* tensor : params.param_ptrs()) tensor->fill(0.0);
    const RealMatrix x = random_matrix(5, 6, rng);
    auto [mu, logvar] = encoder::encode(params, x);
    for (double v : mu.values()) CHECK(v == 0.0);
    for (double v : logvar.values()) CHECK(v == 0.0);
}

TEST_CASE("encode: duplicated input rows produce duplicated output rows") {
    Rng rng(12);
    encoder::GaussianEncoderParams params = encoder::make_encoder(4, {7}, 2, rng);
    RealMatrix x(2, 4);
    for (std::size_t j = 0; j < 4; ++j) x(0, j) = x(1, j) = rng.uniform(-1.0, 1.0);
    auto [mu, logvar] = encoder::encode(params, x);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(mu(0, j) == mu(1, j));
        CHECK(logvar(0, j) == logvar(1, j));
    }
}

TEST_CASE("encode matches the composed dense-net forward to 1e-12") {
    Rng rng(13);
    encoder::GaussianEncoderParams params = encoder::make_encoder(5, {9, 6}, 3, rng);
    const RealMatrix x = random_matrix(4, 5, rng);
    auto [mu, logvar] = encoder::encode(params, x);
    const RealMatrix h = nn::forward(params.trunk, x);
    const RealMatrix mu_want = nn::forward(params.mean_head, h);
    const RealMatrix lv_want = nn::forward(params.logvar_head, h);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        CHECK(mu.values()[i] == doctest::Approx(mu_want.values()[i]).epsilon(1e-12));
        CHECK(logvar.values()[i] == doctest::Approx(lv_want.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("make_encoder enforces 1 <= d_z < d_x") {
    Rng rng(14);
    CHECK_THROWS_AS(encoder::make_encoder(4, {8}, 4, rng), ConfigError);
    CHECK_THROWS_AS(encoder::make_encoder(4, {8}, 0, rng), ConfigError);
}

TEST_CASE("reparameterize: forced zero noise returns the mean") {
    Rng rng(15);
    const RealMatrix mu = random_matrix(3, 4, rng);
    const RealMatrix logvar = random_matrix(3, 4, rng);
    const encoder::LatentSample sample =
        encoder::reparameterize_with(mu, logvar, RealMatrix(3, 4, 0.0));
    CHECK(sample.z == mu);
}

TEST_CASE("reparameterize: unit variance shifts the mean by epsilon") {
    Rng rng(16);
    const RealMatrix mu = random_matrix(2, 3, rng);
    const RealMatrix logvar(2, 3, 0.0);
    RealMatrix eps = random_matrix(2, 3, rng);
    const encoder::LatentSample sample = encoder::reparameterize_with(mu, logvar, eps);
    for (std::size_t i = 0; i < mu.size(); ++i)
        CHECK(sample.z.values()[i] ==
              doctest::Approx(mu.values()[i] + eps.values()[i]).epsilon(1e-15));
}

TEST_CASE("reparameterize keeps the z identity exactly and is seed-deterministic") {
    Rng rng(17);
    const RealMatrix mu = random_matrix(4, 3, rng);
    const RealMatrix logvar = random_matrix(4, 3, rng);
    Rng draw_a(99), draw_b(99);
    const encoder::LatentSample a = encoder::reparameterize(mu, logvar, draw_a);
    const encoder::LatentSample b = encoder::reparameterize(mu, logvar, draw_b);
    CHECK(a.z == b.z);
    CHECK(a.epsilon == b.epsilon);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double want = mu.values()[i] +
                            std::exp(logvar.values()[i] / 2.0) * a.epsilon.values()[i];
        CHECK(a.z.values()[i] == want);  // bitwise: same expression as the implementation
    }
}

TEST_CASE("reparameterize: empirical moments match (mu, exp(logvar)) over 1e5 draws") {
    Rng rng(18);
    const double mu_val = 0.7, logvar_val = -0.4;
    const RealMatrix mu(1, 1, mu_val);
    const RealMatrix logvar(1, 1, logvar_val);
    const std::size_t n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    Rng draw(19);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = encoder::reparameterize(mu, logvar, draw).z(0, 0);
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const double sigma2 = std::exp(logvar_val);
    const double se_mean = std::sqrt(sigma2 / n);
    const double se_var = sigma2 * std::sqrt(2.0 / (n - 1.0));
    CHECK(std::abs(mean - mu_val) < 3.0 * se_mean);
    CHECK(std::abs(var - sigma2) < 3.0 * se_var);
}

TEST_CASE("kl_divergence: prior match is exactly zero with zero gradients") {
    const encoder::KlResult res = encoder::kl_divergence(RealMatrix(3, 4, 0.0),
                                                         RealMatrix(3, 4, 0.0));
    CHECK(res.kl == 0.0);
    for (double v : res.mu_grad.values()) CHECK(v == 0.0);
    for (double v : res.logvar_grad.values()) CHECK(v == 0.0);
}

TEST_CASE("kl_divergence: unit mean with unit variance is 1/2") {
    const encoder::KlResult res = encoder::kl_divergence(RealMatrix(1, 1, 1.0),
                                                         RealMatrix(1, 1, 0.0));
    CHECK(res.kl == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("kl_divergence is nonnegative and zero only at the prior") {
    Rng rng(20);
    for (int rep = 0; rep < 50; ++rep) {
        const RealMatrix mu = random_matrix(2, 3, rng, 2.0);
        const RealMatrix logvar = random_matrix(2, 3, rng, 2.0);
        const double kl = encoder::kl_divergence(mu, logvar).kl;
        CHECK(kl >= 0.0);
        double magnitude = 0.0;
        for (double v : mu.values()) magnitude += std::abs(v);
        for (double v : logvar.values()) magnitude += std::abs(v);
        if (magnitude > 1e-6) CHECK(kl > 1e-12);
    }
}

TEST_CASE("kl_divergence matches a Monte-Carlo estimate of E[log q - log p]") {
    Rng rng(21);
    const std::size_t d_z = 4;
    RealMatrix mu = random_matrix(1, d_z, rng);
    RealMatrix logvar = random_matrix(1, d_z, rng);
    const double closed_form = encoder::kl_divergence(mu, logvar).kl;

    const std::size_t n = 1000000;
    Rng draw(22);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double log_q = 0.0, log_p = 0.0;
        for (std::size_t j = 0; j < d_z; ++j) {
            const double eps = draw.normal();
            const double sigma = std::exp(logvar(0, j) / 2.0);
            const double z = mu(0, j) + sigma * eps;
            log_q += -0.5 * std::log(2.0 * M_PI) - logvar(0, j) / 2.0 - 0.5 * eps * eps;
            log_p += -0.5 * std::log(2.0 * M_PI) - 0.5 * z * z;
        }
        acc += log_q - log_p;
    }
    CHECK(std::abs(acc / n - closed_form) < 1e-2);
}

TEST_CASE("pathwise gradients through the retained epsilon match finite differences") {
    Rng rng(23);
    encoder::GaussianEncoderParams params = encoder::make_encoder(5, {6}, 3, rng);
    const RealMatrix x = random_matrix(4, 5, rng);
    auto [mu0, logvar0] = encoder::encode(params, x);
    RealMatrix eps = random_matrix(4, 3, rng);  // fixed noise, replayed everywhere

    const double lambda = 0.7;
    // L(theta) = lambda * KL + sum z^2 with z = mu + exp(logvar/2) .* eps
    const auto loss_at = [&](const encoder::GaussianEncoderParams& p) {
        auto [mu, logvar] = encoder::encode(p, x);
        const encoder::LatentSample sample = encoder::reparameterize_with(mu, logvar, eps);
        double loss = lambda * encoder::kl_divergence(mu, logvar).kl;
        for (double z : sample.z.values()) loss += z * z;
        return loss;
    };

    const encoder::LatentSample sample = encoder::reparameterize_with(mu0, logvar0, eps);
    RealMatrix z_grad(4, 3);
    for (std::size_t i = 0; i < z_grad.size(); ++i)
        z_grad.values()[i] = 2.0 * sample.z.values()[i];
    auto [mu_grad, logvar_grad] = encoder::pathwise_grads(sample, z_grad);
    const encoder::KlResult kl = encoder::kl_divergence(mu0, logvar0);
    for (std::size_t i = 0; i < mu_grad.size(); ++i) {
        mu_grad.values()[i] += lambda * kl.mu_grad.values()[i];
        logvar_grad.values()[i] += lambda * kl.logvar_grad.values()[i];
    }
    const encoder::EncoderGradients analytic =
        encoder::encoder_backward(params, x, mu_grad, logvar_grad);

    encoder::GaussianEncoderParams probe = params;
    const auto analytic_ptrs = analytic.ptrs();
    auto probe_ptrs = probe.param_ptrs();
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t t = 0; t < probe_ptrs.size(); ++t) {
        for (std::size_t i = 0; i < probe_ptrs[t]->size(); ++i) {
            double& slot = probe_ptrs[t]->values()[i];
            const double saved = slot;
            slot = saved + h;
            const double up = loss_at(probe);
            slot = saved - h;
            const double down = loss_at(probe);
            slot = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double got = analytic_ptrs[t]->values()[i];
            const double denom = std::max({std::abs(numeric), std::abs(got), 1e-6});
            worst = std::max(worst, std::abs(numeric - got) / denom);
        }
    }
    CHECK(worst < 1e-4);
}
