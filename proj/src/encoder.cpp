#include "gpp/encoder.hpp"

#include <cmath>

#include "gpp/errors.hpp"

namespace gpp::encoder {

std::vector<RealMatrix*> GaussianEncoderParams::param_ptrs() {
    std::vector<RealMatrix*> out = trunk.param_ptrs();
    for (auto* p : mean_head.param_ptrs()) out.push_back(p);
    for (auto* p : logvar_head.param_ptrs()) out.push_back(p);
    return out;
}

std::vector<const RealMatrix*> GaussianEncoderParams::param_ptrs() const {
    std::vector<const RealMatrix*> out = trunk.param_ptrs();
    for (const auto* p : mean_head.param_ptrs()) out.push_back(p);
    for (const auto* p : logvar_head.param_ptrs()) out.push_back(p);
    return out;
}

EncoderGradients EncoderGradients::zeros_like(const GaussianEncoderParams& params) {
    return {nn::GradientSet::zeros_like(params.trunk),
            nn::GradientSet::zeros_like(params.mean_head),
            nn::GradientSet::zeros_like(params.logvar_head)};
}

std::vector<const RealMatrix*> EncoderGradients::ptrs() const {
    std::vector<const RealMatrix*> out = trunk.ptrs();
    for (const auto* p : mean_head.ptrs()) out.push_back(p);
    for (const auto* p : logvar_head.ptrs()) out.push_back(p);
    return out;
}

void EncoderGradients::accumulate(const EncoderGradients& other, double scale) {
    trunk.accumulate(other.trunk, scale);
    mean_head.accumulate(other.mean_head, scale);
    logvar_head.accumulate(other.logvar_head, scale);
}

GaussianEncoderParams make_encoder(std::size_t input_dim,
                                   const std::vector<std::size_t>& trunk_hidden,
                                   std::size_t latent_dim, Rng& rng) {
    if (trunk_hidden.empty()) throw ConfigError("make_encoder: trunk needs >= 1 hidden layer");
    if (latent_dim < 1 || latent_dim >= input_dim)
        throw ConfigError("make_encoder: need 1 <= d_z < d_x, got d_z=" +
                          std::to_string(latent_dim) + ", d_x=" + std::to_string(input_dim));
    GaussianEncoderParams params;
    std::vector<std::size_t> hidden(trunk_hidden.begin(), trunk_hidden.end() - 1);
    params.trunk = nn::make_mlp(input_dim, hidden, trunk_hidden.back(), nn::Activation::kRelu);
    params.mean_head =
        nn::make_mlp(trunk_hidden.back(), {}, latent_dim, nn::Activation::kIdentity);
    params.logvar_head =
        nn::make_mlp(trunk_hidden.back(), {}, latent_dim, nn::Activation::kIdentity);
    nn::init_xavier(params.trunk, rng);
    nn::init_xavier(params.mean_head, rng);
    nn::init_xavier(params.logvar_head, rng);
    // Start with a small posterior variance so early latents are informative.
    // With the bias at zero the latent starts as prior noise and alternating
    // training can lock into an uninformative encoder before the classifiers
    // pick up any signal.
    params.logvar_head.layers.back().bias.fill(-4.0);
    return params;
}

std::pair<RealMatrix, RealMatrix> encode(const GaussianEncoderParams& params,
                                         const RealMatrix& x) {
    const RealMatrix h = nn::forward(params.trunk, x);
    RealMatrix mu = nn::forward(params.mean_head, h);
    RealMatrix logvar = nn::forward(params.logvar_head, h);
    return {std::move(mu), std::move(logvar)};
}

LatentSample reparameterize_with(const RealMatrix& mu, const RealMatrix& logvar,
                                 RealMatrix epsilon) {
    if (!mu.same_shape(logvar) || !mu.same_shape(epsilon))
        throw ShapeError("reparameterize: mu/logvar/epsilon shapes differ");
    LatentSample sample;
    sample.mu = mu;
    sample.logvar = logvar;
    sample.epsilon = std::move(epsilon);
    sample.z = RealMatrix(mu.rows(), mu.cols());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        sample.z.values()[i] = mu.values()[i] +
                               std::exp(logvar.values()[i] / 2.0) * sample.epsilon.values()[i];
    }
    return sample;
}

LatentSample reparameterize(const RealMatrix& mu, const RealMatrix& logvar, Rng& rng) {
    RealMatrix epsilon(mu.rows(), mu.cols());
    for (auto& e : epsilon.values()) e = rng.normal();
    return reparameterize_with(mu, logvar, std::move(epsilon));
}

KlResult kl_divergence(const RealMatrix& mu, const RealMatrix& logvar) {
    if (!mu.same_shape(logvar)) throw ShapeError("kl_divergence: mu/logvar shapes differ");
    const std::size_t batch = mu.rows();
    if (batch == 0) throw DomainError("kl_divergence: empty batch");
    KlResult result;
    result.mu_grad = RealMatrix(mu.rows(), mu.cols());
    result.logvar_grad = RealMatrix(mu.rows(), mu.cols());
    const double inv_batch = 1.0 / static_cast<double>(batch);
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double m = mu.values()[i];
        const double lv = logvar.values()[i];
        const double var = std::exp(lv);
        total += 0.5 * (m * m + var - lv - 1.0);
        result.mu_grad.values()[i] = m * inv_batch;
        result.logvar_grad.values()[i] = 0.5 * (var - 1.0) * inv_batch;
    }
    result.kl = total * inv_batch;
    return result;
}

std::pair<RealMatrix, RealMatrix> pathwise_grads(const LatentSample& sample,
                                                 const RealMatrix& z_grad) {
    if (!z_grad.same_shape(sample.z)) throw ShapeError("pathwise_grads: z_grad shape mismatch");
    RealMatrix mu_grad = z_grad;
    RealMatrix logvar_grad(z_grad.rows(), z_grad.cols());
    for (std::size_t i = 0; i < z_grad.size(); ++i) {
        logvar_grad.values()[i] = z_grad.values()[i] * sample.epsilon.values()[i] *
                                  std::exp(sample.logvar.values()[i] / 2.0) * 0.5;
    }
    return {std::move(mu_grad), std::move(logvar_grad)};
}

EncoderGradients encoder_backward(const GaussianEncoderParams& params, const RealMatrix& x,
                                  const RealMatrix& mu_grad, const RealMatrix& logvar_grad) {
    const nn::ForwardTrace trunk_trace = nn::forward_trace(params.trunk, x);
    const RealMatrix& h = trunk_trace.output();

    EncoderGradients grads;
    auto [mean_grads, h_grad_mean] = nn::backward(params.mean_head, h, mu_grad);
    auto [logvar_grads, h_grad_logvar] = nn::backward(params.logvar_head, h, logvar_grad);
    grads.mean_head = std::move(mean_grads);
    grads.logvar_head = std::move(logvar_grads);

    RealMatrix h_grad = std::move(h_grad_mean);
    for (std::size_t i = 0; i < h_grad.size(); ++i)
        h_grad.values()[i] += h_grad_logvar.values()[i];

    auto [trunk_grads, input_grad] = nn::backward(params.trunk, x, trunk_trace, h_grad);
    (void)input_grad;
    grads.trunk = std::move(trunk_grads);
    return grads;
}

}  // namespace gpp::encoder
