#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "gpp/matrix.hpp"
#include "gpp/nn.hpp"
#include "gpp/rng.hpp"

namespace gpp::encoder {

// Stochastic encoder: a shared relu trunk feeding two linear heads that
// produce the mean and log-variance of a diagonal Gaussian over the latent
// space.
struct GaussianEncoderParams {
    nn::DenseNet trunk;        // d_x -> trunk width
    nn::DenseNet mean_head;    // trunk width -> d_z, identity
    nn::DenseNet logvar_head;  // trunk width -> d_z, identity

    std::size_t input_dim() const { return trunk.input_dim(); }
    std::size_t latent_dim() const { return mean_head.output_dim(); }
    std::size_t param_count() const {
        return trunk.param_count() + mean_head.param_count() + logvar_head.param_count();
    }

    // trunk, mean head, logvar head order; canonical for Adam and checkpoints.
    std::vector<RealMatrix*> param_ptrs();
    std::vector<const RealMatrix*> param_ptrs() const;

    friend bool operator==(const GaussianEncoderParams& a, const GaussianEncoderParams& b) {
        return a.trunk == b.trunk && a.mean_head == b.mean_head &&
               a.logvar_head == b.logvar_head;
    }
};

struct EncoderGradients {
    nn::GradientSet trunk;
    nn::GradientSet mean_head;
    nn::GradientSet logvar_head;

    static EncoderGradients zeros_like(const GaussianEncoderParams& params);
    std::vector<const RealMatrix*> ptrs() const;
    void accumulate(const EncoderGradients& other, double scale = 1.0);
};

// One reparameterized draw. epsilon is retained so gradients can be replayed
// along the exact path that produced z.
struct LatentSample {
    RealMatrix z;
    RealMatrix epsilon;
    RealMatrix mu;
    RealMatrix logvar;
};

GaussianEncoderParams make_encoder(std::size_t input_dim,
                                   const std::vector<std::size_t>& trunk_hidden,
                                   std::size_t latent_dim, Rng& rng);

// (mu, logvar), each batch x d_z. Deterministic.
std::pair<RealMatrix, RealMatrix> encode(const GaussianEncoderParams& params,
                                         const RealMatrix& x);

// z = mu + exp(logvar/2) .* epsilon with epsilon ~ N(0, I) drawn row-major.
LatentSample reparameterize(const RealMatrix& mu, const RealMatrix& logvar, Rng& rng);

// Same with caller-supplied noise (test hook and gradient replay).
LatentSample reparameterize_with(const RealMatrix& mu, const RealMatrix& logvar,
                                 RealMatrix epsilon);

struct KlResult {
    double kl = 0.0;         // mean over batch of 1/2 sum(mu^2 + sigma^2 - logvar - 1)
    RealMatrix mu_grad;      // mu / batch
    RealMatrix logvar_grad;  // (exp(logvar) - 1) / (2 * batch)
};

KlResult kl_divergence(const RealMatrix& mu, const RealMatrix& logvar);

// Maps dL/dz through z = mu + exp(logvar/2) .* epsilon:
//   dL/dmu = dL/dz,  dL/dlogvar = dL/dz .* epsilon .* exp(logvar/2) / 2.
std::pair<RealMatrix, RealMatrix> pathwise_grads(const LatentSample& sample,
                                                 const RealMatrix& z_grad);

// Chains (dL/dmu, dL/dlogvar) through both heads and the trunk.
EncoderGradients encoder_backward(const GaussianEncoderParams& params, const RealMatrix& x,
                                  const RealMatrix& mu_grad, const RealMatrix& logvar_grad);

}  // namespace gpp::encoder
