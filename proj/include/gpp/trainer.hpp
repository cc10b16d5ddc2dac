#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gpp/data.hpp"
#include "gpp/encoder.hpp"
#include "gpp/nn.hpp"
#include "gpp/objective.hpp"
#include "gpp/rng.hpp"

namespace gpp::trainer {

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t classifier_steps = 2;  // k
    double beta = 1.0;
    double lambda = 0.01;
    double lr = 1e-4;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    std::size_t d_z = 16;
    std::vector<std::size_t> encoder_hidden = {512, 256};
    std::vector<std::size_t> classifier_hidden = {256, 128};
    double noise_scale = 0.5;  // noisy-encoder baseline only

    void validate(const data::LabeledDataset& dataset) const;
};

enum class ModelKind { kGpp, kNoPrivacy, kNoisyEncoder };

struct LossTraces {
    std::vector<double> encoder_loss;  // one entry per encoder update
    std::vector<double> utility_ce;
    std::vector<double> adversary_ce;
    std::vector<double> kl;
    std::vector<double> phase1_utility_ce;  // one entry per classifier step
    std::vector<double> phase1_adversary_ce;
};

struct TrainedModel {
    ModelKind kind = ModelKind::kGpp;
    TrainConfig config;
    encoder::GaussianEncoderParams enc;
    std::vector<nn::DenseNet> utility_classifiers;
    std::vector<nn::DenseNet> adversary_classifiers;
    nn::AdamState encoder_adam;
    std::vector<nn::AdamState> utility_adam;
    std::vector<nn::AdamState> adversary_adam;
    Rng rng{0};  // training stream, positioned for resumption
    std::size_t epochs_done = 0;
    LossTraces traces;
};

enum class Phase { kClassifiers, kEncoder };

// Test instrumentation; both callbacks optional.
struct TrainHooks {
    std::function<void(std::size_t outer, Phase, const TrainedModel&)> after_phase;
    std::function<void(std::size_t epoch, const TrainedModel&)> after_epoch;
};

// Alternating saddle-point training: per outer iteration, k classifier
// mini-batches (utility then adversary on the same fresh draw), then one
// encoder update on its own fresh mini-batch against frozen classifiers.
TrainedModel train_gpp(const data::LabeledDataset& dataset, const TrainConfig& cfg,
                       const TrainHooks* hooks = nullptr);

// Same loop with the adversary term removed from the encoder objective;
// adversary classifiers still train, for monitoring only.
TrainedModel train_no_privacy(const data::LabeledDataset& dataset, const TrainConfig& cfg,
                              const TrainHooks* hooks = nullptr);

// No-privacy variant that adds isotropic noise of the given scale to z
// during training and at release.
TrainedModel train_noisy_encoder(const data::LabeledDataset& dataset, const TrainConfig& cfg,
                                 double noise_scale, const TrainHooks* hooks = nullptr);

// Runs additional epochs on a model restored from a checkpoint (or trained
// earlier in-process); picks up the rng and Adam streams where they left off.
void train_continue(TrainedModel& model, const data::LabeledDataset& dataset,
                    std::size_t extra_epochs, const TrainHooks* hooks = nullptr);

// Representation a data owner would actually publish. Mean latent by
// default; `sampled` draws z through the reparameterization path. The noisy
// baseline adds its release noise in both modes (rng required then).
RealMatrix release_representations(const TrainedModel& model, const RealMatrix& x, bool sampled,
                                   Rng* rng);

// z = x A^T for a fixed seeded Gaussian matrix; no training involved.
RealMatrix random_projection_release(const RealMatrix& x, std::size_t d_z, std::uint64_t seed);

}  // namespace gpp::trainer
