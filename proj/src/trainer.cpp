#include "gpp/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "gpp/errors.hpp"
#include "gpp/kernels.hpp"

namespace gpp::trainer {

namespace {

// Without-replacement mini-batch stream, reshuffled once per epoch.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch) : batch_(batch) {
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), 0);
    }

    void start_epoch(Rng& rng) {
        // reset to the canonical order first so a run resumed from a
        // checkpoint shuffles exactly what the uninterrupted run shuffled
        std::iota(order_.begin(), order_.end(), 0);
        shuffle(order_, rng);
        cursor_ = 0;
    }

    std::vector<std::size_t> next(Rng& rng) {
        if (cursor_ + batch_ > order_.size()) {
            shuffle(order_, rng);  // tiny datasets wrap within an epoch
            cursor_ = 0;
        }
        std::vector<std::size_t> out(order_.begin() + cursor_, order_.begin() + cursor_ + batch_);
        cursor_ += batch_;
        return out;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t batch_;
    std::size_t cursor_ = 0;
};

RealMatrix gather_rows(const RealMatrix& x, const std::vector<std::size_t>& idx) {
    RealMatrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(x.row(idx[i]), x.row(idx[i]) + x.cols(), out.row(i));
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(labels[i]);
    return out;
}

void add_release_noise(RealMatrix& z, double noise_scale, Rng& rng) {
    if (noise_scale == 0.0) return;
    for (auto& v : z.values()) v += noise_scale * rng.normal();
}

TrainedModel init_model(ModelKind kind, const data::LabeledDataset& dataset,
                        const TrainConfig& cfg) {
    TrainedModel model;
    model.kind = kind;
    model.config = cfg;
    model.rng = Rng(cfg.seed);
    model.enc = encoder::make_encoder(dataset.feature_dim(), cfg.encoder_hidden, cfg.d_z,
                                      model.rng);
    for (std::size_t j = 0; j < dataset.u.size(); ++j) {
        model.utility_classifiers.push_back(
            nn::make_mlp(cfg.d_z, cfg.classifier_hidden,
                         static_cast<std::size_t>(dataset.u_cardinality[j]),
                         nn::Activation::kSoftmax));
        nn::init_xavier(model.utility_classifiers.back(), model.rng);
        model.utility_adam.push_back(nn::AdamState::like(model.utility_classifiers.back()));
    }
    for (std::size_t j = 0; j < dataset.s.size(); ++j) {
        model.adversary_classifiers.push_back(
            nn::make_mlp(cfg.d_z, cfg.classifier_hidden,
                         static_cast<std::size_t>(dataset.s_cardinality[j]),
                         nn::Activation::kSoftmax));
        nn::init_xavier(model.adversary_classifiers.back(), model.rng);
        model.adversary_adam.push_back(nn::AdamState::like(model.adversary_classifiers.back()));
    }
    model.encoder_adam = nn::AdamState::like(
        static_cast<const encoder::GaussianEncoderParams&>(model.enc).param_ptrs());
    return model;
}

void run_epochs(TrainedModel& model, const data::LabeledDataset& dataset, std::size_t epochs,
                const TrainHooks* hooks) {
    const TrainConfig& cfg = model.config;
    const std::size_t n = dataset.size();
    const std::size_t k = cfg.classifier_steps;
    const std::size_t batches_per_outer = k + 1;
    const std::size_t outers_per_epoch =
        std::max<std::size_t>(1, (n / cfg.batch_size) / batches_per_outer);
    const bool adversary_in_encoder_loss = model.kind == ModelKind::kGpp;
    const double noise = model.kind == ModelKind::kNoisyEncoder ? cfg.noise_scale : 0.0;

    BatchSampler sampler(n, cfg.batch_size);
    objective::GppLossConfig loss_cfg{cfg.beta, cfg.lambda};

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        sampler.start_epoch(model.rng);
        for (std::size_t outer = 0; outer < outers_per_epoch; ++outer) {
            try {
                // Phase 1: utility and adversary classifiers on fresh draws
                for (std::size_t t = 0; t < k; ++t) {
                    const auto idx = sampler.next(model.rng);
                    const RealMatrix xb = gather_rows(dataset.x, idx);
                    auto [mu, logvar] = encoder::encode(model.enc, xb);
                    encoder::LatentSample sample =
                        encoder::reparameterize(mu, logvar, model.rng);
                    add_release_noise(sample.z, noise, model.rng);

                    double util_ce = 0.0, adv_ce = 0.0;
                    for (std::size_t j = 0; j < model.utility_classifiers.size(); ++j) {
                        auto res = objective::utility_classifier_loss(
                            sample.z, gather_labels(dataset.u[j], idx),
                            model.utility_classifiers[j]);
                        util_ce += res.loss;
                        nn::adam_step(model.utility_classifiers[j], res.classifier_grads,
                                      model.utility_adam[j], cfg.lr);
                    }
                    for (std::size_t j = 0; j < model.adversary_classifiers.size(); ++j) {
                        auto res = objective::adversary_classifier_loss(
                            sample.z, gather_labels(dataset.s[j], idx),
                            model.adversary_classifiers[j]);
                        adv_ce += res.loss;
                        nn::adam_step(model.adversary_classifiers[j], res.classifier_grads,
                                      model.adversary_adam[j], cfg.lr);
                    }
                    model.traces.phase1_utility_ce.push_back(util_ce);
                    model.traces.phase1_adversary_ce.push_back(adv_ce);
                }
                if (hooks && hooks->after_phase)
                    hooks->after_phase(outer, Phase::kClassifiers, model);

                // Phase 2: encoder against frozen classifiers
                const auto idx = sampler.next(model.rng);
                const RealMatrix xb = gather_rows(dataset.x, idx);
                auto [mu, logvar] = encoder::encode(model.enc, xb);
                encoder::LatentSample sample = encoder::reparameterize(mu, logvar, model.rng);
                add_release_noise(sample.z, noise, model.rng);

                std::vector<std::vector<int>> u_batch, s_batch;
                for (const auto& attr : dataset.u) u_batch.push_back(gather_labels(attr, idx));
                for (const auto& attr : dataset.s) s_batch.push_back(gather_labels(attr, idx));
                std::vector<nn::DenseNet> empty_nets;

                objective::EncoderLossResult loss =
                    adversary_in_encoder_loss
                        ? objective::encoder_loss(sample, u_batch, s_batch,
                                                  model.utility_classifiers,
                                                  model.adversary_classifiers, loss_cfg)
                        : objective::encoder_loss(sample, u_batch, {}, model.utility_classifiers,
                                                  empty_nets, loss_cfg);
                if (!adversary_in_encoder_loss) {
                    // monitoring only: adversary CE on this batch, no gradient
                    for (std::size_t j = 0; j < model.adversary_classifiers.size(); ++j) {
                        loss.adversary_ce +=
                            nn::cross_entropy(
                                nn::forward(model.adversary_classifiers[j], sample.z), s_batch[j])
                                .loss;
                    }
                }
                if (!std::isfinite(loss.loss))
                    throw NumericError("encoder loss is not finite");

                encoder::EncoderGradients grads =
                    encoder::encoder_backward(model.enc, xb, loss.mu_grad, loss.logvar_grad);
                nn::adam_step(model.enc.param_ptrs(), grads.ptrs(), model.encoder_adam, cfg.lr);

                model.traces.encoder_loss.push_back(loss.loss);
                model.traces.utility_ce.push_back(loss.utility_ce);
                model.traces.adversary_ce.push_back(loss.adversary_ce);
                model.traces.kl.push_back(loss.kl);
                if (hooks && hooks->after_phase)
                    hooks->after_phase(outer, Phase::kEncoder, model);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (epoch " +
                                   std::to_string(model.epochs_done + 1) + ", outer iteration " +
                                   std::to_string(outer + 1) + ")");
            }
        }
        model.epochs_done += 1;
        if (hooks && hooks->after_epoch) hooks->after_epoch(model.epochs_done, model);
    }
}

TrainedModel train_kind(ModelKind kind, const data::LabeledDataset& dataset,
                        const TrainConfig& cfg, const TrainHooks* hooks) {
    dataset.validate();
    cfg.validate(dataset);
    TrainedModel model = init_model(kind, dataset, cfg);
    run_epochs(model, dataset, cfg.epochs, hooks);
    return model;
}

}  // namespace

void TrainConfig::validate(const data::LabeledDataset& dataset) const {
    if (dataset.size() == 0) throw ConfigError("TrainConfig: empty dataset");
    if (batch_size < 1 || batch_size > dataset.size())
        throw ConfigError("TrainConfig: need 1 <= batch_size <= n");
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be positive");
    if (d_z < 1 || d_z >= dataset.feature_dim())
        throw ConfigError("TrainConfig: need 1 <= d_z < d_x");
    if (encoder_hidden.empty()) throw ConfigError("TrainConfig: encoder needs hidden layers");
    if (!(noise_scale >= 0.0)) throw ConfigError("TrainConfig: noise_scale must be >= 0");
    objective::GppLossConfig{beta, lambda}.validate();
}

TrainedModel train_gpp(const data::LabeledDataset& dataset, const TrainConfig& cfg,
                       const TrainHooks* hooks) {
    return train_kind(ModelKind::kGpp, dataset, cfg, hooks);
}

TrainedModel train_no_privacy(const data::LabeledDataset& dataset, const TrainConfig& cfg,
                              const TrainHooks* hooks) {
    return train_kind(ModelKind::kNoPrivacy, dataset, cfg, hooks);
}

TrainedModel train_noisy_encoder(const data::LabeledDataset& dataset, const TrainConfig& cfg,
                                 double noise_scale, const TrainHooks* hooks) {
    if (!(noise_scale >= 0.0)) throw ConfigError("train_noisy_encoder: noise_scale must be >= 0");
    TrainConfig noisy_cfg = cfg;
    noisy_cfg.noise_scale = noise_scale;
    return train_kind(ModelKind::kNoisyEncoder, dataset, noisy_cfg, hooks);
}

void train_continue(TrainedModel& model, const data::LabeledDataset& dataset,
                    std::size_t extra_epochs, const TrainHooks* hooks) {
    dataset.validate();
    model.config.validate(dataset);
    run_epochs(model, dataset, extra_epochs, hooks);
}

RealMatrix release_representations(const TrainedModel& model, const RealMatrix& x, bool sampled,
                                   Rng* rng) {
    auto [mu, logvar] = encoder::encode(model.enc, x);
    RealMatrix z = mu;
    const bool needs_rng = sampled || model.kind == ModelKind::kNoisyEncoder;
    if (needs_rng && rng == nullptr)
        throw ConfigError("release_representations: this release mode needs an rng");
    if (sampled) z = encoder::reparameterize(mu, logvar, *rng).z;
    if (model.kind == ModelKind::kNoisyEncoder)
        add_release_noise(z, model.config.noise_scale, *rng);
    return z;
}

RealMatrix random_projection_release(const RealMatrix& x, std::size_t d_z, std::uint64_t seed) {
    if (d_z < 1 || d_z > x.cols())
        throw ConfigError("random_projection_release: need 1 <= d_z <= d_x");
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));
    RealMatrix a(d_z, x.cols());
    for (auto& v : a.values()) v = scale * rng.normal();
    return kernels::matmul_trans_b(x, a);
}

}  // namespace gpp::trainer
