#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpp/matrix.hpp"
#include "gpp/nn.hpp"
#include "gpp/rng.hpp"
#include "gpp/trainer.hpp"

namespace gpp::audit {

// Fresh post-hoc probe: 3-layer MLP matching the training adversary's
// capacity, trained from scratch on released representations only.
struct ProbeSpec {
    std::vector<std::size_t> hidden = {256, 128};
    std::size_t epochs = 30;
    double lr = 1e-4;
    std::size_t batch_size = 64;

    std::string fingerprint() const;
    void validate() const;
};

struct SeedMetrics {
    std::uint64_t seed = 0;
    double utility_auc = 0.0;
    double adversary_auc = 0.0;
};

struct AuditReport {
    double utility_auc = 0.0;    // mean across seeds
    double adversary_auc = 0.0;  // mean across seeds
    double privacy_gap = 0.0;    // |adversary_auc - 0.5|
    double utility_auc_std = 0.0;
    double adversary_auc_std = 0.0;
    double fano_lower_bound_on_error = 0.0;
    double h_s = 0.0;         // plug-in entropy of the sensitive labels, nats
    double mi_zs_estimate = 0.0;  // variational lower-bound estimate from the probe
    std::string config_fingerprint;
    std::string multiclass_reduction = "macro-ovr";
    bool sampled_release = false;
    std::vector<SeedMetrics> per_seed;
    std::vector<std::string> warnings;
};

// Trains a fresh softmax classifier on (z, label) pairs; never sees x.
nn::DenseNet train_probe(const RealMatrix& z_train, const std::vector<int>& labels,
                         int num_classes, const ProbeSpec& spec, std::uint64_t seed);

// Exact Mann-Whitney AUC: P(score_pos > score_neg) + 1/2 P(tie).
double binary_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Unweighted mean of one-vs-rest binary AUC over classes present in the
// labels; absent classes are skipped and reported through `warnings`.
double macro_auc(const RealMatrix& class_scores, const std::vector<int>& labels,
                 std::vector<std::string>* warnings = nullptr);

// max(0, (H_S - I_ZS - 1) / ln(num_classes)), clamped to [0,1]. Zero means
// the bound is vacuous.
double fano_error_bound(double h_s, double i_zs, std::size_t num_classes);

// Plug-in entropy of a label vector, nats.
double empirical_entropy(const std::vector<int>& labels, int num_classes);

struct AuditInputs {
    RealMatrix z_train;
    RealMatrix z_test;
    std::vector<int> u_train, u_test;
    std::vector<int> s_train, s_test;
    int u_classes = 0;
    int s_classes = 0;
};

// One utility probe and one adversary probe per seed, trained on released
// train representations and scored on released test representations.
AuditReport run_audit(const AuditInputs& inputs, const ProbeSpec& spec,
                      const std::vector<std::uint64_t>& seeds);

// Convenience wrapper: releases representations from a trained model (mean
// latent by default, sampled with `sampled_release`), audits the first
// utility and sensitive attribute.
AuditReport run_audit(const trainer::TrainedModel& model, const data::LabeledDataset& train,
                      const data::LabeledDataset& test, const ProbeSpec& spec,
                      const std::vector<std::uint64_t>& seeds, bool sampled_release = false);

}  // namespace gpp::audit
