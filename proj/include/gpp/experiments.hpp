#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpp/audit.hpp"
#include "gpp/data.hpp"
#include "gpp/federated.hpp"
#include "gpp/results.hpp"
#include "gpp/trainer.hpp"

namespace gpp::experiments {

struct DatasetSpec {
    std::string name = "synthetic";  // mnist-composite | hapt | synthetic
    std::size_t subsample = 0;       // train samples to keep; 0 = dataset default
    double rho = 0.0;                // synthetic only
    std::string data_dir;            // empty: $GPP_DATA_DIR, else ./gpp_data
    std::uint64_t seed = 1;
    bool full_scale = false;
};

struct DatasetBundle {
    data::LabeledDataset train;
    data::LabeledDataset test;
    std::string provenance;  // which source actually backed the bundle
};

std::string resolve_data_dir(const std::string& configured);

// Loads or synthesizes the requested dataset. mnist-composite prefers real
// IDX files under the data dir and falls back to generating surrogate-digit
// IDX files there (same pipeline, procedural source). hapt requires
// hapt_train.csv / hapt_test.csv and reports fetch instructions otherwise.
DatasetBundle load_dataset(const DatasetSpec& spec);

struct ExperimentConfig {
    std::string experiment;  // baselines | beta-sweep | dz-sweep | k-ablation |
                             // rho-robustness | seed-stats | distributed
    DatasetSpec dataset;
    trainer::TrainConfig train;
    audit::ProbeSpec probe;
    std::vector<std::string> methods;  // filled by experiment defaults when empty
    std::vector<double> beta_values;
    std::vector<std::size_t> dz_values;
    std::vector<std::size_t> k_values;
    std::vector<double> rho_values;
    std::vector<std::uint64_t> seeds = {1};
    std::size_t clients = 5;
    std::size_t rounds = 30;
    std::string out_path;
    std::string format = "jsonl";
    bool full_scale = false;
    bool sampled_release = false;  // audit sampled z instead of the mean latent
    std::size_t jobs = 1;

    void apply_experiment_defaults();
    std::vector<std::pair<std::string, std::string>> fingerprint_fields() const;
};

// Full cross-product of the configured axes and seeds. Records append to
// out_path atomically as they finish; sweep points whose fingerprint is
// already present there are skipped, so reruns are idempotent.
std::vector<results::ResultRecord> run_experiment(const ExperimentConfig& cfg);

// Single training + audit round-trip shared by run_experiment and the CLI
// `train`/`audit` verbs.
struct SinglePoint {
    std::string method = "gpp";  // gpp | no-privacy | noisy-encoder | random-projection
    trainer::TrainConfig train;
    audit::ProbeSpec probe;
    bool sampled_release = false;
};

audit::AuditReport evaluate_point(const SinglePoint& point, const DatasetBundle& bundle);

}  // namespace gpp::experiments
