#include "gpp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "gpp/errors.hpp"

namespace gpp::experiments {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSurrogateTrainImages = 24000;
constexpr std::size_t kSurrogateTestImages = 4000;
constexpr std::size_t kFullTrainImages = 60000;
constexpr std::size_t kFullTestImages = 10000;

struct IdxPair {
    std::string images;
    std::string labels;
};

bool exists(const std::string& path) { return fs::exists(path); }

data::LabeledDataset composite_from_idx(const IdxPair& pair, std::uint64_t seed) {
    const data::IdxTensor images = data::load_idx_file(pair.images);
    const data::IdxTensor labels = data::load_idx_file(pair.labels);
    if (images.dims.size() != 3 || images.dims[1] != 28 || images.dims[2] != 28)
        throw DataError("expected 28x28 images in " + pair.images);
    RealMatrix x(images.dims[0], 784);
    x.values() = images.reals;
    return data::build_mnist_composite(x, labels.ints, seed);
}

void generate_surrogate_idx(const std::string& dir, bool full_scale) {
    const std::size_t n_train = full_scale ? kFullTrainImages : kSurrogateTrainImages;
    const std::size_t n_test = full_scale ? kFullTestImages : kSurrogateTestImages;
    const data::SurrogateDigits train = data::gen_surrogate_digits(n_train, 11);
    const data::SurrogateDigits test = data::gen_surrogate_digits(n_test, 12);

    auto to_images = [](const RealMatrix& m) {
        data::IdxTensor t;
        t.magic = data::kIdxImageMagic;
        t.dims = {static_cast<std::uint32_t>(m.rows()), 28, 28};
        t.reals = m.values();
        return t;
    };
    auto to_labels = [](const std::vector<int>& labels) {
        data::IdxTensor t;
        t.magic = data::kIdxLabelMagic;
        t.dims = {static_cast<std::uint32_t>(labels.size())};
        t.ints = labels;
        return t;
    };
    fs::create_directories(dir);
    data::write_idx_file(to_images(train.images), dir + "/surrogate-train-images-idx3-ubyte");
    data::write_idx_file(to_labels(train.labels), dir + "/surrogate-train-labels-idx1-ubyte");
    data::write_idx_file(to_images(test.images), dir + "/surrogate-t10k-images-idx3-ubyte");
    data::write_idx_file(to_labels(test.labels), dir + "/surrogate-t10k-labels-idx1-ubyte");
}

std::vector<std::size_t> head_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace

std::string resolve_data_dir(const std::string& configured) {
    if (!configured.empty()) return configured;
    if (const char* env = std::getenv("GPP_DATA_DIR"); env && *env) return env;
    return "gpp_data";
}

DatasetBundle load_dataset(const DatasetSpec& spec) {
    DatasetBundle bundle;
    const std::string dir = resolve_data_dir(spec.data_dir);

    if (spec.name == "synthetic") {
        const std::size_t n = spec.subsample != 0 ? spec.subsample
                              : (spec.full_scale ? 60000 : 12000);
        // oversample so the post-split train size matches the request
        const std::size_t total = n + n / 4;
        const data::LabeledDataset all =
            data::gen_correlated_synthetic(total, 64, spec.rho, spec.seed);
        auto [train, test] = data::train_test_split(all, 0.8, spec.seed + 1);
        bundle.train = std::move(train);
        bundle.test = std::move(test);
        bundle.provenance = "synthetic";
        return bundle;
    }

    if (spec.name == "mnist-composite") {
        const IdxPair real_train{dir + "/train-images-idx3-ubyte",
                                 dir + "/train-labels-idx1-ubyte"};
        const IdxPair real_test{dir + "/t10k-images-idx3-ubyte",
                                dir + "/t10k-labels-idx1-ubyte"};
        IdxPair train_pair = real_train;
        IdxPair test_pair = real_test;
        if (exists(real_train.images) && exists(real_train.labels) &&
            exists(real_test.images) && exists(real_test.labels)) {
            bundle.provenance = "mnist-idx";
        } else {
            train_pair = {dir + "/surrogate-train-images-idx3-ubyte",
                          dir + "/surrogate-train-labels-idx1-ubyte"};
            test_pair = {dir + "/surrogate-t10k-images-idx3-ubyte",
                         dir + "/surrogate-t10k-labels-idx1-ubyte"};
            if (!exists(train_pair.images) || !exists(test_pair.images) ||
                !exists(train_pair.labels) || !exists(test_pair.labels)) {
                generate_surrogate_idx(dir, spec.full_scale);
            }
            bundle.provenance = "surrogate-idx";
        }
        bundle.train = composite_from_idx(train_pair, spec.seed);
        bundle.test = composite_from_idx(test_pair, spec.seed + 1);
        if (spec.subsample != 0 && spec.subsample < bundle.train.size())
            bundle.train = bundle.train.subset(head_indices(spec.subsample));
        return bundle;
    }

    if (spec.name == "hapt") {
        const std::string train_csv = dir + "/hapt_train.csv";
        const std::string test_csv = dir + "/hapt_test.csv";
        if (!exists(train_csv) || !exists(test_csv)) {
            throw DataError(
                "hapt dataset not found under '" + dir +
                "'. Fetch the HAPT (Smartphone-Based Recognition of Human Activities and "
                "Postural Transitions) dataset from the UCI Machine Learning Repository, "
                "then export hapt_train.csv and hapt_test.csv with a header row, 561 "
                "feature columns, an activity column, and a subject column. See README.");
        }
        std::vector<std::size_t> feature_cols(561);
        for (std::size_t i = 0; i < 561; ++i) feature_cols[i] = i;
        const data::CsvDataset train =
            data::load_csv_labeled(train_csv, feature_cols, 561, 562);
        const data::CsvDataset test = data::load_csv_labeled(
            test_csv, feature_cols, 561, 562, &train.standardizer, &train.u_label_values,
            &train.s_label_values);
        bundle.train = train.dataset;
        bundle.test = test.dataset;
        if (spec.subsample != 0 && spec.subsample < bundle.train.size())
            bundle.train = bundle.train.subset(head_indices(spec.subsample));
        bundle.provenance = "hapt-csv";
        return bundle;
    }

    throw ConfigError("unknown dataset '" + spec.name +
                      "' (want mnist-composite, hapt, or synthetic)");
}

void ExperimentConfig::apply_experiment_defaults() {
    const bool full = full_scale;
    dataset.full_scale = full;
    auto default_methods = [&](std::initializer_list<const char*> names) {
        if (methods.empty())
            for (const char* n : names) methods.emplace_back(n);
    };

    if (experiment == "baselines") {
        default_methods({"no-privacy", "random-projection", "noisy-encoder", "gpp"});
    } else if (experiment == "beta-sweep") {
        default_methods({"gpp"});
        if (beta_values.empty())
            beta_values = full ? std::vector<double>{0.1, 0.5, 1.0, 2.0, 4.0, 8.0}
                               : std::vector<double>{0.1, 1.0, 8.0};
    } else if (experiment == "dz-sweep") {
        default_methods({"gpp"});
        if (dz_values.empty())
            dz_values = full ? std::vector<std::size_t>{40, 80, 120, 160, 200}
                             : std::vector<std::size_t>{40, 120, 200};
    } else if (experiment == "k-ablation") {
        default_methods({"gpp"});
        if (k_values.empty())
            k_values = full ? std::vector<std::size_t>{0, 1, 2, 3, 5, 10}
                            : std::vector<std::size_t>{0, 2};
    } else if (experiment == "rho-robustness") {
        default_methods({"gpp", "no-privacy"});
        if (rho_values.empty())
            rho_values = full ? std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8, 1.0}
                              : std::vector<double>{0.0, 0.4, 0.8};
        if (dataset.name != "synthetic")
            throw ConfigError("rho-robustness runs on the synthetic dataset");
    } else if (experiment == "seed-stats") {
        default_methods({"gpp", "no-privacy", "noisy-encoder"});
        if (seeds.size() < 2) {
            seeds.clear();
            for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
        }
    } else if (experiment == "distributed") {
        default_methods({"centralized", "distributed", "distributed-hetero-beta"});
    } else {
        throw ConfigError("unknown experiment '" + experiment + "'");
    }
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::fingerprint_fields() const {
    std::ostringstream betas, dzs, ks, rhos;
    for (double b : beta_values) betas << b << " ";
    for (std::size_t d : dz_values) dzs << d << " ";
    for (std::size_t k : k_values) ks << k << " ";
    for (double r : rho_values) rhos << r << " ";
    return {
        {"experiment", experiment},
        {"dataset", dataset.name},
        {"subsample", std::to_string(dataset.subsample)},
        {"betas", betas.str()},
        {"dzs", dzs.str()},
        {"ks", ks.str()},
        {"rhos", rhos.str()},
        {"epochs", std::to_string(train.epochs)},
        {"batch", std::to_string(train.batch_size)},
        {"full", full_scale ? "1" : "0"},
    };
}

audit::AuditReport evaluate_point(const SinglePoint& point, const DatasetBundle& bundle) {
    const std::vector<std::uint64_t> probe_seeds = {point.train.seed};
    if (point.method == "random-projection") {
        audit::AuditInputs inputs;
        inputs.z_train = trainer::random_projection_release(bundle.train.x, point.train.d_z,
                                                            point.train.seed);
        inputs.z_test = trainer::random_projection_release(bundle.test.x, point.train.d_z,
                                                           point.train.seed);
        inputs.u_train = bundle.train.u[0];
        inputs.s_train = bundle.train.s[0];
        inputs.u_test = bundle.test.u[0];
        inputs.s_test = bundle.test.s[0];
        inputs.u_classes = bundle.train.u_cardinality[0];
        inputs.s_classes = bundle.train.s_cardinality[0];
        return audit::run_audit(inputs, point.probe, probe_seeds);
    }

    trainer::TrainedModel model;
    if (point.method == "gpp") {
        model = trainer::train_gpp(bundle.train, point.train);
    } else if (point.method == "no-privacy") {
        model = trainer::train_no_privacy(bundle.train, point.train);
    } else if (point.method == "noisy-encoder") {
        model = trainer::train_noisy_encoder(bundle.train, point.train,
                                             point.train.noise_scale);
    } else {
        throw ConfigError("unknown method '" + point.method + "'");
    }
    return audit::run_audit(model, bundle.train, bundle.test, point.probe, probe_seeds,
                            point.sampled_release);
}

namespace {

struct SweepPoint {
    std::string method;
    double beta;
    std::size_t d_z;
    std::size_t k;
    double rho;
    std::uint64_t seed;
    bool uses_rho = false;
};

std::vector<std::pair<std::string, std::string>> point_axes(const SweepPoint& p) {
    std::vector<std::pair<std::string, std::string>> axes;
    axes.emplace_back("method", p.method);
    axes.emplace_back("beta", results::format_six_digits(p.beta));
    axes.emplace_back("dz", std::to_string(p.d_z));
    axes.emplace_back("k", std::to_string(p.k));
    if (p.uses_rho) axes.emplace_back("rho", results::format_six_digits(p.rho));
    axes.emplace_back("seed", std::to_string(p.seed));
    return axes;
}

results::ResultRecord make_record(const ExperimentConfig& cfg, const SweepPoint& p,
                                  const audit::AuditReport& report, double wall_time_s) {
    results::ResultRecord record;
    record.experiment = cfg.experiment;
    record.axes = point_axes(p);
    auto fields = record.axes;
    fields.emplace_back("experiment", cfg.experiment);
    fields.emplace_back("dataset", cfg.dataset.name);
    fields.emplace_back("subsample", std::to_string(cfg.dataset.subsample));
    fields.emplace_back("epochs", std::to_string(cfg.train.epochs));
    record.fingerprint = results::fingerprint(fields);
    record.utility_auc = report.utility_auc;
    record.adversary_auc = report.adversary_auc;
    record.privacy_gap = report.privacy_gap;
    record.wall_time_s = wall_time_s;
    return record;
}

std::vector<results::ResultRecord> run_distributed_experiment(const ExperimentConfig& cfg) {
    DatasetSpec spec = cfg.dataset;
    DatasetBundle bundle = load_dataset(spec);
    const bool by_subject = cfg.dataset.name == "hapt";
    const data::PartitionMode mode = by_subject ? data::PartitionMode::kBySensitiveClass
                                                : data::PartitionMode::kUniformRandom;

    std::vector<results::ResultRecord> records;
    const std::set<std::string> done = cfg.out_path.empty()
                                           ? std::set<std::string>{}
                                           : results::load_fingerprints(
                                                 cfg.out_path, results::parse_format(cfg.format));
    const std::string experiment_fp = results::fingerprint(cfg.fingerprint_fields());

    for (const std::string& method : cfg.methods) {
        for (std::uint64_t seed : cfg.seeds) {
            SweepPoint p{method, cfg.train.beta, cfg.train.d_z, cfg.train.classifier_steps, 0.0,
                         seed, false};
            auto fields = point_axes(p);
            fields.emplace_back("experiment", cfg.experiment);
            fields.emplace_back("dataset", cfg.dataset.name);
            fields.emplace_back("rounds", std::to_string(cfg.rounds));
            fields.emplace_back("clients", std::to_string(cfg.clients));
            const std::string fp = results::fingerprint(fields);
            if (done.count(fp) != 0) continue;

            const auto start = std::chrono::steady_clock::now();
            audit::AuditReport report;
            if (method == "centralized") {
                trainer::TrainConfig tc = cfg.train;
                tc.seed = seed;
                trainer::TrainedModel model = trainer::train_gpp(bundle.train, tc);
                report = audit::run_audit(model, bundle.train, bundle.test, cfg.probe, {seed},
                                          cfg.sampled_release);
            } else {
                federated::FederatedConfig fc;
                fc.batch_size = cfg.train.batch_size;
                fc.classifier_steps = cfg.train.classifier_steps;
                fc.lr = cfg.train.lr;
                fc.rounds = cfg.rounds;
                fc.d_z = cfg.train.d_z;
                fc.encoder_hidden = cfg.train.encoder_hidden;
                fc.classifier_hidden = cfg.train.classifier_hidden;
                fc.seed = seed;
                fc.lambda = {cfg.train.lambda};
                if (method == "distributed-hetero-beta") {
                    Rng beta_rng(seed ^ 0xbe7au);
                    fc.beta.clear();
                    for (std::size_t m = 0; m < cfg.clients; ++m)
                        fc.beta.push_back(beta_rng.uniform(0.5, 1.5));
                } else {
                    fc.beta = {cfg.train.beta};
                }
                const auto shards =
                    data::partition_horizontal(bundle.train, cfg.clients, mode, seed);
                const auto test_shards =
                    data::partition_horizontal(bundle.test, cfg.clients, mode, seed);
                federated::ProtocolResult proto = federated::run_protocol(bundle.train, shards, fc);

                audit::AuditInputs inputs;
                std::vector<RealMatrix> ztr, zte;
                std::size_t train_rows = 0, test_rows = 0;
                for (std::size_t m = 0; m < proto.clients.size(); ++m) {
                    Rng release_rng(seed ^ (0xa0d17u + m));
                    auto [mu_tr, lv_tr] = encoder::encode(
                        proto.clients[m].enc, proto.clients[m].shard.x);
                    ztr.push_back(cfg.sampled_release
                                      ? encoder::reparameterize(mu_tr, lv_tr, release_rng).z
                                      : mu_tr);
                    train_rows += ztr.back().rows();
                    const data::LabeledDataset test_shard =
                        bundle.test.subset(test_shards[m].indices);
                    auto [mu_te, lv_te] = encoder::encode(proto.clients[m].enc, test_shard.x);
                    zte.push_back(cfg.sampled_release
                                      ? encoder::reparameterize(mu_te, lv_te, release_rng).z
                                      : mu_te);
                    test_rows += zte.back().rows();
                    inputs.u_train.insert(inputs.u_train.end(),
                                          proto.clients[m].shard.u[0].begin(),
                                          proto.clients[m].shard.u[0].end());
                    inputs.s_train.insert(inputs.s_train.end(),
                                          proto.clients[m].shard.s[0].begin(),
                                          proto.clients[m].shard.s[0].end());
                    inputs.u_test.insert(inputs.u_test.end(), test_shard.u[0].begin(),
                                         test_shard.u[0].end());
                    inputs.s_test.insert(inputs.s_test.end(), test_shard.s[0].begin(),
                                         test_shard.s[0].end());
                }
                inputs.z_train = RealMatrix(train_rows, cfg.train.d_z);
                inputs.z_test = RealMatrix(test_rows, cfg.train.d_z);
                std::size_t r0 = 0, r1 = 0;
                for (const auto& block : ztr)
                    for (std::size_t r = 0; r < block.rows(); ++r, ++r0)
                        std::copy(block.row(r), block.row(r) + block.cols(),
                                  inputs.z_train.row(r0));
                for (const auto& block : zte)
                    for (std::size_t r = 0; r < block.rows(); ++r, ++r1)
                        std::copy(block.row(r), block.row(r) + block.cols(),
                                  inputs.z_test.row(r1));
                inputs.u_classes = bundle.train.u_cardinality[0];
                inputs.s_classes = bundle.train.s_cardinality[0];
                report = audit::run_audit(inputs, cfg.probe, {seed});
            }
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            results::ResultRecord record = make_record(cfg, p, report, wall);
            record.fingerprint = fp;
            if (!cfg.out_path.empty())
                results::append_record(record, results::parse_format(cfg.format), cfg.out_path,
                                       experiment_fp);
            records.push_back(std::move(record));
        }
    }
    return records;
}

}  // namespace

std::vector<results::ResultRecord> run_experiment(const ExperimentConfig& raw_cfg) {
    ExperimentConfig cfg = raw_cfg;
    cfg.apply_experiment_defaults();
    if (cfg.experiment == "distributed") return run_distributed_experiment(cfg);

    // cross product of axes; absent axes contribute their configured default
    std::vector<SweepPoint> points;
    const std::vector<double> betas =
        cfg.beta_values.empty() ? std::vector<double>{cfg.train.beta} : cfg.beta_values;
    const std::vector<std::size_t> dzs =
        cfg.dz_values.empty() ? std::vector<std::size_t>{cfg.train.d_z} : cfg.dz_values;
    const std::vector<std::size_t> ks = cfg.k_values.empty()
                                            ? std::vector<std::size_t>{cfg.train.classifier_steps}
                                            : cfg.k_values;
    const bool uses_rho = !cfg.rho_values.empty();
    const std::vector<double> rhos = uses_rho ? cfg.rho_values : std::vector<double>{0.0};

    for (const std::string& method : cfg.methods)
        for (double beta : betas)
            for (std::size_t d_z : dzs)
                for (std::size_t k : ks)
                    for (double rho : rhos)
                        for (std::uint64_t seed : cfg.seeds)
                            points.push_back({method, beta, d_z, k, rho, seed, uses_rho});

    const results::Format format = results::parse_format(cfg.format);
    const std::set<std::string> done =
        cfg.out_path.empty() ? std::set<std::string>{}
                             : results::load_fingerprints(cfg.out_path, format);
    const std::string experiment_fp = results::fingerprint(cfg.fingerprint_fields());

    // one dataset per rho value; shared across methods and seeds
    std::map<double, DatasetBundle> bundles;
    for (double rho : rhos) {
        DatasetSpec spec = cfg.dataset;
        spec.rho = rho;
        bundles.emplace(rho, load_dataset(spec));
    }

    std::vector<results::ResultRecord> records(points.size());
    std::vector<bool> skipped(points.size(), false);
    std::mutex sink_mutex;
    std::atomic<std::size_t> next{0};
    const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);

    auto worker = [&]() {
#if defined(_OPENMP)
        if (jobs > 1) {
            const int hw = omp_get_num_procs();
            omp_set_num_threads(std::max(1, hw / static_cast<int>(jobs)));
        }
#endif
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= points.size()) break;
            const SweepPoint& p = points[i];
            auto fields = point_axes(p);
            fields.emplace_back("experiment", cfg.experiment);
            fields.emplace_back("dataset", cfg.dataset.name);
            fields.emplace_back("subsample", std::to_string(cfg.dataset.subsample));
            fields.emplace_back("epochs", std::to_string(cfg.train.epochs));
            const std::string fp = results::fingerprint(fields);
            if (done.count(fp) != 0) {
                skipped[i] = true;
                continue;
            }
            SinglePoint sp;
            sp.method = p.method;
            sp.train = cfg.train;
            sp.train.beta = p.beta;
            sp.train.d_z = p.d_z;
            sp.train.classifier_steps = p.k;
            sp.train.seed = p.seed;
            sp.probe = cfg.probe;
            sp.sampled_release = cfg.sampled_release;
            const auto start = std::chrono::steady_clock::now();
            const audit::AuditReport report = evaluate_point(sp, bundles.at(p.rho));
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            results::ResultRecord record = make_record(cfg, p, report, wall);
            record.fingerprint = fp;
            {
                std::lock_guard<std::mutex> lock(sink_mutex);
                if (!cfg.out_path.empty())
                    results::append_record(record, format, cfg.out_path, experiment_fp);
                records[i] = std::move(record);
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    std::vector<results::ResultRecord> out;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!skipped[i]) out.push_back(std::move(records[i]));
    return out;
}

}  // namespace gpp::experiments
