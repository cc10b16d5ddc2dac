#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gpp/audit.hpp"
#include "gpp/checkpoint.hpp"
#include "gpp/data.hpp"
#include "gpp/errors.hpp"
#include "gpp/experiments.hpp"
#include "gpp/federated.hpp"
#include "gpp/results.hpp"
#include "gpp/trainer.hpp"

namespace {

using namespace gpp;

struct CliOptions {
    std::string dataset = "synthetic";
    std::string method = "gpp";
    std::string data_dir;
    std::size_t subsample = 0;
    double rho = 0.0;
    double beta = 1.0;
    double lambda = 0.01;
    std::size_t d_z = 16;
    std::size_t k = 2;
    std::size_t epochs = 15;
    std::size_t batch = 64;
    double lr = 1e-3;
    double noise_scale = 0.5;
    std::vector<std::uint64_t> seeds = {1};
    std::size_t clients = 5;
    std::size_t rounds = 30;
    std::string out;
    std::string format = "jsonl";
    bool full = false;
    bool sampled = false;
    bool hetero_beta = false;
    std::size_t jobs = 1;
    std::string experiment = "baselines";
    std::string checkpoint_path;
    std::string resume_path;
};

experiments::DatasetSpec dataset_spec(const CliOptions& opt) {
    experiments::DatasetSpec spec;
    spec.name = opt.dataset;
    spec.subsample = opt.subsample;
    spec.rho = opt.rho;
    spec.data_dir = opt.data_dir;
    spec.full_scale = opt.full;
    return spec;
}

trainer::TrainConfig train_config(const CliOptions& opt) {
    trainer::TrainConfig cfg;
    cfg.batch_size = opt.batch;
    cfg.classifier_steps = opt.k;
    cfg.beta = opt.beta;
    cfg.lambda = opt.lambda;
    cfg.lr = opt.full ? 1e-4 : opt.lr;
    cfg.epochs = opt.full ? 50 : opt.epochs;
    cfg.seed = opt.seeds.front();
    cfg.d_z = opt.d_z;
    cfg.noise_scale = opt.noise_scale;
    if (opt.full) {
        cfg.encoder_hidden = {512, 256};
        cfg.classifier_hidden = {256, 128};
    } else {
        cfg.encoder_hidden = {256, 128};
        cfg.classifier_hidden = {128, 64};
    }
    return cfg;
}

audit::ProbeSpec probe_spec(const CliOptions& opt) {
    audit::ProbeSpec spec;  // defaults match the paper-scale audit protocol
    if (!opt.full) {
        spec.hidden = {128, 64};
        spec.epochs = 12;
        spec.lr = 1e-3;
    }
    return spec;
}

void print_report(const audit::AuditReport& report) {
    std::printf("utility_auc    %.4f +- %.4f\n", report.utility_auc, report.utility_auc_std);
    std::printf("adversary_auc  %.4f +- %.4f\n", report.adversary_auc, report.adversary_auc_std);
    std::printf("privacy_gap    %.4f\n", report.privacy_gap);
    std::printf("fano_error_lb  %.4f (H(S)=%.4f nats, I(Z;S) est %.4f)\n",
                report.fano_lower_bound_on_error, report.h_s, report.mi_zs_estimate);
    std::printf("probe          %s, reduction %s, release %s\n",
                report.config_fingerprint.c_str(), report.multiclass_reduction.c_str(),
                report.sampled_release ? "sampled" : "mean");
    for (const auto& w : report.warnings) std::printf("warning: %s\n", w.c_str());
}

int cmd_train(const CliOptions& opt) {
    const experiments::DatasetBundle bundle = experiments::load_dataset(dataset_spec(opt));
    std::printf("dataset %s (%s): %zu train / %zu test, d_x=%zu\n", opt.dataset.c_str(),
                bundle.provenance.c_str(), bundle.train.size(), bundle.test.size(),
                bundle.train.feature_dim());

    trainer::TrainedModel model;
    if (!opt.resume_path.empty()) {
        model = checkpoint::load_checkpoint(opt.resume_path);
        std::printf("resuming from %s (epochs done: %zu)\n", opt.resume_path.c_str(),
                    model.epochs_done);
        trainer::train_continue(model, bundle.train, opt.epochs);
    } else {
        const trainer::TrainConfig cfg = train_config(opt);
        if (opt.method == "gpp") {
            model = trainer::train_gpp(bundle.train, cfg);
        } else if (opt.method == "no-privacy") {
            model = trainer::train_no_privacy(bundle.train, cfg);
        } else if (opt.method == "noisy-encoder") {
            model = trainer::train_noisy_encoder(bundle.train, cfg, opt.noise_scale);
        } else {
            throw ConfigError("train: unknown method '" + opt.method + "'");
        }
    }
    if (!model.traces.encoder_loss.empty())
        std::printf("final encoder loss %.4f (utility CE %.4f, adversary CE %.4f, KL %.4f)\n",
                    model.traces.encoder_loss.back(), model.traces.utility_ce.back(),
                    model.traces.adversary_ce.back(), model.traces.kl.back());
    if (!opt.out.empty()) {
        checkpoint::save_checkpoint(model, opt.out);
        std::printf("checkpoint written to %s\n", opt.out.c_str());
    }
    return 0;
}

int cmd_audit(const CliOptions& opt) {
    if (opt.checkpoint_path.empty()) throw ConfigError("audit: --checkpoint is required");
    const trainer::TrainedModel model = checkpoint::load_checkpoint(opt.checkpoint_path);
    const experiments::DatasetBundle bundle = experiments::load_dataset(dataset_spec(opt));
    const audit::AuditReport report = audit::run_audit(model, bundle.train, bundle.test,
                                                       probe_spec(opt), opt.seeds, opt.sampled);
    print_report(report);
    if (!opt.out.empty()) {
        results::ResultRecord record;
        record.experiment = "audit";
        record.axes = {{"checkpoint", opt.checkpoint_path},
                       {"dataset", opt.dataset},
                       {"release", opt.sampled ? "sampled" : "mean"}};
        record.fingerprint = results::fingerprint(record.axes);
        record.utility_auc = report.utility_auc;
        record.adversary_auc = report.adversary_auc;
        record.privacy_gap = report.privacy_gap;
        results::append_record(record, results::parse_format(opt.format), opt.out,
                               record.fingerprint);
        std::printf("record appended to %s\n", opt.out.c_str());
    }
    return 0;
}

int cmd_experiment(const CliOptions& opt, const std::vector<double>& betas,
                   const std::vector<std::size_t>& dzs, const std::vector<std::size_t>& ks,
                   const std::vector<double>& rhos) {
    experiments::ExperimentConfig cfg;
    cfg.experiment = opt.experiment;
    cfg.dataset = dataset_spec(opt);
    cfg.train = train_config(opt);
    cfg.probe = probe_spec(opt);
    cfg.beta_values = betas;
    cfg.dz_values = dzs;
    cfg.k_values = ks;
    cfg.rho_values = rhos;
    cfg.seeds = opt.seeds;
    cfg.clients = opt.clients;
    cfg.rounds = opt.rounds;
    cfg.out_path = opt.out;
    cfg.format = opt.format;
    cfg.full_scale = opt.full;
    cfg.jobs = opt.jobs;
    const auto records = experiments::run_experiment(cfg);
    std::printf("%zu record(s) completed%s\n", records.size(),
                opt.out.empty() ? "" : (" -> " + opt.out).c_str());
    for (const auto& r : records) {
        std::string axes;
        for (const auto& [k2, v] : r.axes) axes += k2 + "=" + v + " ";
        std::printf("  %sutility=%.4f adversary=%.4f gap=%.4f\n", axes.c_str(), r.utility_auc,
                    r.adversary_auc, r.privacy_gap);
    }
    return 0;
}

int cmd_distributed(const CliOptions& opt) {
    experiments::ExperimentConfig cfg;
    cfg.experiment = "distributed";
    cfg.dataset = dataset_spec(opt);
    cfg.train = train_config(opt);
    cfg.probe = probe_spec(opt);
    cfg.seeds = opt.seeds;
    cfg.clients = opt.clients;
    cfg.rounds = opt.rounds;
    cfg.out_path = opt.out;
    cfg.format = opt.format;
    cfg.full_scale = opt.full;
    if (opt.hetero_beta) {
        cfg.methods = {"centralized", "distributed", "distributed-hetero-beta"};
    } else {
        cfg.methods = {"centralized", "distributed"};
    }
    const auto records = experiments::run_experiment(cfg);
    for (const auto& r : records) {
        std::string axes;
        for (const auto& [k2, v] : r.axes) axes += k2 + "=" + v + " ";
        std::printf("  %sutility=%.4f adversary=%.4f\n", axes.c_str(), r.utility_auc,
                    r.adversary_auc);
    }
    const federated::CommCost per_round =
        federated::comm_cost(opt.batch, opt.d_z, 1, sizeof(float));
    std::printf("uplink per client per round: %llu scalars, %llu bytes (payload)\n",
                static_cast<unsigned long long>(per_round.scalars),
                static_cast<unsigned long long>(per_round.bytes));
    return 0;
}

int cmd_data_gen(const CliOptions& opt) {
    if (opt.dataset == "synthetic") {
        if (opt.out.empty()) throw ConfigError("data gen: --out cache path required");
        const std::size_t n = opt.subsample != 0 ? opt.subsample : 12000;
        const data::LabeledDataset dataset =
            data::gen_correlated_synthetic(n, 64, opt.rho, opt.seeds.front());
        data::save_cache(dataset, opt.out);
        std::printf("synthetic dataset (n=%zu, rho=%.2f) cached to %s\n", n, opt.rho,
                    opt.out.c_str());
        return 0;
    }
    if (opt.dataset == "mnist-composite") {
        experiments::DatasetSpec spec = dataset_spec(opt);
        const experiments::DatasetBundle bundle = experiments::load_dataset(spec);
        std::printf("composite built from %s: %zu train / %zu test pairs\n",
                    bundle.provenance.c_str(), bundle.train.size(), bundle.test.size());
        if (!opt.out.empty()) {
            data::save_cache(bundle.train, opt.out + ".train");
            data::save_cache(bundle.test, opt.out + ".test");
            std::printf("caches written to %s.{train,test}\n", opt.out.c_str());
        }
        return 0;
    }
    throw ConfigError("data gen: dataset must be synthetic or mnist-composite");
}

int cmd_data_fetch_check(const CliOptions& opt) {
    const std::string dir = experiments::resolve_data_dir(opt.data_dir);
    std::printf("data dir: %s\n", dir.c_str());
    auto check = [&](const std::string& name) {
        const bool ok = std::filesystem::exists(dir + "/" + name);
        std::printf("  %-38s %s\n", name.c_str(), ok ? "found" : "MISSING");
        return ok;
    };
    bool all = true;
    if (opt.dataset == "mnist-composite") {
        all &= check("train-images-idx3-ubyte");
        all &= check("train-labels-idx1-ubyte");
        all &= check("t10k-images-idx3-ubyte");
        all &= check("t10k-labels-idx1-ubyte");
        if (!all)
            std::printf(
                "Place the four MNIST IDX files (uncompressed) in the data dir, e.g.\n"
                "  curl -O https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz\n"
                "  gunzip *.gz\n"
                "Without them, mnist-composite falls back to generated surrogate digits.\n");
        return 0;  // surrogate fallback exists, absence is not an error
    }
    if (opt.dataset == "hapt") {
        all &= check("hapt_train.csv");
        all &= check("hapt_test.csv");
        if (!all) {
            std::printf(
                "Fetch the HAPT dataset from the UCI Machine Learning Repository and export\n"
                "hapt_train.csv / hapt_test.csv (header row, 561 feature columns, then an\n"
                "activity column and a subject column). See README for the exact recipe.\n");
            return 3;
        }
        return 0;
    }
    if (opt.dataset == "synthetic") {
        std::printf("synthetic data is generated on demand; nothing to fetch\n");
        return 0;
    }
    throw ConfigError("fetch-check: unknown dataset '" + opt.dataset + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gpp: privacy-preserving data release - training, audit, experiments"};
    app.set_config("--config", "", "flat key=value config file; command-line flags win");
    app.require_subcommand(1);

    CliOptions opt;
    std::vector<double> betas, rhos;
    std::vector<std::size_t> dzs, ks;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--dataset", opt.dataset,
                        "mnist-composite | hapt | synthetic");
        cmd->add_option("--data-dir", opt.data_dir, "dataset directory (default $GPP_DATA_DIR)");
        cmd->add_option("--subsample", opt.subsample, "cap on train samples (0 = all)");
        cmd->add_option("--rho", opt.rho, "utility/sensitive correlation (synthetic)");
        cmd->add_option("--beta", opt.beta, "utility weight in the encoder objective");
        cmd->add_option("--lambda", opt.lambda, "KL regularization weight");
        cmd->add_option("--dz", opt.d_z, "bottleneck dimension");
        cmd->add_option("--k", opt.k, "classifier steps per encoder step");
        cmd->add_option("--epochs", opt.epochs, "training epochs");
        cmd->add_option("--batch", opt.batch, "mini-batch size");
        cmd->add_option("--lr", opt.lr, "learning rate (desk scale; --full pins 1e-4)");
        cmd->add_option("--noise-scale", opt.noise_scale, "noisy-encoder noise scale");
        cmd->add_option("--seed,--seeds", opt.seeds, "seed list")->delimiter(',');
        cmd->add_option("--out", opt.out, "output path (checkpoint or results sink)");
        cmd->add_option("--format", opt.format, "results format: jsonl | csv");
        cmd->add_flag("--full", opt.full, "paper-scale settings instead of desk scale");
        cmd->add_flag("--sampled", opt.sampled, "audit sampled z instead of the mean latent");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train one model and checkpoint it");
    add_common(train_cmd);
    train_cmd->add_option("--method", opt.method,
                          "gpp | no-privacy | noisy-encoder");
    train_cmd->add_option("--resume", opt.resume_path, "checkpoint to resume from");

    CLI::App* audit_cmd = app.add_subcommand("audit", "probe-audit a checkpointed model");
    add_common(audit_cmd);
    audit_cmd->add_option("--checkpoint", opt.checkpoint_path, "model checkpoint")->required();

    CLI::App* exp_cmd = app.add_subcommand("experiment", "run a sweep and append records");
    add_common(exp_cmd);
    exp_cmd->add_option("--experiment", opt.experiment,
                        "baselines | beta-sweep | dz-sweep | k-ablation | rho-robustness | "
                        "seed-stats | distributed")
        ->required();
    exp_cmd->add_option("--betas", betas, "beta sweep values")->delimiter(',');
    exp_cmd->add_option("--dzs", dzs, "d_z sweep values")->delimiter(',');
    exp_cmd->add_option("--ks", ks, "k sweep values")->delimiter(',');
    exp_cmd->add_option("--rhos", rhos, "rho sweep values")->delimiter(',');
    exp_cmd->add_option("--jobs", opt.jobs, "worker pool size for sweep points");
    exp_cmd->add_option("--clients", opt.clients, "client count (distributed)");
    exp_cmd->add_option("--rounds", opt.rounds, "communication rounds (distributed)");

    CLI::App* dist_cmd = app.add_subcommand("distributed", "multi-client protocol evaluation");
    add_common(dist_cmd);
    dist_cmd->add_option("--clients", opt.clients, "number of clients");
    dist_cmd->add_option("--rounds", opt.rounds, "communication rounds");
    dist_cmd->add_flag("--hetero-beta", opt.hetero_beta, "include the heterogeneous-beta arm");

    CLI::App* data_cmd = app.add_subcommand("data", "dataset utilities");
    data_cmd->require_subcommand(1);
    CLI::App* gen_cmd = data_cmd->add_subcommand("gen", "generate/cache a dataset");
    add_common(gen_cmd);
    CLI::App* fetch_cmd = data_cmd->add_subcommand("fetch-check",
                                                   "verify dataset files are in place");
    add_common(fetch_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(opt);
        if (audit_cmd->parsed()) return cmd_audit(opt);
        if (exp_cmd->parsed()) return cmd_experiment(opt, betas, dzs, ks, rhos);
        if (dist_cmd->parsed()) return cmd_distributed(opt);
        if (data_cmd->parsed()) {
            if (gen_cmd->parsed()) return cmd_data_gen(opt);
            if (fetch_cmd->parsed()) return cmd_data_fetch_check(opt);
        }
        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DomainError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const ProtocolError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    }
}
