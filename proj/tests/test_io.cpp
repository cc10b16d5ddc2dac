#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gpp/checkpoint.hpp"
#include "gpp/experiments.hpp"
#include "gpp/results.hpp"
#include "gpp/trainer.hpp"

using namespace gpp;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

data::LabeledDataset quick_dataset(std::size_t n, std::uint64_t seed) {
    return data::gen_correlated_synthetic(n, 16, 0.3, seed);
}

trainer::TrainConfig quick_config(std::uint64_t seed, std::size_t epochs) {
    trainer::TrainConfig cfg;
    cfg.batch_size = 25;
    cfg.classifier_steps = 1;
    cfg.lr = 1e-3;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.d_z = 4;
    cfg.encoder_hidden = {12, 8};
    cfg.classifier_hidden = {8};
    return cfg;
}

bool adam_equal(const nn::AdamState& a, const nn::AdamState& b) {
    if (a.step != b.step || a.m.size() != b.m.size()) return false;
    for (std::size_t i = 0; i < a.m.size(); ++i)
        if (!(a.m[i] == b.m[i]) || !(a.v[i] == b.v[i])) return false;
    return true;
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise") {
    const data::LabeledDataset dataset = quick_dataset(300, 131);
    const trainer::TrainedModel model = trainer::train_gpp(dataset, quick_config(3, 2));

    const std::string path = temp_path("gpp_test_ckpt.bin");
    checkpoint::save_checkpoint(model, path);
    const trainer::TrainedModel back = checkpoint::load_checkpoint(path);

    CHECK(back.kind == model.kind);
    CHECK(back.epochs_done == model.epochs_done);
    CHECK(back.enc == model.enc);
    REQUIRE(back.utility_classifiers.size() == model.utility_classifiers.size());
    CHECK(back.utility_classifiers[0] == model.utility_classifiers[0]);
    CHECK(back.adversary_classifiers[0] == model.adversary_classifiers[0]);
    CHECK(adam_equal(back.encoder_adam, model.encoder_adam));
    CHECK(adam_equal(back.utility_adam[0], model.utility_adam[0]));
    CHECK(adam_equal(back.adversary_adam[0], model.adversary_adam[0]));
    CHECK(back.rng.state() == model.rng.state());
    CHECK(back.config.seed == model.config.seed);
    CHECK(back.config.encoder_hidden == model.config.encoder_hidden);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects corruption without returning a partial model") {
    const data::LabeledDataset dataset = quick_dataset(200, 132);
    const trainer::TrainedModel model = trainer::train_gpp(dataset, quick_config(4, 1));
    const std::string path = temp_path("gpp_test_ckpt_bad.bin");
    checkpoint::save_checkpoint(model, path);

    // truncate
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_AS(checkpoint::load_checkpoint(path), DataError);

    // bad magic
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "NOPE" << std::string(64, '\0');
    }
    CHECK_THROWS_AS(checkpoint::load_checkpoint(path), DataError);
    CHECK_THROWS_AS(checkpoint::load_checkpoint(temp_path("gpp_does_not_exist.bin")),
                    DataError);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted trajectory bitwise") {
    const data::LabeledDataset dataset = quick_dataset(400, 133);

    const trainer::TrainedModel straight = trainer::train_gpp(dataset, quick_config(5, 6));

    trainer::TrainedModel half = trainer::train_gpp(dataset, quick_config(5, 3));
    const std::string path = temp_path("gpp_test_ckpt_resume.bin");
    checkpoint::save_checkpoint(half, path);
    trainer::TrainedModel resumed = checkpoint::load_checkpoint(path);
    trainer::train_continue(resumed, dataset, 3);

    CHECK(resumed.epochs_done == straight.epochs_done);
    CHECK(resumed.enc == straight.enc);
    CHECK(resumed.utility_classifiers[0] == straight.utility_classifiers[0]);
    CHECK(resumed.adversary_classifiers[0] == straight.adversary_classifiers[0]);
    CHECK(resumed.rng.state() == straight.rng.state());
    CHECK(adam_equal(resumed.encoder_adam, straight.encoder_adam));
    std::filesystem::remove(path);
}

TEST_CASE("fingerprints are stable and distinct across the sweep grid") {
    const std::string a = results::fingerprint({{"method", "gpp"}, {"beta", "1.0"}});
    const std::string b = results::fingerprint({{"method", "gpp"}, {"beta", "1.0"}});
    CHECK(a == b);

    std::set<std::string> seen;
    for (const char* method : {"gpp", "no-privacy", "noisy-encoder"})
        for (const char* beta : {"0.1", "1.0", "8.0"})
            for (const char* dz : {"40", "120"})
                for (int seed = 1; seed <= 10; ++seed)
                    seen.insert(results::fingerprint({{"method", method},
                                                      {"beta", beta},
                                                      {"dz", dz},
                                                      {"seed", std::to_string(seed)}}));
    CHECK(seen.size() == 3u * 3u * 2u * 10u);
}

TEST_CASE("emit_results writes one record per line in both formats") {
    results::ResultRecord record;
    record.fingerprint = "00ff";
    record.experiment = "beta-sweep";
    record.axes = {{"beta", "1"}, {"seed", "3"}};
    record.utility_auc = 0.9123456789;
    record.adversary_auc = 0.512345;
    record.privacy_gap = 0.012345;
    record.wall_time_s = 12.75;

    std::ostringstream jsonl;
    results::emit_results({record, record}, results::Format::kJsonLines, jsonl, "cafe");
    std::istringstream lines(jsonl.str());
    std::string line;
    REQUIRE(std::getline(lines, line));
    const auto header = nlohmann::json::parse(line);
    CHECK(header["artifact_version"] == results::kArtifactVersion);
    CHECK(header["config_fingerprint"] == "cafe");
    int rows = 0;
    while (std::getline(lines, line)) {
        const auto parsed = nlohmann::json::parse(line);
        CHECK(parsed["fingerprint"] == "00ff");
        CHECK(parsed["utility_auc"] == "0.912346");  // six significant digits
        ++rows;
    }
    CHECK(rows == 2);

    std::ostringstream csv;
    results::emit_results({record}, results::Format::kCsv, csv, "cafe");
    const std::string text = csv.str();
    CHECK(text.find("# artifact_version=") == 0);
    CHECK(text.find("0.912346") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);  // meta + header + 1 record
}

TEST_CASE("append_record and load_fingerprints round trip in both formats") {
    for (const auto format : {results::Format::kJsonLines, results::Format::kCsv}) {
        const std::string path = temp_path("gpp_test_results.out");
        std::filesystem::remove(path);
        results::ResultRecord record;
        record.fingerprint = "aa11";
        record.experiment = "baselines";
        record.utility_auc = 0.5;
        results::append_record(record, format, path, "sweepfp");
        record.fingerprint = "bb22";
        results::append_record(record, format, path, "sweepfp");

        const auto seen = results::load_fingerprints(path, format);
        CHECK(seen.count("aa11") == 1);
        CHECK(seen.count("bb22") == 1);
        CHECK(seen.size() == 2);
        std::filesystem::remove(path);
    }
}

TEST_CASE("run_experiment is idempotent over completed fingerprints") {
    experiments::ExperimentConfig cfg;
    cfg.experiment = "baselines";
    cfg.dataset.name = "synthetic";
    cfg.dataset.subsample = 400;
    cfg.train = quick_config(6, 1);
    cfg.probe.hidden = {8};
    cfg.probe.epochs = 2;
    cfg.probe.lr = 1e-2;
    cfg.methods = {"gpp", "random-projection"};
    cfg.seeds = {1};
    cfg.out_path = temp_path("gpp_test_experiment.jsonl");
    std::filesystem::remove(cfg.out_path);

    const auto first = experiments::run_experiment(cfg);
    CHECK(first.size() == 2);
    const auto second = experiments::run_experiment(cfg);
    CHECK(second.empty());

    // all metric fields reproduce when rerun into a fresh sink
    experiments::ExperimentConfig cfg2 = cfg;
    cfg2.out_path = temp_path("gpp_test_experiment2.jsonl");
    std::filesystem::remove(cfg2.out_path);
    const auto rerun = experiments::run_experiment(cfg2);
    REQUIRE(rerun.size() == first.size());
    for (std::size_t i = 0; i < rerun.size(); ++i) {
        CHECK(rerun[i].fingerprint == first[i].fingerprint);
        CHECK(rerun[i].utility_auc == first[i].utility_auc);
        CHECK(rerun[i].adversary_auc == first[i].adversary_auc);
    }
    std::filesystem::remove(cfg.out_path);
    std::filesystem::remove(cfg2.out_path);
}

TEST_CASE("synthetic dataset loader honors subsample and rho") {
    experiments::DatasetSpec spec;
    spec.name = "synthetic";
    spec.subsample = 600;
    spec.rho = 0.8;
    const experiments::DatasetBundle bundle = experiments::load_dataset(spec);
    CHECK(bundle.provenance == "synthetic");
    CHECK(bundle.train.size() == 600);
    CHECK(bundle.test.size() > 100);

    experiments::DatasetSpec bad = spec;
    bad.name = "nope";
    CHECK_THROWS_AS(experiments::load_dataset(bad), ConfigError);
}

TEST_CASE("mnist-composite loader falls back to surrogate idx files") {
    const std::string dir = temp_path("gpp_test_datadir");
    std::filesystem::remove_all(dir);
    experiments::DatasetSpec spec;
    spec.name = "mnist-composite";
    spec.data_dir = dir;
    spec.subsample = 500;
    const experiments::DatasetBundle bundle = experiments::load_dataset(spec);
    CHECK(bundle.provenance == "surrogate-idx");
    CHECK(bundle.train.size() == 500);
    CHECK(bundle.train.feature_dim() == 1568);
    CHECK(bundle.train.u_cardinality[0] == 19);
    CHECK(std::filesystem::exists(dir + "/surrogate-train-images-idx3-ubyte"));

    // second load parses the same files rather than regenerating
    const experiments::DatasetBundle again = experiments::load_dataset(spec);
    CHECK(again.train.x == bundle.train.x);
    std::filesystem::remove_all(dir);
}

TEST_CASE("hapt loader reports fetch instructions when files are absent") {
    experiments::DatasetSpec spec;
    spec.name = "hapt";
    spec.data_dir = temp_path("gpp_test_no_hapt");
    CHECK_THROWS_WITH_AS(experiments::load_dataset(spec), doctest::Contains("UCI"), DataError);
}
