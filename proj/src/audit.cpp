#include "gpp/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gpp/errors.hpp"

namespace gpp::audit {

namespace {

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

std::string ProbeSpec::fingerprint() const {
    std::ostringstream os;
    os << "mlp";
    for (std::size_t w : hidden) os << "-" << w;
    os << ";relu;epochs=" << epochs << ";lr=" << lr << ";batch=" << batch_size;
    return os.str();
}

void ProbeSpec::validate() const {
    if (hidden.empty()) throw ConfigError("ProbeSpec: need at least one hidden layer");
    if (epochs < 1 || batch_size < 1 || !(lr > 0.0)) throw ConfigError("ProbeSpec: bad settings");
}

nn::DenseNet train_probe(const RealMatrix& z_train, const std::vector<int>& labels,
                         int num_classes, const ProbeSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (z_train.rows() != labels.size())
        throw ShapeError("train_probe: representation/label count mismatch");
    for (int v : labels)
        if (v < 0 || v >= num_classes)
            throw DataError("train_probe: label outside the stated cardinality");

    Rng rng(seed);
    nn::DenseNet probe = nn::make_mlp(z_train.cols(), spec.hidden,
                                      static_cast<std::size_t>(num_classes),
                                      nn::Activation::kSoftmax);
    nn::init_xavier(probe, rng);
    nn::AdamState adam = nn::AdamState::like(probe);

    const std::size_t n = z_train.rows();
    const std::size_t batch = std::min(spec.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start + batch <= n; start += batch) {
            RealMatrix zb(batch, z_train.cols());
            std::vector<int> lb(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                const std::size_t src = order[start + i];
                std::copy(z_train.row(src), z_train.row(src) + z_train.cols(), zb.row(i));
                lb[i] = labels[src];
            }
            const nn::ForwardTrace trace = nn::forward_trace(probe, zb);
            const nn::CrossEntropyResult ce = nn::cross_entropy(trace.output(), lb);
            auto [grads, zgrad] = nn::backward(probe, zb, trace, ce.logit_grad);
            (void)zgrad;
            nn::adam_step(probe, grads, adam, spec.lr);
        }
    }
    return probe;
}

double binary_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("binary_auc: length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int label : labels) {
        if (label == 1)
            ++n_pos;
        else if (label == 0)
            ++n_neg;
        else
            throw DomainError("binary_auc: labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0)
        throw DomainError("binary_auc: undefined, both classes must be present");

    // rank-based Mann-Whitney with average ranks over ties
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u_stat =
        rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u_stat / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double macro_auc(const RealMatrix& class_scores, const std::vector<int>& labels,
                 std::vector<std::string>* warnings) {
    if (class_scores.rows() != labels.size()) throw ShapeError("macro_auc: length mismatch");
    if (class_scores.cols() < 2) throw DomainError("macro_auc: need >= 2 classes");
    std::vector<std::size_t> present(class_scores.cols(), 0);
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= class_scores.cols())
            throw DomainError("macro_auc: label out of range");
        ++present[static_cast<std::size_t>(label)];
    }
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < class_scores.cols(); ++c) {
        if (present[c] == 0 || present[c] == labels.size()) {
            if (warnings)
                warnings->push_back("macro_auc: class " + std::to_string(c) +
                                    " absent from labels, skipped");
            continue;
        }
        std::vector<double> scores(labels.size());
        std::vector<int> ovr(labels.size());
        for (std::size_t r = 0; r < labels.size(); ++r) {
            scores[r] = class_scores(r, c);
            ovr[r] = labels[r] == static_cast<int>(c) ? 1 : 0;
        }
        total += binary_auc(scores, ovr);
        ++used;
    }
    if (used < 2) throw DomainError("macro_auc: fewer than 2 classes present");
    return total / static_cast<double>(used);
}

double fano_error_bound(double h_s, double i_zs, std::size_t num_classes) {
    if (num_classes < 2) throw DomainError("fano_error_bound: need >= 2 classes");
    if (!(h_s >= 0.0) || !(i_zs >= 0.0))
        throw DomainError("fano_error_bound: entropies must be nonnegative");
    const double bound = (h_s - i_zs - 1.0) / std::log(static_cast<double>(num_classes));
    return std::min(std::max(bound, 0.0), 1.0);
}

double empirical_entropy(const std::vector<int>& labels, int num_classes) {
    if (labels.empty()) throw DomainError("empirical_entropy: empty labels");
    std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
    for (int v : labels) {
        if (v < 0 || v >= num_classes) throw DomainError("empirical_entropy: label out of range");
        counts[static_cast<std::size_t>(v)] += 1.0;
    }
    const double n = static_cast<double>(labels.size());
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) h -= (c / n) * std::log(c / n);
    }
    return h;
}

AuditReport run_audit(const AuditInputs& inputs, const ProbeSpec& spec,
                      const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("run_audit: need at least one seed");
    if (inputs.u_train.size() != inputs.z_train.rows() ||
        inputs.s_train.size() != inputs.z_train.rows())
        throw DataError("run_audit: missing train labels");
    if (inputs.u_test.size() != inputs.z_test.rows() ||
        inputs.s_test.size() != inputs.z_test.rows())
        throw DataError("run_audit: missing test labels");

    AuditReport report;
    report.config_fingerprint = spec.fingerprint();
    std::vector<double> util_aucs, adv_aucs, adv_ces;
    for (std::uint64_t seed : seeds) {
        const nn::DenseNet utility_probe =
            train_probe(inputs.z_train, inputs.u_train, inputs.u_classes, spec, seed);
        const nn::DenseNet adversary_probe =
            train_probe(inputs.z_train, inputs.s_train, inputs.s_classes, spec, seed ^ 0x9e3779b9u);

        const RealMatrix u_scores = nn::forward(utility_probe, inputs.z_test);
        const RealMatrix s_scores = nn::forward(adversary_probe, inputs.z_test);

        double u_auc;
        if (inputs.u_classes == 2) {
            std::vector<double> pos(u_scores.rows());
            for (std::size_t r = 0; r < u_scores.rows(); ++r) pos[r] = u_scores(r, 1);
            u_auc = binary_auc(pos, inputs.u_test);
        } else {
            u_auc = macro_auc(u_scores, inputs.u_test, &report.warnings);
        }
        double s_auc;
        if (inputs.s_classes == 2) {
            std::vector<double> pos(s_scores.rows());
            for (std::size_t r = 0; r < s_scores.rows(); ++r) pos[r] = s_scores(r, 1);
            s_auc = binary_auc(pos, inputs.s_test);
        } else {
            s_auc = macro_auc(s_scores, inputs.s_test, &report.warnings);
        }
        util_aucs.push_back(u_auc);
        adv_aucs.push_back(s_auc);
        adv_ces.push_back(nn::cross_entropy(s_scores, inputs.s_test).loss);
        report.per_seed.push_back({seed, u_auc, s_auc});
    }
    report.utility_auc = mean_of(util_aucs);
    report.adversary_auc = mean_of(adv_aucs);
    report.utility_auc_std = std_of(util_aucs, report.utility_auc);
    report.adversary_auc_std = std_of(adv_aucs, report.adversary_auc);
    report.privacy_gap = std::abs(report.adversary_auc - 0.5);

    report.h_s = empirical_entropy(inputs.s_test, inputs.s_classes);
    // Variational plug-in: I(Z;S) >= H(S) - CE of the probe on held-out data.
    report.mi_zs_estimate = std::max(0.0, report.h_s - mean_of(adv_ces));
    report.fano_lower_bound_on_error =
        fano_error_bound(report.h_s, report.mi_zs_estimate,
                         static_cast<std::size_t>(inputs.s_classes));
    return report;
}

AuditReport run_audit(const trainer::TrainedModel& model, const data::LabeledDataset& train,
                      const data::LabeledDataset& test, const ProbeSpec& spec,
                      const std::vector<std::uint64_t>& seeds, bool sampled_release) {
    if (train.u.empty() || train.s.empty())
        throw DataError("run_audit: dataset lacks utility or sensitive labels");
    AuditInputs inputs;
    Rng release_rng(model.config.seed ^ 0xa0d17u);
    inputs.z_train = trainer::release_representations(model, train.x, sampled_release,
                                                      &release_rng);
    inputs.z_test = trainer::release_representations(model, test.x, sampled_release,
                                                     &release_rng);
    inputs.u_train = train.u[0];
    inputs.s_train = train.s[0];
    inputs.u_test = test.u[0];
    inputs.s_test = test.s[0];
    inputs.u_classes = train.u_cardinality[0];
    inputs.s_classes = train.s_cardinality[0];
    AuditReport report = run_audit(inputs, spec, seeds);
    report.sampled_release = sampled_release;
    return report;
}

}  // namespace gpp::audit
