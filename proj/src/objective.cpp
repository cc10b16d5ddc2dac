#include "gpp/objective.hpp"

#include <cmath>
#include <string>

#include "gpp/errors.hpp"

namespace gpp::objective {

namespace {

constexpr double kProbFloor = 1e-12;

double clamped_log(double p) { return std::log(std::min(std::max(p, kProbFloor), 1.0)); }

ClassifierLossResult classifier_loss(const RealMatrix& z, const std::vector<int>& labels,
                                     const nn::DenseNet& classifier) {
    const nn::ForwardTrace trace = nn::forward_trace(classifier, z);
    const nn::CrossEntropyResult ce = nn::cross_entropy(trace.output(), labels);
    auto [grads, z_grad] = nn::backward(classifier, z, trace, ce.logit_grad);
    return {ce.loss, std::move(grads), std::move(z_grad)};
}

}  // namespace

void GppLossConfig::validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta))
        throw ConfigError("GppLossConfig: beta must be finite and >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ConfigError("GppLossConfig: lambda must be finite and >= 0");
}

ClassifierLossResult utility_classifier_loss(const RealMatrix& z, const std::vector<int>& labels,
                                             const nn::DenseNet& classifier) {
    return classifier_loss(z, labels, classifier);
}

ClassifierLossResult adversary_classifier_loss(const RealMatrix& z,
                                               const std::vector<int>& labels,
                                               const nn::DenseNet& classifier) {
    return classifier_loss(z, labels, classifier);
}

EncoderLossResult encoder_loss(const encoder::LatentSample& sample,
                               const std::vector<std::vector<int>>& u_labels,
                               const std::vector<std::vector<int>>& s_labels,
                               const std::vector<nn::DenseNet>& utility_classifiers,
                               const std::vector<nn::DenseNet>& adversary_classifiers,
                               const GppLossConfig& cfg) {
    cfg.validate();
    if (u_labels.size() != utility_classifiers.size())
        throw ShapeError("encoder_loss: utility attribute/classifier count mismatch");
    if (s_labels.size() != adversary_classifiers.size())
        throw ShapeError("encoder_loss: sensitive attribute/classifier count mismatch");

    RealMatrix z_grad(sample.z.rows(), sample.z.cols(), 0.0);
    EncoderLossResult result;

    for (std::size_t j = 0; j < utility_classifiers.size(); ++j) {
        ClassifierLossResult term =
            classifier_loss(sample.z, u_labels[j], utility_classifiers[j]);
        result.utility_ce += term.loss;
        for (std::size_t i = 0; i < z_grad.size(); ++i)
            z_grad.values()[i] += cfg.beta * term.z_grad.values()[i];
    }
    for (std::size_t j = 0; j < adversary_classifiers.size(); ++j) {
        ClassifierLossResult term =
            classifier_loss(sample.z, s_labels[j], adversary_classifiers[j]);
        result.adversary_ce += term.loss;
        for (std::size_t i = 0; i < z_grad.size(); ++i)
            z_grad.values()[i] -= term.z_grad.values()[i];
    }

    auto [mu_grad, logvar_grad] = encoder::pathwise_grads(sample, z_grad);
    result.mu_grad = std::move(mu_grad);
    result.logvar_grad = std::move(logvar_grad);

    const encoder::KlResult kl = encoder::kl_divergence(sample.mu, sample.logvar);
    result.kl = kl.kl;
    if (cfg.lambda != 0.0) {
        for (std::size_t i = 0; i < result.mu_grad.size(); ++i) {
            result.mu_grad.values()[i] += cfg.lambda * kl.mu_grad.values()[i];
            result.logvar_grad.values()[i] += cfg.lambda * kl.logvar_grad.values()[i];
        }
    }

    result.loss = cfg.beta * result.utility_ce - result.adversary_ce + cfg.lambda * result.kl;
    return result;
}

void DiscreteJoint::validate() const {
    if (n_z == 0 || n_s == 0 || p.size() != n_z * n_s)
        throw DomainError("DiscreteJoint: bad table dimensions");
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw DomainError("DiscreteJoint: negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw DomainError("DiscreteJoint: entries sum to " + std::to_string(sum));
}

std::vector<double> DiscreteJoint::marginal_z() const {
    std::vector<double> mz(n_z, 0.0);
    for (std::size_t z = 0; z < n_z; ++z)
        for (std::size_t s = 0; s < n_s; ++s) mz[z] += at(z, s);
    return mz;
}

std::vector<double> DiscreteJoint::marginal_s() const {
    std::vector<double> ms(n_s, 0.0);
    for (std::size_t z = 0; z < n_z; ++z)
        for (std::size_t s = 0; s < n_s; ++s) ms[s] += at(z, s);
    return ms;
}

MiResult exact_mi_discrete(const DiscreteJoint& joint) {
    joint.validate();
    const std::vector<double> mz = joint.marginal_z();
    const std::vector<double> ms = joint.marginal_s();

    MiResult result;
    for (double p_s : ms) {
        if (p_s > 0.0) result.h_s -= p_s * std::log(p_s);
    }
    for (std::size_t z = 0; z < joint.n_z; ++z) {
        for (std::size_t s = 0; s < joint.n_s; ++s) {
            const double p_zs = joint.at(z, s);
            if (p_zs <= 0.0) continue;
            result.h_s_given_z -= p_zs * std::log(p_zs / mz[z]);
            result.mi += p_zs * std::log(p_zs / (mz[z] * ms[s]));
        }
    }
    // exact enumeration can land a hair below zero in floating point
    if (result.mi < 0.0) {
        if (result.mi < -1e-12) throw NumericError("exact_mi_discrete: MI < 0");
        result.mi = 0.0;
    }
    return result;
}

double mi_lower_bound_estimate(const std::vector<int>& z_cells, const std::vector<int>& s_labels,
                               const RealMatrix& q, double h_s) {
    if (z_cells.empty()) throw DomainError("mi_lower_bound_estimate: empty sample");
    if (z_cells.size() != s_labels.size())
        throw ShapeError("mi_lower_bound_estimate: sample length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < z_cells.size(); ++i) {
        const int z = z_cells[i];
        const int s = s_labels[i];
        if (z < 0 || static_cast<std::size_t>(z) >= q.rows() || s < 0 ||
            static_cast<std::size_t>(s) >= q.cols())
            throw DomainError("mi_lower_bound_estimate: sample index out of range");
        acc += clamped_log(q(static_cast<std::size_t>(z), static_cast<std::size_t>(s)));
    }
    return h_s + acc / static_cast<double>(z_cells.size());
}

double cond_entropy_upper_bound_estimate(const std::vector<int>& z_cells,
                                         const std::vector<int>& u_labels,
                                         const RealMatrix& q) {
    if (z_cells.empty()) throw DomainError("cond_entropy_upper_bound_estimate: empty sample");
    if (z_cells.size() != u_labels.size())
        throw ShapeError("cond_entropy_upper_bound_estimate: sample length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < z_cells.size(); ++i) {
        const int z = z_cells[i];
        const int u = u_labels[i];
        if (z < 0 || static_cast<std::size_t>(z) >= q.rows() || u < 0 ||
            static_cast<std::size_t>(u) >= q.cols())
            throw DomainError("cond_entropy_upper_bound_estimate: sample index out of range");
        acc -= clamped_log(q(static_cast<std::size_t>(z), static_cast<std::size_t>(u)));
    }
    return acc / static_cast<double>(z_cells.size());
}

}  // namespace gpp::objective
