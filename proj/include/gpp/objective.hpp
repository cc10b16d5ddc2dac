#pragma once

#include <cstddef>
#include <vector>

#include "gpp/encoder.hpp"
#include "gpp/matrix.hpp"
#include "gpp/nn.hpp"

namespace gpp::objective {

struct GppLossConfig {
    double beta = 1.0;     // utility weight
    double lambda = 0.01;  // KL weight

    void validate() const;
};

struct ClassifierLossResult {
    double loss = 0.0;
    nn::GradientSet classifier_grads;
    RealMatrix z_grad;  // enables encoder backprop
};

// Cross-entropy of one per-attribute classifier on latent inputs. Utility
// and adversary classifiers share this computation; the sign difference
// lives in encoder_loss.
ClassifierLossResult utility_classifier_loss(const RealMatrix& z, const std::vector<int>& labels,
                                             const nn::DenseNet& classifier);
ClassifierLossResult adversary_classifier_loss(const RealMatrix& z,
                                               const std::vector<int>& labels,
                                               const nn::DenseNet& classifier);

struct EncoderLossResult {
    double loss = 0.0;          // beta * sum_j CE(u_j) - sum_j CE(s_j) + lambda * KL
    double utility_ce = 0.0;    // sum over utility attributes
    double adversary_ce = 0.0;  // sum over sensitive attributes
    double kl = 0.0;
    RealMatrix mu_grad;
    RealMatrix logvar_grad;
};

// Saddle objective seen by the encoder, with all classifiers frozen. The
// gradient reaches (mu, logvar) through the retained epsilon (pathwise
// estimator); the adversary CE enters with negative sign.
EncoderLossResult encoder_loss(const encoder::LatentSample& sample,
                               const std::vector<std::vector<int>>& u_labels,
                               const std::vector<std::vector<int>>& s_labels,
                               const std::vector<nn::DenseNet>& utility_classifiers,
                               const std::vector<nn::DenseNet>& adversary_classifiers,
                               const GppLossConfig& cfg);

// Joint probability table over (Z-cell, S-class) pairs; the exact-MI oracle
// domain for validating the variational bounds on small discrete instances.
struct DiscreteJoint {
    std::size_t n_z = 0;
    std::size_t n_s = 0;
    std::vector<double> p;  // row-major [z][s], entries >= 0, sum 1

    double at(std::size_t z, std::size_t s) const { return p[z * n_s + s]; }
    void validate() const;
    std::vector<double> marginal_z() const;
    std::vector<double> marginal_s() const;
};

struct MiResult {
    double mi = 0.0;         // I(Z;S), nats
    double h_s = 0.0;        // H(S)
    double h_s_given_z = 0.0;  // H(S|Z)
};

// Exact enumeration over the table. All entropies in nats.
MiResult exact_mi_discrete(const DiscreteJoint& joint);

// Plug-in estimate of H(S) + E[log Q(S|Z)] on an empirical sample.
// q rows are conditionals Q(s | z-cell).
double mi_lower_bound_estimate(const std::vector<int>& z_cells, const std::vector<int>& s_labels,
                               const RealMatrix& q, double h_s);

// Plug-in estimate of E[-log Q(U|Z)] on an empirical sample.
double cond_entropy_upper_bound_estimate(const std::vector<int>& z_cells,
                                         const std::vector<int>& u_labels, const RealMatrix& q);

}  // namespace gpp::objective
