#include "doctest.h"

#include <cmath>
#include <vector>

#include "gpp/objective.hpp"
#include "gpp/rng.hpp"

using namespace gpp;

namespace {

RealMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    RealMatrix m(rows, cols);
    for (auto& v : m.values()) v = rng.uniform(-scale, scale);
    return m;
}

objective::DiscreteJoint random_joint(std::size_t n_z, std::size_t n_s, Rng& rng) {
    objective::DiscreteJoint joint;
    joint.n_z = n_z;
    joint.n_s = n_s;
    joint.p.resize(n_z * n_s);
    double sum = 0.0;
    for (auto& v : joint.p) {
        v = rng.uniform(0.0, 1.0);
        sum += v;
    }
    for (auto& v : joint.p) v /= sum;
    // renormalize exactly enough for validate()
    double total = 0.0;
    for (double v : joint.p) total += v;
    joint.p.back() += 1.0 - total;
    return joint;
}

// Conditional rows Q(s|z) with random positive entries.
RealMatrix random_conditional(std::size_t n_z, std::size_t n_s, Rng& rng) {
    RealMatrix q(n_z, n_s);
    for (std::size_t z = 0; z < n_z; ++z) {
        double sum = 0.0;
        for (std::size_t s = 0; s < n_s; ++s) {
            q(z, s) = rng.uniform(0.05, 1.0);
            sum += q(z, s);
        }
        for (std::size_t s = 0; s < n_s; ++s) q(z, s) /= sum;
    }
    return q;
}

RealMatrix true_posterior(const objective::DiscreteJoint& joint) {
    const auto mz = joint.marginal_z();
    RealMatrix q(joint.n_z, joint.n_s);
    for (std::size_t z = 0; z < joint.n_z; ++z)
        for (std::size_t s = 0; s < joint.n_s; ++s)
            q(z, s) = mz[z] > 0.0 ? joint.at(z, s) / mz[z] : 1.0 / joint.n_s;
    return q;
}

// H(S) + sum_{z,s} P(z,s) log Q(s|z): the bound evaluated exactly on the joint.
double exact_bound_value(const objective::DiscreteJoint& joint, const RealMatrix& q) {
    const double h_s = objective::exact_mi_discrete(joint).h_s;
    double acc = 0.0;
    for (std::size_t z = 0; z < joint.n_z; ++z)
        for (std::size_t s = 0; s < joint.n_s; ++s)
            if (joint.at(z, s) > 0.0) acc += joint.at(z, s) * std::log(q(z, s));
    return h_s + acc;
}

// E[-log Q(u|z)] evaluated exactly on a joint over (Z, U).
double exact_ce_bound_value(const objective::DiscreteJoint& joint, const RealMatrix& q) {
    double acc = 0.0;
    for (std::size_t z = 0; z < joint.n_z; ++z)
        for (std::size_t u = 0; u < joint.n_s; ++u)
            if (joint.at(z, u) > 0.0) acc -= joint.at(z, u) * std::log(q(z, u));
    return acc;
}

}  // namespace

TEST_CASE("classifier losses: perfect and uniform predictions") {
    // z rows are strong one-hot logit patterns through an identity-weight layer
    nn::DenseNet classifier = nn::make_mlp(3, {}, 3, nn::Activation::kSoftmax);
    for (std::size_t j = 0; j < 3; ++j) classifier.layers[0].weight(j, j) = 1.0;
    RealMatrix z(2, 3, 0.0);
    z(0, 0) = 50.0;
    z(1, 2) = 50.0;
    const auto perfect = objective::utility_classifier_loss(z, {0, 2}, classifier);
    CHECK(perfect.loss == doctest::Approx(0.0).epsilon(1e-9));

    nn::DenseNet uniform_net = nn::make_mlp(4, {}, 19, nn::Activation::kSoftmax);
    Rng rng(31);
    const RealMatrix z2 = random_matrix(6, 4, rng);
    std::vector<int> labels = {0, 5, 18, 9, 3, 11};
    const auto uniform = objective::adversary_classifier_loss(z2, labels, uniform_net);
    CHECK(uniform.loss == doctest::Approx(std::log(19.0)).epsilon(1e-12));
}

TEST_CASE("classifier loss matches forward+cross_entropy composition") {
    Rng rng(32);
    nn::DenseNet classifier = nn::make_mlp(5, {8}, 4, nn::Activation::kSoftmax);
    nn::init_xavier(classifier, rng);
    const RealMatrix z = random_matrix(7, 5, rng);
    std::vector<int> labels;
    for (int i = 0; i < 7; ++i) labels.push_back(static_cast<int>(rng.uniform_index(4)));

    const auto res = objective::utility_classifier_loss(z, labels, classifier);
    const auto ce = nn::cross_entropy(nn::forward(classifier, z), labels);
    CHECK(res.loss == doctest::Approx(ce.loss).epsilon(1e-12));

    auto [grads, z_grad] = nn::backward(classifier, z, ce.logit_grad);
    for (std::size_t t = 0; t < grads.tensors.size(); ++t)
        for (std::size_t i = 0; i < grads.tensors[t].size(); ++i)
            CHECK(res.classifier_grads.tensors[t].values()[i] ==
                  doctest::Approx(grads.tensors[t].values()[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < z_grad.size(); ++i)
        CHECK(res.z_grad.values()[i] == doctest::Approx(z_grad.values()[i]).epsilon(1e-12));
}

TEST_CASE("encoder_loss: uniform adversary at beta=0, lambda=0") {
    Rng rng(33);
    const RealMatrix mu = random_matrix(5, 3, rng);
    const RealMatrix logvar = random_matrix(5, 3, rng);
    Rng draw(34);
    const encoder::LatentSample sample = encoder::reparameterize(mu, logvar, draw);

    // zero-weight adversary: softmax is uniform, gradient through it vanishes
    std::vector<nn::DenseNet> adversaries;
    adversaries.push_back(nn::make_mlp(3, {}, 2, nn::Activation::kSoftmax));
    std::vector<std::vector<int>> s_labels = {{0, 1, 0, 1, 1}};

    const objective::GppLossConfig cfg{0.0, 0.0};
    const auto res = objective::encoder_loss(sample, {}, s_labels, {}, adversaries, cfg);
    CHECK(res.loss == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    for (double v : res.mu_grad.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
    for (double v : res.logvar_grad.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("encoder_loss: lambda-only reduces to the KL term") {
    Rng rng(35);
    const RealMatrix mu = random_matrix(4, 3, rng);
    const RealMatrix logvar = random_matrix(4, 3, rng);
    Rng draw(36);
    const encoder::LatentSample sample = encoder::reparameterize(mu, logvar, draw);
    const objective::GppLossConfig cfg{0.0, 0.7};
    const auto res = objective::encoder_loss(sample, {}, {}, {}, {}, cfg);
    const encoder::KlResult kl = encoder::kl_divergence(mu, logvar);
    CHECK(res.loss == doctest::Approx(0.7 * kl.kl).epsilon(1e-14));
    for (std::size_t i = 0; i < mu.size(); ++i) {
        CHECK(res.mu_grad.values()[i] ==
              doctest::Approx(0.7 * kl.mu_grad.values()[i]).epsilon(1e-14));
        CHECK(res.logvar_grad.values()[i] ==
              doctest::Approx(0.7 * kl.logvar_grad.values()[i]).epsilon(1e-14));
    }
}

TEST_CASE("encoder_loss sign structure and term isolation") {
    Rng rng(37);
    const RealMatrix mu = random_matrix(6, 4, rng);
    const RealMatrix logvar = random_matrix(6, 4, rng);
    Rng draw(38);
    const encoder::LatentSample sample = encoder::reparameterize(mu, logvar, draw);

    std::vector<nn::DenseNet> utility, adversary;
    std::vector<std::vector<int>> u_labels, s_labels;
    for (int j = 0; j < 2; ++j) {
        utility.push_back(nn::make_mlp(4, {5}, 3, nn::Activation::kSoftmax));
        nn::init_xavier(utility.back(), rng);
        u_labels.push_back({0, 1, 2, 0, 1, 2});
    }
    for (int j = 0; j < 3; ++j) {
        adversary.push_back(nn::make_mlp(4, {5}, 2, nn::Activation::kSoftmax));
        nn::init_xavier(adversary.back(), rng);
        s_labels.push_back({0, 1, 0, 1, 0, 1});
    }

    const objective::GppLossConfig cfg{1.7, 0.3};
    const auto res = objective::encoder_loss(sample, u_labels, s_labels, utility, adversary, cfg);
    CHECK(res.loss == doctest::Approx(1.7 * res.utility_ce - res.adversary_ce + 0.3 * res.kl)
                          .epsilon(1e-12));

    const objective::GppLossConfig bare{0.0, 0.0};
    const auto res_bare =
        objective::encoder_loss(sample, u_labels, s_labels, utility, adversary, bare);
    CHECK(res_bare.loss == doctest::Approx(-res_bare.adversary_ce).epsilon(1e-13));
}

TEST_CASE("encoder_loss gradients match finite differences through frozen classifiers") {
    Rng rng(39);
    encoder::GaussianEncoderParams params = encoder::make_encoder(6, {7}, 3, rng);
    const RealMatrix x = random_matrix(5, 6, rng);

    std::vector<nn::DenseNet> utility(1, nn::make_mlp(3, {6}, 4, nn::Activation::kSoftmax));
    std::vector<nn::DenseNet> adversary(1, nn::make_mlp(3, {6}, 2, nn::Activation::kSoftmax));
    nn::init_xavier(utility[0], rng);
    nn::init_xavier(adversary[0], rng);
    const std::vector<std::vector<int>> u_labels = {{0, 1, 2, 3, 1}};
    const std::vector<std::vector<int>> s_labels = {{0, 1, 1, 0, 1}};
    const objective::GppLossConfig cfg{1.3, 0.05};

    auto [mu0, logvar0] = encoder::encode(params, x);
    RealMatrix eps = random_matrix(5, 3, rng);

    const auto loss_at = [&](const encoder::GaussianEncoderParams& p) {
        auto [mu, logvar] = encoder::encode(p, x);
        const encoder::LatentSample sample = encoder::reparameterize_with(mu, logvar, eps);
        return objective::encoder_loss(sample, u_labels, s_labels, utility, adversary, cfg).loss;
    };

    const encoder::LatentSample sample = encoder::reparameterize_with(mu0, logvar0, eps);
    const auto res = objective::encoder_loss(sample, u_labels, s_labels, utility, adversary, cfg);
    const encoder::EncoderGradients analytic =
        encoder::encoder_backward(params, x, res.mu_grad, res.logvar_grad);

    encoder::GaussianEncoderParams probe = params;
    auto probe_ptrs = probe.param_ptrs();
    const auto analytic_ptrs = analytic.ptrs();
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t t = 0; t < probe_ptrs.size(); ++t) {
        for (std::size_t i = 0; i < probe_ptrs[t]->size(); ++i) {
            double& slot = probe_ptrs[t]->values()[i];
            const double saved = slot;
            slot = saved + h;
            const double up = loss_at(probe);
            slot = saved - h;
            const double down = loss_at(probe);
            slot = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double got = analytic_ptrs[t]->values()[i];
            const double denom = std::max({std::abs(numeric), std::abs(got), 1e-6});
            worst = std::max(worst, std::abs(numeric - got) / denom);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("exact_mi_discrete: independent product joint has zero MI") {
    objective::DiscreteJoint joint;
    joint.n_z = 3;
    joint.n_s = 2;
    const double pz[] = {0.2, 0.5, 0.3};
    const double ps[] = {0.4, 0.6};
    joint.p.resize(6);
    for (std::size_t z = 0; z < 3; ++z)
        for (std::size_t s = 0; s < 2; ++s) joint.p[z * 2 + s] = pz[z] * ps[s];
    const auto res = objective::exact_mi_discrete(joint);
    CHECK(res.mi == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(res.h_s == doctest::Approx(-(0.4 * std::log(0.4) + 0.6 * std::log(0.6))).epsilon(1e-14));
}

TEST_CASE("exact_mi_discrete: deterministic copy has MI = ln 2") {
    objective::DiscreteJoint joint;
    joint.n_z = 2;
    joint.n_s = 2;
    joint.p = {0.5, 0.0, 0.0, 0.5};
    const auto res = objective::exact_mi_discrete(joint);
    CHECK(res.mi == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(res.h_s_given_z == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("exact_mi_discrete matches an independently coded double loop") {
    Rng rng(40);
    const objective::DiscreteJoint joint = random_joint(4, 3, rng);
    const auto res = objective::exact_mi_discrete(joint);

    // second implementation: accumulate entropies H(Z), H(S), H(Z,S)
    double h_z = 0.0, h_s = 0.0, h_zs = 0.0;
    std::vector<double> mz(4, 0.0), ms(3, 0.0);
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t s = 0; s < 3; ++s) {
            mz[z] += joint.at(z, s);
            ms[s] += joint.at(z, s);
        }
    for (double v : mz)
        if (v > 0) h_z -= v * std::log(v);
    for (double v : ms)
        if (v > 0) h_s -= v * std::log(v);
    for (double v : joint.p)
        if (v > 0) h_zs -= v * std::log(v);
    CHECK(res.mi == doctest::Approx(h_z + h_s - h_zs).epsilon(1e-12));
    CHECK(res.h_s == doctest::Approx(h_s).epsilon(1e-12));
    CHECK(res.mi == doctest::Approx(res.h_s - res.h_s_given_z).epsilon(1e-12));
}

TEST_CASE("exact_mi_discrete validates its table") {
    objective::DiscreteJoint bad;
    bad.n_z = 2;
    bad.n_s = 2;
    bad.p = {0.5, 0.5, 0.25, 0.25};
    CHECK_THROWS_AS(objective::exact_mi_discrete(bad), DomainError);
}

TEST_CASE("mi_lower_bound_estimate: prior Q scores zero") {
    // empirical marginal as Q rows and plug-in H(S) cancel exactly
    const std::vector<int> z_cells = {0, 1, 0, 1, 0, 1, 0, 1};
    const std::vector<int> s_labels = {0, 0, 0, 1, 1, 0, 0, 1};
    const double p1 = 3.0 / 8.0;
    RealMatrix q(2, 2);
    q(0, 0) = q(1, 0) = 1.0 - p1;
    q(0, 1) = q(1, 1) = p1;
    const double h_s = -(p1 * std::log(p1) + (1 - p1) * std::log(1 - p1));
    const double est = objective::mi_lower_bound_estimate(z_cells, s_labels, q, h_s);
    CHECK(est == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(objective::mi_lower_bound_estimate({}, {}, q, h_s), DomainError);
}

TEST_CASE("mi_lower_bound_estimate converges to exact MI at the true posterior") {
    Rng rng(41);
    const objective::DiscreteJoint joint = random_joint(4, 3, rng);
    const RealMatrix q = true_posterior(joint);
    const auto exact = objective::exact_mi_discrete(joint);

    const std::size_t n = 1000000;
    std::vector<int> z_cells(n), s_labels(n);
    Rng draw(42);
    for (std::size_t i = 0; i < n; ++i) {
        double u = draw.uniform();
        std::size_t cell = joint.p.size() - 1;
        for (std::size_t c = 0; c < joint.p.size(); ++c) {
            if (u < joint.p[c]) {
                cell = c;
                break;
            }
            u -= joint.p[c];
        }
        z_cells[i] = static_cast<int>(cell / joint.n_s);
        s_labels[i] = static_cast<int>(cell % joint.n_s);
    }
    // plug-in H(S) from the same sample keeps the estimator self-consistent
    std::vector<double> counts(joint.n_s, 0.0);
    for (int s : s_labels) counts[static_cast<std::size_t>(s)] += 1.0;
    double h_s = 0.0;
    for (double c : counts)
        if (c > 0) h_s -= (c / n) * std::log(c / n);

    const double est = objective::mi_lower_bound_estimate(z_cells, s_labels, q, h_s);
    CHECK(std::abs(est - exact.mi) < 5e-3);
}

TEST_CASE("theorem-1 inequality holds exactly over 100 random joints and Qs") {
    Rng rng(43);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n_z = 2 + rng.uniform_index(7);  // up to 8 cells
        const std::size_t n_s = 2 + rng.uniform_index(3);  // up to 4 classes
        const objective::DiscreteJoint joint = random_joint(n_z, n_s, rng);
        const auto exact = objective::exact_mi_discrete(joint);

        const RealMatrix q = random_conditional(n_z, n_s, rng);
        CHECK(exact_bound_value(joint, q) <= exact.mi + 1e-10);

        const double at_posterior = exact_bound_value(joint, true_posterior(joint));
        CHECK(std::abs(at_posterior - exact.mi) < 1e-10);
    }
}

TEST_CASE("theorem-2 inequality mirrors with conditional entropy") {
    Rng rng(44);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n_z = 2 + rng.uniform_index(7);
        const std::size_t n_u = 2 + rng.uniform_index(3);
        const objective::DiscreteJoint joint = random_joint(n_z, n_u, rng);
        const auto exact = objective::exact_mi_discrete(joint);
        const double h_u_given_z = exact.h_s_given_z;  // same table, S slot holds U

        const RealMatrix q = random_conditional(n_z, n_u, rng);
        CHECK(exact_ce_bound_value(joint, q) >= h_u_given_z - 1e-10);

        const double at_posterior = exact_ce_bound_value(joint, true_posterior(joint));
        CHECK(std::abs(at_posterior - h_u_given_z) < 1e-10);
    }
}

TEST_CASE("cond_entropy_upper_bound_estimate: uniform Q and posterior convergence") {
    const std::vector<int> z_cells = {0, 1, 2, 0, 1};
    const std::vector<int> u_labels = {0, 3, 2, 1, 0};
    RealMatrix uniform(3, 4, 0.25);
    CHECK(objective::cond_entropy_upper_bound_estimate(z_cells, u_labels, uniform) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Rng rng(45);
    const objective::DiscreteJoint joint = random_joint(3, 4, rng);
    const RealMatrix q = true_posterior(joint);
    const auto exact = objective::exact_mi_discrete(joint);
    const std::size_t n = 400000;
    std::vector<int> zs(n), us(n);
    Rng draw(46);
    for (std::size_t i = 0; i < n; ++i) {
        double u = draw.uniform();
        std::size_t cell = joint.p.size() - 1;
        for (std::size_t c = 0; c < joint.p.size(); ++c) {
            if (u < joint.p[c]) {
                cell = c;
                break;
            }
            u -= joint.p[c];
        }
        zs[i] = static_cast<int>(cell / joint.n_s);
        us[i] = static_cast<int>(cell % joint.n_s);
    }
    const double est = objective::cond_entropy_upper_bound_estimate(zs, us, q);
    CHECK(std::abs(est - exact.h_s_given_z) < 5e-3);
}
