#include "doctest.h"

#include <cmath>
#include <vector>

#include "gpp/nn.hpp"
#include "gpp/rng.hpp"

using namespace gpp;
using nn::Activation;
using nn::DenseNet;

namespace {

RealMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    RealMatrix m(rows, cols);
    for (auto& v : m.values()) v = rng.uniform(-scale, scale);
    return m;
}

// Straight-loop forward oracle, independent of the library kernels.
RealMatrix loop_forward(const DenseNet& net, const RealMatrix& input) {
    RealMatrix cur = input;
    for (const auto& layer : net.layers) {
        RealMatrix next(cur.rows(), layer.weight.cols(), 0.0);
        for (std::size_t i = 0; i < cur.rows(); ++i) {
            for (std::size_t j = 0; j < layer.weight.cols(); ++j) {
                double acc = layer.bias(0, j);
                for (std::size_t p = 0; p < cur.cols(); ++p)
                    acc += cur(i, p) * layer.weight(p, j);
                next(i, j) = acc;
            }
        }
        if (layer.activation == Activation::kRelu) {
            for (auto& v : next.values()) v = v > 0.0 ? v : 0.0;
        } else if (layer.activation == Activation::kSoftmax) {
            for (std::size_t i = 0; i < next.rows(); ++i) {
                double mx = next(i, 0);
                for (std::size_t j = 1; j < next.cols(); ++j) mx = std::max(mx, next(i, j));
                double sum = 0.0;
                for (std::size_t j = 0; j < next.cols(); ++j) {
                    next(i, j) = std::exp(next(i, j) - mx);
                    sum += next(i, j);
                }
                for (std::size_t j = 0; j < next.cols(); ++j) next(i, j) /= sum;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

// Keeps relu pre-activations away from the kink so central differences stay
// meaningful.
bool relu_margins_ok(const DenseNet& net, const RealMatrix& input, double margin) {
    const nn::ForwardTrace trace = nn::forward_trace(net, input);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (net.layers[l].activation != Activation::kRelu) continue;
        for (double v : trace.pre[l].values())
            if (std::abs(v) < margin) return false;
    }
    return true;
}

double max_relative_error(const nn::GradientSet& got, const nn::GradientSet& want) {
    double worst = 0.0;
    REQUIRE(got.tensors.size() == want.tensors.size());
    for (std::size_t t = 0; t < got.tensors.size(); ++t) {
        for (std::size_t i = 0; i < got.tensors[t].size(); ++i) {
            const double g = got.tensors[t].values()[i];
            const double w = want.tensors[t].values()[i];
            const double denom = std::max({std::abs(g), std::abs(w), 1e-6});
            worst = std::max(worst, std::abs(g - w) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("forward: zero-weight identity net maps everything to zero") {
    DenseNet net = nn::make_mlp(3, {}, 2, Activation::kIdentity);
    Rng rng(1);
    const RealMatrix x = random_matrix(4, 3, rng);
    const RealMatrix y = nn::forward(net, x);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("forward: single relu layer with identity weights") {
    DenseNet net = nn::make_mlp(2, {}, 2, Activation::kRelu);
    net.layers[0].weight(0, 0) = 1.0;
    net.layers[0].weight(1, 1) = 1.0;
    RealMatrix x(1, 2);
    x(0, 0) = -1.0;
    x(0, 1) = 2.0;
    const RealMatrix y = nn::forward(net, x);
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == 2.0);
}

TEST_CASE("forward matches the straight-loop oracle to 1e-12") {
    Rng rng(2);
    for (int rep = 0; rep < 5; ++rep) {
        DenseNet net = nn::make_mlp(6, {9}, 4, Activation::kIdentity);
        nn::init_xavier(net, rng);
        const RealMatrix x = random_matrix(7, 6, rng);
        const RealMatrix got = nn::forward(net, x);
        const RealMatrix want = loop_forward(net, x);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.values()[i] == doctest::Approx(want.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward is deterministic") {
    Rng rng(3);
    DenseNet net = nn::make_mlp(5, {8, 8}, 3, Activation::kSoftmax);
    nn::init_xavier(net, rng);
    const RealMatrix x = random_matrix(6, 5, rng);
    CHECK(nn::forward(net, x) == nn::forward(net, x));
}

TEST_CASE("forward rejects shape mismatches") {
    DenseNet net = nn::make_mlp(4, {}, 2, Activation::kIdentity);
    CHECK_THROWS_AS(nn::forward(net, RealMatrix(3, 5, 1.0)), ShapeError);
}

TEST_CASE("backward: zero output grad gives a zero gradient set") {
    Rng rng(4);
    DenseNet net = nn::make_mlp(4, {6}, 3, Activation::kIdentity);
    nn::init_xavier(net, rng);
    const RealMatrix x = random_matrix(5, 4, rng);
    auto [grads, input_grad] = nn::backward(net, x, RealMatrix(5, 3, 0.0));
    for (const auto& tensor : grads.tensors)
        for (double v : tensor.values()) CHECK(v == 0.0);
    for (double v : input_grad.values()) CHECK(v == 0.0);
}

TEST_CASE("backward: scalar relu chain rule by hand") {
    // f(x) = relu(w x + b), w=2, b=0, x=3, upstream grad 1
    DenseNet net = nn::make_mlp(1, {}, 1, Activation::kRelu);
    net.layers[0].weight(0, 0) = 2.0;
    RealMatrix x(1, 1, 3.0);
    auto [grads, input_grad] = nn::backward(net, x, RealMatrix(1, 1, 1.0));
    CHECK(grads.tensors[0](0, 0) == 3.0);  // dw
    CHECK(grads.tensors[1](0, 0) == 1.0);  // db
    CHECK(input_grad(0, 0) == 2.0);        // dx
}

TEST_CASE("gradient oracle: backward matches central finite differences on >= 20 nets") {
    Rng rng(5);
    int tested = 0;
    int attempts = 0;
    while (tested < 20 && attempts < 200) {
        ++attempts;
        const std::size_t n_hidden = rng.uniform_index(3);  // 0..2 hidden -> 1..3 layers
        std::vector<std::size_t> hidden;
        for (std::size_t h = 0; h < n_hidden; ++h)
            hidden.push_back(3 + rng.uniform_index(4));
        const std::size_t d_in = 2 + rng.uniform_index(4);
        const std::size_t d_out = 2 + rng.uniform_index(3);
        DenseNet net = nn::make_mlp(d_in, hidden, d_out, Activation::kSoftmax);
        nn::init_xavier(net, rng);
        const std::size_t batch = 1 + rng.uniform_index(4);
        const RealMatrix x = random_matrix(batch, d_in, rng);
        if (!relu_margins_ok(net, x, 1e-3)) continue;

        std::vector<int> labels(batch);
        for (auto& label : labels)
            label = static_cast<int>(rng.uniform_index(d_out));

        const nn::LossFn loss_fn = [&labels](const DenseNet& probe, const RealMatrix& input) {
            return nn::cross_entropy(nn::forward(probe, input), labels).loss;
        };

        const nn::ForwardTrace trace = nn::forward_trace(net, x);
        const nn::CrossEntropyResult ce = nn::cross_entropy(trace.output(), labels);
        auto [analytic, input_grad] = nn::backward(net, x, trace, ce.logit_grad);
        (void)input_grad;
        const nn::GradientSet numeric = nn::finite_difference_grad(net, x, loss_fn, 1e-5);
        CHECK(max_relative_error(analytic, numeric) < 1e-4);
        ++tested;
    }
    REQUIRE(tested == 20);
}

TEST_CASE("cross_entropy: perfect and uniform predictions") {
    RealMatrix perfect(1, 2);
    perfect(0, 0) = 1.0;
    const auto res_perfect = nn::cross_entropy(perfect, {0});
    CHECK(res_perfect.loss == doctest::Approx(0.0).epsilon(1e-12));

    RealMatrix uniform(1, 2, 0.5);
    const auto res_uniform = nn::cross_entropy(uniform, {1});
    CHECK(res_uniform.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross_entropy matches a scalar loop oracle on random batches") {
    Rng rng(6);
    RealMatrix probs(3, 5);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < probs.cols(); ++j) {
            probs(i, j) = rng.uniform(0.05, 1.0);
            sum += probs(i, j);
        }
        for (std::size_t j = 0; j < probs.cols(); ++j) probs(i, j) /= sum;
    }
    const std::vector<int> labels = {4, 0, 2};
    const auto res = nn::cross_entropy(probs, labels);

    double want = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        want -= std::log(probs(i, static_cast<std::size_t>(labels[i])));
    want /= 3.0;
    CHECK(res.loss == doctest::Approx(want).epsilon(1e-12));

    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            const double onehot = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
            CHECK(res.logit_grad(i, j) ==
                  doctest::Approx((probs(i, j) - onehot) / 3.0).epsilon(1e-12));
        }
}

TEST_CASE("cross_entropy rejects bad labels and invalid rows") {
    RealMatrix probs(1, 2, 0.5);
    CHECK_THROWS_AS(nn::cross_entropy(probs, {2}), DomainError);
    CHECK_THROWS_AS(nn::cross_entropy(probs, {-1}), DomainError);
    RealMatrix invalid(1, 2, 0.9);
    CHECK_THROWS_AS(nn::cross_entropy(invalid, {0}), DomainError);
}

TEST_CASE("adam: zero gradient is a fixed point and still advances the step counter") {
    Rng rng(7);
    DenseNet net = nn::make_mlp(3, {4}, 2, Activation::kIdentity);
    nn::init_xavier(net, rng);
    const DenseNet before = net;
    nn::AdamState state = nn::AdamState::like(net);
    nn::adam_step(net, nn::GradientSet::zeros_like(net), state, 0.1);
    CHECK(net == before);
    CHECK(state.step == 1);
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
    DenseNet net = nn::make_mlp(1, {}, 1, Activation::kIdentity);
    net.layers[0].weight(0, 0) = 1.0;
    nn::AdamState state = nn::AdamState::like(net);
    nn::GradientSet grads = nn::GradientSet::zeros_like(net);
    grads.tensors[0](0, 0) = 1.0;
    nn::adam_step(net, grads, state, 0.1);
    CHECK(net.layers[0].weight(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam matches a scalar reference over successive steps") {
    DenseNet net = nn::make_mlp(1, {}, 1, Activation::kIdentity);
    net.layers[0].weight(0, 0) = 0.7;
    nn::AdamState state = nn::AdamState::like(net);
    nn::GradientSet grads = nn::GradientSet::zeros_like(net);

    double p = 0.7, m = 0.0, v = 0.0;
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double gs[] = {0.3, 0.3, -0.8, 1.1};
    for (int t = 0; t < 4; ++t) {
        grads.tensors[0](0, 0) = gs[t];
        nn::adam_step(net, grads, state, lr);
        m = b1 * m + (1 - b1) * gs[t];
        v = b2 * v + (1 - b2) * gs[t] * gs[t];
        const double mhat = m / (1 - std::pow(b1, t + 1));
        const double vhat = v / (1 - std::pow(b2, t + 1));
        p -= lr * mhat / (std::sqrt(vhat) + eps);
        CHECK(net.layers[0].weight(0, 0) == doctest::Approx(p).epsilon(1e-12));
    }
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
    DenseNet net = nn::make_mlp(1, {}, 1, Activation::kIdentity);
    net.layers[0].weight(0, 0) = 0.5;
    nn::AdamState state = nn::AdamState::like(net);
    nn::GradientSet grads = nn::GradientSet::zeros_like(net);
    grads.tensors[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(nn::adam_step(net, grads, state, 0.1), NumericError);
    CHECK(net.layers[0].weight(0, 0) == 0.5);
    CHECK(state.step == 0);
}

TEST_CASE("finite differences: constant loss and analytic quadratic") {
    DenseNet net = nn::make_mlp(1, {}, 1, Activation::kIdentity);
    net.layers[0].weight(0, 0) = 3.0;
    const RealMatrix x(1, 1, 1.0);

    const nn::GradientSet zero =
        nn::finite_difference_grad(net, x, [](const DenseNet&, const RealMatrix&) { return 2.5; },
                                   1e-5);
    for (const auto& tensor : zero.tensors)
        for (double v : tensor.values()) CHECK(v == 0.0);

    // L = 0.5 w^2 at w = 3 -> dL/dw = 3
    const nn::GradientSet quad = nn::finite_difference_grad(
        net, x,
        [](const DenseNet& probe, const RealMatrix&) {
            const double w = probe.layers[0].weight(0, 0);
            return 0.5 * w * w;
        },
        1e-5);
    CHECK(quad.tensors[0](0, 0) == doctest::Approx(3.0).epsilon(1e-8));
    CHECK_THROWS_AS(nn::finite_difference_grad(
                        net, x, [](const DenseNet&, const RealMatrix&) { return 0.0; }, 0.0),
                    DomainError);
}
