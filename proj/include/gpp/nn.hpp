#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "gpp/matrix.hpp"
#include "gpp/rng.hpp"

namespace gpp::nn {

enum class Activation { kIdentity, kRelu, kSoftmax };

struct DenseLayer {
    RealMatrix weight;  // in x out
    RealMatrix bias;    // 1 x out
    Activation activation = Activation::kIdentity;
};

// Feed-forward stack of dense layers. Softmax is only legal on the output
// layer; hidden layers are relu or identity.
struct DenseNet {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }
    std::size_t param_count() const;

    // Weights and biases in layer order; the canonical parameter ordering
    // used by Adam, gradients, and checkpoints.
    std::vector<RealMatrix*> param_ptrs();
    std::vector<const RealMatrix*> param_ptrs() const;

    friend bool operator==(const DenseNet& a, const DenseNet& b);
};

struct GradientSet {
    std::vector<RealMatrix> tensors;  // mirrors DenseNet::param_ptrs order

    static GradientSet zeros_like(const DenseNet& net);
    std::vector<const RealMatrix*> ptrs() const;
    std::vector<RealMatrix*> ptrs();
    void accumulate(const GradientSet& other, double scale = 1.0);
    bool all_finite() const;
};

// Layer activations retained from a forward pass so backward does not have
// to recompute them.
struct ForwardTrace {
    std::vector<RealMatrix> pre;   // pre-activation per layer
    std::vector<RealMatrix> post;  // activated output per layer
    const RealMatrix& output() const { return post.back(); }
};

RealMatrix forward(const DenseNet& net, const RealMatrix& input);
ForwardTrace forward_trace(const DenseNet& net, const RealMatrix& input);

// Reverse-mode gradients of the network composition. For softmax output
// layers `output_grad` is taken with respect to the pre-softmax logits (the
// convention cross_entropy's logit_grad follows); for identity/relu outputs
// it is with respect to the layer output. Returns (parameter grads, input grad).
std::pair<GradientSet, RealMatrix> backward(const DenseNet& net, const RealMatrix& input,
                                            const RealMatrix& output_grad);
std::pair<GradientSet, RealMatrix> backward(const DenseNet& net, const RealMatrix& input,
                                            const ForwardTrace& trace,
                                            const RealMatrix& output_grad);

struct CrossEntropyResult {
    double loss = 0.0;          // mean over the batch of -log p[label]
    RealMatrix logit_grad;      // (p - onehot) / batch, valid when p = softmax(logits)
};

CrossEntropyResult cross_entropy(const RealMatrix& probabilities, const std::vector<int>& labels);

struct AdamState {
    std::vector<RealMatrix> m;  // first moments, shapes mirror the parameters
    std::vector<RealMatrix> v;  // second moments
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState like(const std::vector<const RealMatrix*>& params);
    static AdamState like(const DenseNet& net);
};

// Bias-corrected Adam update applied elementwise. Throws NumericError on a
// non-finite gradient entry without touching the parameters.
void adam_step(const std::vector<RealMatrix*>& params,
               const std::vector<const RealMatrix*>& grads, AdamState& state, double lr);
void adam_step(DenseNet& net, const GradientSet& grads, AdamState& state, double lr);

using LossFn = std::function<double(const DenseNet&, const RealMatrix&)>;

// Central-difference gradient (L(p+h) - L(p-h)) / 2h per parameter entry.
GradientSet finite_difference_grad(const DenseNet& net, const RealMatrix& input,
                                   const LossFn& loss_fn, double h);

// Hidden layers relu, output activation as given; weights zero until init.
DenseNet make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t output_dim, Activation output_activation);

// Glorot uniform weights, zero biases.
void init_xavier(DenseNet& net, Rng& rng);

}  // namespace gpp::nn
