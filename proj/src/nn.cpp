#include "gpp/nn.hpp"

#include <cmath>
#include <string>

#include "gpp/kernels.hpp"

namespace gpp::nn {

namespace {

void check_net(const DenseNet& net) {
    if (net.layers.empty()) throw ShapeError("DenseNet: no layers");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        require_shape(layer.bias, 1, layer.weight.cols(), "DenseNet bias");
        if (l + 1 < net.layers.size()) {
            if (layer.activation == Activation::kSoftmax)
                throw ShapeError("DenseNet: softmax on a hidden layer");
            if (layer.weight.cols() != net.layers[l + 1].weight.rows())
                throw ShapeError("DenseNet: layer " + std::to_string(l) + " output dim " +
                                 std::to_string(layer.weight.cols()) + " != layer " +
                                 std::to_string(l + 1) + " input dim " +
                                 std::to_string(net.layers[l + 1].weight.rows()));
        }
    }
}

}  // namespace

std::size_t DenseNet::param_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
    return n;
}

std::vector<RealMatrix*> DenseNet::param_ptrs() {
    std::vector<RealMatrix*> out;
    out.reserve(layers.size() * 2);
    for (auto& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

std::vector<const RealMatrix*> DenseNet::param_ptrs() const {
    std::vector<const RealMatrix*> out;
    out.reserve(layers.size() * 2);
    for (const auto& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

bool operator==(const DenseNet& a, const DenseNet& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (!(a.layers[i].weight == b.layers[i].weight)) return false;
        if (!(a.layers[i].bias == b.layers[i].bias)) return false;
        if (a.layers[i].activation != b.layers[i].activation) return false;
    }
    return true;
}

GradientSet GradientSet::zeros_like(const DenseNet& net) {
    GradientSet g;
    g.tensors.reserve(net.layers.size() * 2);
    for (const auto& layer : net.layers) {
        g.tensors.emplace_back(layer.weight.rows(), layer.weight.cols(), 0.0);
        g.tensors.emplace_back(layer.bias.rows(), layer.bias.cols(), 0.0);
    }
    return g;
}

std::vector<const RealMatrix*> GradientSet::ptrs() const {
    std::vector<const RealMatrix*> out;
    out.reserve(tensors.size());
    for (const auto& t : tensors) out.push_back(&t);
    return out;
}

std::vector<RealMatrix*> GradientSet::ptrs() {
    std::vector<RealMatrix*> out;
    out.reserve(tensors.size());
    for (auto& t : tensors) out.push_back(&t);
    return out;
}

void GradientSet::accumulate(const GradientSet& other, double scale) {
    if (tensors.size() != other.tensors.size())
        throw ShapeError("GradientSet::accumulate: tensor count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!tensors[i].same_shape(other.tensors[i]))
            throw ShapeError("GradientSet::accumulate: shape mismatch");
        double* dst = tensors[i].data();
        const double* src = other.tensors[i].data();
        for (std::size_t j = 0; j < tensors[i].size(); ++j) dst[j] += scale * src[j];
    }
}

bool GradientSet::all_finite() const {
    for (const auto& t : tensors) {
        if (!t.all_finite()) return false;
    }
    return true;
}

ForwardTrace forward_trace(const DenseNet& net, const RealMatrix& input) {
    check_net(net);
    if (input.cols() != net.input_dim())
        throw ShapeError("forward: input has " + std::to_string(input.cols()) +
                         " columns, net expects " + std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.pre.reserve(net.layers.size());
    trace.post.reserve(net.layers.size());
    const RealMatrix* cur = &input;
    for (const auto& layer : net.layers) {
        RealMatrix pre = kernels::matmul(*cur, layer.weight);
        kernels::add_bias_rows(pre, layer.bias);
        RealMatrix post = pre;
        switch (layer.activation) {
            case Activation::kIdentity: break;
            case Activation::kRelu: kernels::relu_inplace(post); break;
            case Activation::kSoftmax: kernels::softmax_rows(post); break;
        }
        trace.pre.push_back(std::move(pre));
        trace.post.push_back(std::move(post));
        cur = &trace.post.back();
    }
    return trace;
}

RealMatrix forward(const DenseNet& net, const RealMatrix& input) {
    return forward_trace(net, input).post.back();
}

std::pair<GradientSet, RealMatrix> backward(const DenseNet& net, const RealMatrix& input,
                                            const ForwardTrace& trace,
                                            const RealMatrix& output_grad) {
    if (!output_grad.same_shape(trace.post.back()))
        throw ShapeError("backward: output_grad shape mismatch");
    GradientSet grads;
    grads.tensors.resize(net.layers.size() * 2);

    RealMatrix delta = output_grad;  // grad wrt current layer pre-activation
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        switch (layer.activation) {
            case Activation::kIdentity: break;
            case Activation::kRelu: kernels::relu_backward_inplace(delta, trace.pre[l]); break;
            case Activation::kSoftmax:
                // upstream grad already wrt logits; nothing to do
                break;
        }
        const RealMatrix& layer_input = (l == 0) ? input : trace.post[l - 1];
        grads.tensors[2 * l] = kernels::matmul_trans_a(layer_input, delta);
        grads.tensors[2 * l + 1] = kernels::col_sums(delta);
        delta = kernels::matmul_trans_b(delta, layer.weight);
    }
    return {std::move(grads), std::move(delta)};
}

std::pair<GradientSet, RealMatrix> backward(const DenseNet& net, const RealMatrix& input,
                                            const RealMatrix& output_grad) {
    return backward(net, input, forward_trace(net, input), output_grad);
}

CrossEntropyResult cross_entropy(const RealMatrix& probabilities,
                                 const std::vector<int>& labels) {
    if (labels.size() != probabilities.rows())
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(probabilities.rows()) + " rows");
    const std::size_t batch = probabilities.rows();
    const std::size_t classes = probabilities.cols();
    if (batch == 0) throw DomainError("cross_entropy: empty batch");

    for (std::size_t i = 0; i < batch; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < classes; ++j) sum += probabilities(i, j);
        if (!std::isfinite(sum))
            throw NumericError("cross_entropy: non-finite probability row " + std::to_string(i));
        if (std::abs(sum - 1.0) > 1e-6)
            throw DomainError("cross_entropy: row " + std::to_string(i) +
                              " is not a probability row (sum " + std::to_string(sum) + ")");
    }

    CrossEntropyResult result;
    result.logit_grad = probabilities;
    double loss = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes)
            throw DomainError("cross_entropy: label " + std::to_string(label) +
                              " out of range for " + std::to_string(classes) + " classes");
        double p = probabilities(i, static_cast<std::size_t>(label));
        p = std::min(std::max(p, 1e-12), 1.0);
        loss -= std::log(p);
        result.logit_grad(i, static_cast<std::size_t>(label)) -= 1.0;
    }
    for (auto& g : result.logit_grad.values()) g *= inv_batch;
    result.loss = loss * inv_batch;
    return result;
}

AdamState AdamState::like(const std::vector<const RealMatrix*>& params) {
    AdamState state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto* p : params) {
        state.m.emplace_back(p->rows(), p->cols(), 0.0);
        state.v.emplace_back(p->rows(), p->cols(), 0.0);
    }
    return state;
}

AdamState AdamState::like(const DenseNet& net) { return like(net.param_ptrs()); }

void adam_step(const std::vector<RealMatrix*>& params,
               const std::vector<const RealMatrix*>& grads, AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.m[i]))
            throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(i));
        if (!grads[i]->all_finite())
            throw NumericError("adam_step: non-finite gradient at tensor " + std::to_string(i) +
                               ", step " + std::to_string(state.step + 1));
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i]->data();
        const double* g = grads[i]->data();
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        const std::size_t n = params[i]->size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

void adam_step(DenseNet& net, const GradientSet& grads, AdamState& state, double lr) {
    adam_step(net.param_ptrs(), grads.ptrs(), state, lr);
}

GradientSet finite_difference_grad(const DenseNet& net, const RealMatrix& input,
                                   const LossFn& loss_fn, double h) {
    if (!(h > 0.0)) throw DomainError("finite_difference_grad: h must be positive");
    DenseNet probe = net;
    GradientSet grads = GradientSet::zeros_like(net);
    auto params = probe.param_ptrs();
    for (std::size_t t = 0; t < params.size(); ++t) {
        double* data = params[t]->data();
        for (std::size_t j = 0; j < params[t]->size(); ++j) {
            const double saved = data[j];
            data[j] = saved + h;
            const double up = loss_fn(probe, input);
            data[j] = saved - h;
            const double down = loss_fn(probe, input);
            data[j] = saved;
            grads.tensors[t].data()[j] = (up - down) / (2.0 * h);
        }
    }
    return grads;
}

DenseNet make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t output_dim, Activation output_activation) {
    DenseNet net;
    std::size_t in = input_dim;
    for (std::size_t width : hidden) {
        net.layers.push_back({RealMatrix(in, width), RealMatrix(1, width),
                              Activation::kRelu});
        in = width;
    }
    net.layers.push_back({RealMatrix(in, output_dim), RealMatrix(1, output_dim),
                          output_activation});
    return net;
}

void init_xavier(DenseNet& net, Rng& rng) {
    for (auto& layer : net.layers) {
        const double fan_in = static_cast<double>(layer.weight.rows());
        const double fan_out = static_cast<double>(layer.weight.cols());
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& w : layer.weight.values()) w = rng.uniform(-bound, bound);
        layer.bias.fill(0.0);
    }
}

}  // namespace gpp::nn
