#pragma once

#include "dpc/checkpoint.hpp"
#include "dpc/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace dpc {

enum class Activation { relu, tanh_fn, identity };

/// Dense MLP parameters. Layer l maps n_{l-1} -> n_l as act(W x + b); batches
/// are row-major (one sample per row). 64-bit floats throughout.
struct Mlp {
    std::vector<MatX> weights;   // out x in
    std::vector<VecX> biases;
    std::vector<Activation> activations;
    std::uint64_t revision = 0;  // bumped by every parameter mutation

    int layer_count() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return static_cast<int>(weights.front().cols()); }
    int output_dim() const { return static_cast<int>(weights.back().rows()); }

    std::vector<int> layer_sizes() const {
        std::vector<int> s{input_dim()};
        for (const auto& w : weights) s.push_back(static_cast<int>(w.rows()));
        return s;
    }

    void validate() const {
        if (weights.empty() || weights.size() != biases.size() ||
            weights.size() != activations.size())
            throw std::invalid_argument("Mlp: inconsistent layer arrays");
        for (size_t l = 0; l < weights.size(); ++l) {
            if (biases[l].size() != weights[l].rows())
                throw std::invalid_argument("Mlp: bias/weight shape mismatch");
            if (l > 0 && weights[l].cols() != weights[l - 1].rows())
                throw std::invalid_argument("Mlp: layer dimensions do not chain");
            require_finite(weights[l], "Mlp.weights");
            require_finite(biases[l], "Mlp.biases");
        }
    }
};

/// He-uniform init for ReLU layers, Xavier-uniform otherwise.
inline Mlp mlp_init(const std::vector<int>& layer_sizes, const std::vector<Activation>& acts,
                    std::mt19937_64& rng) {
    if (layer_sizes.size() < 2 || acts.size() != layer_sizes.size() - 1)
        throw std::invalid_argument("mlp_init: bad topology");
    Mlp net;
    for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        const double limit = acts[l] == Activation::relu
                                 ? std::sqrt(6.0 / fan_in)
                                 : std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        MatX w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j) w(i, j) = dist(rng);
        net.weights.push_back(std::move(w));
        net.biases.push_back(VecX::Zero(fan_out));
        net.activations.push_back(acts[l]);
    }
    return net;
}

/// Standard 2x128 ReLU body with an identity head.
inline Mlp mlp_init_128(int input_dim, int output_dim, std::mt19937_64& rng) {
    return mlp_init({input_dim, 128, 128, output_dim},
                    {Activation::relu, Activation::relu, Activation::identity}, rng);
}

/// Records everything backward needs: the input batch plus per-layer pre- and
/// post-activation values. Valid only for the parameter revision it was made
/// with.
struct Tape {
    MatX input;
    std::vector<MatX> pre;
    std::vector<MatX> post;
    std::uint64_t revision = 0;
};

struct Gradients {
    std::vector<MatX> weights;
    std::vector<VecX> biases;
    MatX input;  // gradient w.r.t. the input batch
};

inline MatX apply_activation(Activation a, const MatX& z) {
    switch (a) {
        case Activation::relu: return z.cwiseMax(0.0);
        case Activation::tanh_fn: return z.array().tanh().matrix();
        case Activation::identity: return z;
    }
    return z;
}

inline MatX activation_grad(Activation a, const MatX& z, const MatX& post) {
    switch (a) {
        case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
        case Activation::tanh_fn: return (1.0 - post.array().square()).matrix();
        case Activation::identity: return MatX::Ones(z.rows(), z.cols());
    }
    return MatX::Ones(z.rows(), z.cols());
}

/// Batched forward pass; rows are samples.
inline MatX forward(const Mlp& net, const MatX& input, Tape& tape) {
    if (input.cols() != net.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    tape.input = input;
    tape.pre.clear();
    tape.post.clear();
    tape.revision = net.revision;
    MatX x = input;
    for (int l = 0; l < net.layer_count(); ++l) {
        MatX z = (x * net.weights[l].transpose()).rowwise() + net.biases[l].transpose();
        MatX a = apply_activation(net.activations[l], z);
        tape.pre.push_back(std::move(z));
        x = a;
        tape.post.push_back(x);
    }
    return x;
}

inline VecX forward(const Mlp& net, const VecX& input, Tape& tape) {
    MatX out = forward(net, MatX(input.transpose()), tape);
    return out.row(0).transpose();
}

inline VecX forward(const Mlp& net, const VecX& input) {
    Tape tape;
    return forward(net, input, tape);
}

/// Reverse pass for <output_gradient, output>; exact gradients for all
/// parameters and the input batch.
inline Gradients backward(const Mlp& net, const Tape& tape, const MatX& output_gradient) {
    if (tape.revision != net.revision)
        throw std::logic_error("backward: stale tape (parameters changed since forward)");
    if (tape.pre.size() != static_cast<size_t>(net.layer_count()))
        throw std::logic_error("backward: tape does not match network");
    if (output_gradient.rows() != tape.input.rows() ||
        output_gradient.cols() != net.output_dim())
        throw std::invalid_argument("backward: output gradient shape mismatch");

    Gradients g;
    g.weights.resize(net.layer_count());
    g.biases.resize(net.layer_count());
    MatX delta = output_gradient;
    for (int l = net.layer_count() - 1; l >= 0; --l) {
        delta = delta.cwiseProduct(activation_grad(net.activations[l], tape.pre[l], tape.post[l]));
        const MatX& below = l == 0 ? tape.input : tape.post[l - 1];
        g.weights[l] = delta.transpose() * below;
        g.biases[l] = delta.colwise().sum().transpose();
        delta = delta * net.weights[l];
    }
    g.input = delta;
    return g;
}

/// Single-sample convenience: treats the gradient as one batch row.
inline Gradients backward_single(const Mlp& net, const Tape& tape, const VecX& output_gradient) {
    return backward(net, tape, MatX(output_gradient.transpose()));
}

/// Per-parameter Adam moments.
struct AdamState {
    std::vector<MatX> m_w, v_w;
    std::vector<VecX> m_b, v_b;
    long step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_net(const Mlp& net, double lr) {
        AdamState s;
        s.learning_rate = lr;
        for (int l = 0; l < net.layer_count(); ++l) {
            s.m_w.push_back(MatX::Zero(net.weights[l].rows(), net.weights[l].cols()));
            s.v_w.push_back(MatX::Zero(net.weights[l].rows(), net.weights[l].cols()));
            s.m_b.push_back(VecX::Zero(net.biases[l].size()));
            s.v_b.push_back(VecX::Zero(net.biases[l].size()));
        }
        return s;
    }
};

inline void adam_step(AdamState& state, Mlp& net, const Gradients& grads) {
    if (state.m_w.size() != static_cast<size_t>(net.layer_count()))
        throw std::invalid_argument("adam_step: state/net shape mismatch");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (int l = 0; l < net.layer_count(); ++l) {
        state.m_w[l] = state.beta1 * state.m_w[l] + (1.0 - state.beta1) * grads.weights[l];
        state.v_w[l] = state.beta2 * state.v_w[l] +
                       (1.0 - state.beta2) * grads.weights[l].cwiseProduct(grads.weights[l]);
        net.weights[l].array() -= state.learning_rate * (state.m_w[l] / bc1).array() /
                                  ((state.v_w[l] / bc2).array().sqrt() + state.epsilon);
        state.m_b[l] = state.beta1 * state.m_b[l] + (1.0 - state.beta1) * grads.biases[l];
        state.v_b[l] = state.beta2 * state.v_b[l] +
                       (1.0 - state.beta2) * grads.biases[l].cwiseProduct(grads.biases[l]);
        net.biases[l].array() -= state.learning_rate * (state.m_b[l] / bc1).array() /
                                 ((state.v_b[l] / bc2).array().sqrt() + state.epsilon);
    }
    net.revision += 1;
}

/// Scalar Adam, used for the SAC temperature.
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    long step_count = 0;
    double learning_rate = 3e-4;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

    void step(double& param, double grad) {
        step_count += 1;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad * grad;
        const double mh = m / (1.0 - std::pow(beta1, static_cast<double>(step_count)));
        const double vh = v / (1.0 - std::pow(beta2, static_cast<double>(step_count)));
        param -= learning_rate * mh / (std::sqrt(vh) + epsilon);
    }
};

// --- checkpoint helpers ---

inline void append_mlp_records(std::vector<TensorRecord>& out, const std::string& prefix,
                               const Mlp& net) {
    TensorRecord acts;
    acts.name = prefix + "/activations";
    acts.dims = {static_cast<std::uint64_t>(net.layer_count())};
    for (Activation a : net.activations) acts.data.push_back(static_cast<double>(a));
    out.push_back(std::move(acts));
    for (int l = 0; l < net.layer_count(); ++l) {
        TensorRecord w;
        w.name = prefix + "/W" + std::to_string(l);
        w.dims = {static_cast<std::uint64_t>(net.weights[l].rows()),
                  static_cast<std::uint64_t>(net.weights[l].cols())};
        w.data.resize(static_cast<size_t>(net.weights[l].size()));
        // Eigen default storage is column-major; persist row-major.
        Eigen::Map<MatX>(w.data.data(), net.weights[l].cols(), net.weights[l].rows()) =
            net.weights[l].transpose();
        out.push_back(std::move(w));
        TensorRecord b;
        b.name = prefix + "/b" + std::to_string(l);
        b.dims = {static_cast<std::uint64_t>(net.biases[l].size())};
        b.data.assign(net.biases[l].data(), net.biases[l].data() + net.biases[l].size());
        out.push_back(std::move(b));
    }
}

inline Mlp mlp_from_records(const std::vector<TensorRecord>& tensors, const std::string& prefix) {
    const TensorRecord& acts = require_tensor(tensors, prefix + "/activations");
    Mlp net;
    for (size_t l = 0; l < acts.data.size(); ++l) {
        net.activations.push_back(static_cast<Activation>(static_cast<int>(acts.data[l])));
        const TensorRecord& w = require_tensor(tensors, prefix + "/W" + std::to_string(l));
        const TensorRecord& b = require_tensor(tensors, prefix + "/b" + std::to_string(l));
        if (w.dims.size() != 2 || b.dims.size() != 1)
            throw std::runtime_error("mlp_from_records: bad tensor rank under " + prefix);
        const int rows = static_cast<int>(w.dims[0]), cols = static_cast<int>(w.dims[1]);
        MatX weight(rows, cols);
        weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                Eigen::RowMajor>>(w.data.data(), rows, cols);
        net.weights.push_back(std::move(weight));
        net.biases.push_back(Eigen::Map<const VecX>(b.data.data(),
                                                    static_cast<int>(b.dims[0])));
    }
    net.validate();
    net.revision = 1;
    return net;
}

inline TensorRecord scalar_record(const std::string& name, double value) {
    TensorRecord t;
    t.name = name;
    t.data = {value};
    return t;
}

inline TensorRecord vector_record(const std::string& name, const VecX& v) {
    TensorRecord t;
    t.name = name;
    t.dims = {static_cast<std::uint64_t>(v.size())};
    t.data.assign(v.data(), v.data() + v.size());
    return t;
}

inline VecX vector_from_record(const TensorRecord& t) {
    return Eigen::Map<const VecX>(t.data.data(), static_cast<int>(t.data.size()));
}

}  // namespace dpc
