#include "dpc/nn.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <random>

using namespace dpc;

namespace {

Mlp random_net(std::mt19937_64& rng, const std::vector<int>& sizes,
               const std::vector<Activation>& acts) {
    return mlp_init(sizes, acts, rng);
}

// Naive per-neuron evaluation, independent of the batched Eigen path.
VecX loop_forward(const Mlp& net, const VecX& input) {
    VecX x = input;
    for (int l = 0; l < net.layer_count(); ++l) {
        VecX z(net.weights[l].rows());
        for (int i = 0; i < z.size(); ++i) {
            double acc = net.biases[l](i);
            for (int j = 0; j < x.size(); ++j) acc += net.weights[l](i, j) * x(j);
            z(i) = acc;
        }
        for (int i = 0; i < z.size(); ++i) {
            switch (net.activations[l]) {
                case Activation::relu: z(i) = std::max(z(i), 0.0); break;
                case Activation::tanh_fn: z(i) = std::tanh(z(i)); break;
                case Activation::identity: break;
            }
        }
        x = z;
    }
    return x;
}

double scalar_loss(const Mlp& net, const VecX& input, const VecX& grad_direction) {
    return grad_direction.dot(loop_forward(net, input));
}

}  // namespace

TEST_CASE("identity network reproduces its input") {
    Mlp net;
    net.weights.push_back(MatX::Identity(3, 3));
    net.biases.push_back(VecX::Zero(3));
    net.activations.push_back(Activation::identity);
    VecX in(3);
    in << 0.5, -1.5, 2.0;
    CHECK((forward(net, in) - in).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("relu clamps negatives") {
    Mlp net;
    net.weights.push_back(MatX::Identity(2, 2));
    net.biases.push_back(VecX::Zero(2));
    net.activations.push_back(Activation::relu);
    VecX in(2);
    in << -1.0, 2.0;
    VecX out = forward(net, in);
    CHECK(out(0) == 0.0);
    CHECK(out(1) == 2.0);
}

TEST_CASE("batched forward matches loop oracle") {
    std::mt19937_64 rng(21);
    Mlp net = random_net(rng, {5, 9, 3}, {Activation::tanh_fn, Activation::identity});
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        VecX in = VecX::NullaryExpr(5, [&](int) { return g(rng); });
        CHECK((forward(net, in) - loop_forward(net, in)).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("linear layer weight gradient is the outer product") {
    Mlp net;
    net.weights.push_back(MatX::Zero(2, 3));
    net.weights[0] << 1, 2, 3, 4, 5, 6;
    net.biases.push_back(VecX::Zero(2));
    net.activations.push_back(Activation::identity);

    VecX x(3);
    x << 0.5, -1.0, 2.0;
    Tape tape;
    forward(net, x, tape);
    VecX gy(2);
    gy << 1.0, -2.0;
    Gradients g = backward_single(net, tape, gy);
    MatX expected = gy * x.transpose();
    CHECK((g.weights[0] - expected).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK((g.biases[0] - gy).lpNorm<Eigen::Infinity>() < 1e-14);
    // Input gradient is W' gy for a linear layer.
    CHECK((g.input.transpose() - net.weights[0].transpose() * gy).lpNorm<Eigen::Infinity>() <
          1e-14);
}

TEST_CASE("zero output gradient produces zero parameter gradients") {
    std::mt19937_64 rng(33);
    Mlp net = random_net(rng, {4, 6, 2}, {Activation::relu, Activation::identity});
    Tape tape;
    forward(net, VecX(VecX::Ones(4)), tape);
    Gradients g = backward_single(net, tape, VecX::Zero(2));
    for (const auto& w : g.weights) CHECK(w.isZero(0.0));
    for (const auto& b : g.biases) CHECK(b.isZero(0.0));
}

TEST_CASE("gradients match central finite differences") {
    std::mt19937_64 rng(4242);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> units(2, 16);
    std::uniform_int_distribution<int> depth(1, 3);
    std::uniform_int_distribution<int> act_pick(0, 1);

    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> sizes{units(rng)};
        std::vector<Activation> acts;
        const int layers = depth(rng);
        for (int l = 0; l < layers; ++l) {
            sizes.push_back(units(rng));
            acts.push_back(l + 1 == layers
                               ? Activation::identity
                               : (act_pick(rng) ? Activation::tanh_fn : Activation::relu));
        }
        Mlp net = random_net(rng, sizes, acts);
        VecX input = VecX::NullaryExpr(sizes.front(), [&](int) { return g(rng); });
        VecX dir = VecX::NullaryExpr(sizes.back(), [&](int) { return g(rng); });

        Tape tape;
        forward(net, input, tape);
        Gradients grads = backward_single(net, tape, dir);

        const double h = 1e-5;
        for (int l = 0; l < net.layer_count(); ++l) {
            for (int i = 0; i < net.weights[l].rows(); ++i) {
                for (int j = 0; j < net.weights[l].cols(); ++j) {
                    Mlp plus = net, minus = net;
                    plus.weights[l](i, j) += h;
                    minus.weights[l](i, j) -= h;
                    const double fd = (scalar_loss(plus, input, dir) -
                                       scalar_loss(minus, input, dir)) /
                                      (2.0 * h);
                    const double an = grads.weights[l](i, j);
                    const double rel =
                        std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
                    worst = std::max(worst, rel);
                }
            }
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("adam first step and invariances") {
    Mlp net;
    net.weights.push_back(MatX::Zero(1, 1));
    net.biases.push_back(VecX::Zero(1));
    net.activations.push_back(Activation::identity);
    AdamState adam = AdamState::for_net(net, 1e-3);

    Gradients g;
    g.weights.push_back(MatX::Constant(1, 1, 1.0));
    g.biases.push_back(VecX::Zero(1));
    adam_step(adam, net, g);
    CHECK(std::abs(net.weights[0](0, 0) - (-1e-3)) < 1e-9);

    // Zero gradients leave parameters untouched.
    Mlp frozen = net;
    Gradients zero;
    zero.weights.push_back(MatX::Zero(1, 1));
    zero.biases.push_back(VecX::Zero(1));
    AdamState adam2 = AdamState::for_net(net, 1e-3);
    adam_step(adam2, net, zero);
    CHECK(net.weights[0](0, 0) == frozen.weights[0](0, 0));

    // Identical gradients update identically.
    Mlp pair;
    pair.weights.push_back(MatX::Zero(2, 1));
    pair.biases.push_back(VecX::Zero(2));
    pair.activations.push_back(Activation::identity);
    AdamState adam3 = AdamState::for_net(pair, 1e-3);
    Gradients gp;
    gp.weights.push_back(MatX::Constant(2, 1, 0.37));
    gp.biases.push_back(VecX::Zero(2));
    adam_step(adam3, pair, gp);
    CHECK(pair.weights[0](0, 0) == pair.weights[0](1, 0));
}

TEST_CASE("stale tape is rejected after a parameter update") {
    std::mt19937_64 rng(8);
    Mlp net = random_net(rng, {3, 4, 2}, {Activation::relu, Activation::identity});
    Tape tape;
    forward(net, VecX(VecX::Ones(3)), tape);
    AdamState adam = AdamState::for_net(net, 1e-3);
    Gradients g = backward_single(net, tape, VecX::Ones(2));
    adam_step(adam, net, g);
    CHECK_THROWS_AS(backward_single(net, tape, VecX::Ones(2)), std::logic_error);
}

TEST_CASE("seeded training is bit-deterministic and loss decreases") {
    auto run = [](unsigned seed) {
        std::mt19937_64 rng(seed);
        Mlp net = mlp_init({2, 8, 1}, {Activation::relu, Activation::identity}, rng);
        AdamState adam = AdamState::for_net(net, 1e-2);
        std::normal_distribution<double> g(0.0, 1.0);
        MatX x(64, 2);
        VecX y(64);
        for (int i = 0; i < 64; ++i) {
            x(i, 0) = g(rng);
            x(i, 1) = g(rng);
            y(i) = 3.0 * x(i, 0) - 2.0 * x(i, 1) + 0.5;
        }
        double first = 0.0, last = 0.0;
        for (int step = 0; step < 200; ++step) {
            Tape tape;
            MatX out = forward(net, x, tape);
            MatX err = out.col(0) - y;
            double loss = err.squaredNorm() / 64.0;
            if (step == 0) first = loss;
            last = loss;
            Gradients grads = backward(net, tape, MatX(2.0 * err / 64.0));
            adam_step(adam, net, grads);
        }
        return std::make_tuple(first, last, net.weights[0]);
    };
    auto [f1, l1, w1] = run(99);
    auto [f2, l2, w2] = run(99);
    CHECK(l1 < f1);
    CHECK(l1 < 0.05);
    CHECK(w1 == w2);
}

TEST_CASE("checkpoint round trip is exact") {
    std::mt19937_64 rng(77);
    Mlp net = random_net(rng, {4, 7, 2}, {Activation::tanh_fn, Activation::identity});
    std::vector<TensorRecord> records;
    append_mlp_records(records, "net", net);
    records.push_back(scalar_record("alpha", 0.125));

    const auto path = std::filesystem::temp_directory_path() / "dpc_nn_ckpt_test.bin";
    write_checkpoint(path.string(), records);
    auto loaded = read_checkpoint(path.string());
    Mlp back = mlp_from_records(loaded, "net");
    for (int l = 0; l < net.layer_count(); ++l) {
        CHECK(back.weights[l] == net.weights[l]);
        CHECK(back.biases[l] == net.biases[l]);
        CHECK(back.activations[l] == net.activations[l]);
    }
    CHECK(require_tensor(loaded, "alpha").data[0] == 0.125);

    // Corrupt magic must be rejected.
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "NOTDPC" << "junk";
    }
    CHECK_THROWS_AS(read_checkpoint(path.string()), std::runtime_error);
    std::filesystem::remove(path);
}
