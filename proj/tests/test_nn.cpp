#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "schedrl/nn.hpp"

using namespace schedrl;
using namespace schedrl::nn;

namespace {

Mlp single_linear(double w, double b) {
    auto net = init({1, 1}, 0);
    net.weights[0](0, 0) = w;
    net.biases[0](0) = b;
    return net;
}

Vector random_vector(Rng& rng, int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = 2.0 * rng.uniform() - 1.0;
    return v;
}

/// Pointer to the k-th scalar parameter in a fixed traversal order.
double& param_at(Mlp& net, std::size_t k) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto& w = net.weights[l];
        if (k < static_cast<std::size_t>(w.size())) return w.data()[k];
        k -= static_cast<std::size_t>(w.size());
        auto& b = net.biases[l];
        if (k < static_cast<std::size_t>(b.size())) return b.data()[k];
        k -= static_cast<std::size_t>(b.size());
    }
    throw std::out_of_range("parameter index");
}

double grad_at(const Gradients& g, std::size_t k) {
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        if (k < static_cast<std::size_t>(g.weights[l].size())) return g.weights[l].data()[k];
        k -= static_cast<std::size_t>(g.weights[l].size());
        if (k < static_cast<std::size_t>(g.biases[l].size())) return g.biases[l].data()[k];
        k -= static_cast<std::size_t>(g.biases[l].size());
    }
    throw std::out_of_range("gradient index");
}

}  // namespace

TEST(Forward, ZeroNetworkGivesZeros) {
    auto net = init({4, 5, 3}, 1);
    for (auto& w : net.weights) w.setZero();
    const auto y = forward(net, Vector::Constant(4, 0.7));
    EXPECT_EQ(y, Vector::Zero(3));
}

TEST(Forward, SingleLinearLayer) {
    const auto net = single_linear(2.0, 1.0);
    EXPECT_DOUBLE_EQ(forward(net, Vector::Constant(1, 3.0))(0), 7.0);
}

TEST(Forward, ReluClampsNegativePreactivations) {
    auto net = init({1, 2, 2}, 0);
    net.weights[0] << -1.0, 2.0;
    net.biases[0].setZero();
    net.weights[1].setIdentity();
    net.biases[1].setZero();
    const auto y = forward(net, Vector::Constant(1, 1.0));
    EXPECT_DOUBLE_EQ(y(0), 0.0);
    EXPECT_DOUBLE_EQ(y(1), 2.0);
}

TEST(Forward, ShapeMismatchThrows) {
    const auto net = init({3, 2}, 0);
    EXPECT_THROW(forward(net, Vector::Zero(4)), ShapeError);
    EXPECT_THROW(forward_batch(net, Matrix::Zero(2, 5)), ShapeError);
}

TEST(Forward, BatchMatchesSingle) {
    const auto net = init({6, 8, 4, 3}, 3);
    Rng rng(4);
    Matrix x(6, 5);
    for (int c = 0; c < 5; ++c) x.col(c) = random_vector(rng, 6);
    const auto y = forward_batch(net, x);
    for (int c = 0; c < 5; ++c) EXPECT_TRUE(y.col(c).isApprox(forward(net, x.col(c)), 1e-14));
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
    const auto net = init({3, 4, 2}, 2);
    const auto g = backward(net, Vector::Constant(3, 0.5), Vector::Zero(2));
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        EXPECT_TRUE(g.weights[l].isZero(0.0));
        EXPECT_TRUE(g.biases[l].isZero(0.0));
    }
}

TEST(Backward, SingleLinearLayerOutputLoss) {
    const auto net = single_linear(2.0, 1.0);
    const auto g = backward(net, Vector::Constant(1, 3.0), Vector::Ones(1));
    EXPECT_DOUBLE_EQ(g.weights[0](0, 0), 3.0);
    EXPECT_DOUBLE_EQ(g.biases[0](0), 1.0);
}

TEST(Backward, ShapeCongruentWithParameters) {
    const auto net = init({5, 7, 3}, 9);
    const auto g = backward(net, Vector::Ones(5), Vector::Ones(3));
    EXPECT_TRUE(g.congruent_with(net));
    EXPECT_THROW(backward(net, Vector::Ones(4), Vector::Ones(3)), ShapeError);
    EXPECT_THROW(backward(net, Vector::Ones(5), Vector::Ones(2)), ShapeError);
}

// Central differences on the scalar u . forward(x) for random small nets.
TEST(Backward, MatchesFiniteDifferences) {
    Rng rng(2024);
    const std::vector<std::vector<int>> shapes{{4, 3}, {5, 16, 3}, {6, 12, 9, 4}, {3, 16, 16, 2}};
    int checked = 0;
    for (std::size_t trial = 0; trial < shapes.size(); ++trial) {
        auto net = init(shapes[trial], 100 + trial);
        for (auto& b : net.biases) b = random_vector(rng, static_cast<int>(b.size())) * 0.1;
        const auto x = random_vector(rng, net.input_size());
        const auto u = random_vector(rng, net.output_size());
        const auto g = backward(net, x, u);
        const std::size_t n = net.parameter_count();
        for (int i = 0; i < 40; ++i) {
            const auto k = static_cast<std::size_t>(rng.uniform_index(n));
            double& p = param_at(net, k);
            const double saved = p;
            const double eps = 1e-5;
            p = saved + eps;
            const double up = u.dot(forward(net, x));
            p = saved - eps;
            const double down = u.dot(forward(net, x));
            p = saved;
            const double numeric = (up - down) / (2 * eps);
            const double analytic = grad_at(g, k);
            const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            EXPECT_LT(std::abs(numeric - analytic) / scale, 1e-4) << "param " << k << " of net " << trial;
            ++checked;
        }
    }
    EXPECT_GE(checked, 100);
}

TEST(Update, SgdStep) {
    auto net = single_linear(1.0, 0.0);
    auto g = Gradients::zeros_like(net);
    g.weights[0](0, 0) = 2.0;
    auto opt = OptimizerState::sgd(0.5);
    apply_update(net, g, opt);
    EXPECT_DOUBLE_EQ(net.weights[0](0, 0), 0.0);
    EXPECT_EQ(opt.step, 1);
}

TEST(Update, ZeroGradientsLeaveParameters) {
    auto net = init({3, 4, 2}, 5);
    const auto before = net;
    auto opt = OptimizerState::adam();
    apply_update(net, Gradients::zeros_like(net), opt);
    EXPECT_EQ(net, before);
    auto sgd = OptimizerState::sgd(0.1);
    apply_update(net, Gradients::zeros_like(net), sgd);
    EXPECT_EQ(net, before);
}

TEST(Update, NonFiniteGradientAborts) {
    auto net = init({3, 2}, 5);
    const auto before = net;
    auto g = Gradients::zeros_like(net);
    g.biases[0](1) = std::numeric_limits<double>::quiet_NaN();
    auto opt = OptimizerState::adam();
    EXPECT_THROW(apply_update(net, g, opt), NumericError);
    EXPECT_EQ(net, before);
    EXPECT_EQ(opt.step, 0);
}

TEST(Update, AdamFirstStepMovesByLearningRate) {
    auto net = single_linear(1.0, 0.0);
    auto g = Gradients::zeros_like(net);
    g.weights[0](0, 0) = 3.0;
    auto opt = OptimizerState::adam(0.01);
    apply_update(net, g, opt);
    // Bias-corrected moments give m/sqrt(v) = sign(g) on the first step.
    EXPECT_NEAR(net.weights[0](0, 0), 1.0 - 0.01, 1e-9);
}

TEST(Update, SgdStepReducesSquaredError) {
    Rng rng(8);
    auto net = init({4, 8, 3}, 77);
    const auto x = random_vector(rng, 4);
    const double y = 0.3;
    const int j = 1;
    auto loss = [&] { return std::pow(forward(net, x)(j) - y, 2); };
    const double before = loss();
    Vector up = Vector::Zero(3);
    up(j) = 2.0 * (forward(net, x)(j) - y);
    auto opt = OptimizerState::sgd(1e-3);
    apply_update(net, backward(net, x, up), opt);
    EXPECT_LT(loss(), before);
}

TEST(Copy, CloneIsIndependent) {
    auto net = init({3, 4, 2}, 1);
    const auto copy = clone(net);
    const Vector x = Vector::Constant(3, 0.25);
    const auto y = forward(copy, x);
    net.weights[0].array() += 1.0;
    EXPECT_EQ(forward(copy, x), y);
}

TEST(Copy, CopyIntoMakesOutputsEqual) {
    const auto src = init({3, 4, 2}, 1);
    auto dst = init({3, 4, 2}, 2);
    copy_into(src, dst);
    const Vector x = Vector::Constant(3, -0.5);
    EXPECT_EQ(forward(src, x), forward(dst, x));
    auto other = init({3, 5, 2}, 2);
    EXPECT_THROW(copy_into(src, other), ShapeError);
}

TEST(Init, DeterministicPerSeed) {
    EXPECT_EQ(init({69, 128, 64, 25}, 11), init({69, 128, 64, 25}, 11));
    EXPECT_FALSE(init({69, 128, 64, 25}, 11) == init({69, 128, 64, 25}, 12));
}

TEST(Init, ZeroBiasesAndBoundedWeights) {
    const auto net = init({69, 128, 64, 25}, 3);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        EXPECT_TRUE(net.biases[l].isZero(0.0));
        const double bound = std::sqrt(6.0 / net.layer_sizes[l]);
        EXPECT_LE(net.weights[l].cwiseAbs().maxCoeff(), bound);
    }
}

TEST(Init, RejectsBadSizes) {
    EXPECT_THROW(init({}, 0), ConfigError);
    EXPECT_THROW(init({4}, 0), ConfigError);
    EXPECT_THROW(init({4, 0, 2}, 0), ConfigError);
}

TEST(Checkpoint, NetworkRoundTripsExactly) {
    auto net = init({5, 7, 3}, 21);
    net.biases[1](2) = 1.0 / 3.0;
    std::stringstream ss;
    write_mlp(ss, net);
    EXPECT_EQ(read_mlp(ss), net);
}

TEST(Checkpoint, OptimizerRoundTripsExactly) {
    auto net = init({4, 3}, 2);
    auto opt = OptimizerState::adam(3e-4);
    auto g = Gradients::zeros_like(net);
    g.weights[0].setConstant(0.123456789);
    apply_update(net, g, opt);
    std::stringstream ss;
    write_optimizer(ss, opt);
    const auto back = read_optimizer(ss, net);
    EXPECT_EQ(back.step, opt.step);
    EXPECT_EQ(back.learning_rate, opt.learning_rate);
    EXPECT_EQ(back.first_moment.weights[0], opt.first_moment.weights[0]);
    EXPECT_EQ(back.second_moment.weights[0], opt.second_moment.weights[0]);
}

TEST(Checkpoint, TruncatedInputThrows) {
    std::stringstream ss("mlp 3 4 5 2\n0.1 0.2");
    EXPECT_THROW(read_mlp(ss), ParseError);
    std::stringstream bad("net 2 1 1\n");
    EXPECT_THROW(read_mlp(bad), ParseError);
}
