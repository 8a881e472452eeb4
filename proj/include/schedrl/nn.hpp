#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "schedrl/error.hpp"
#include "schedrl/kv_config.hpp"
#include "schedrl/rng.hpp"

namespace schedrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Fully connected network: ReLU on hidden layers, identity on the output.
/// `weights[l]` maps layer l (columns) to layer l+1 (rows).
struct Mlp {
    std::vector<int> layer_sizes;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    std::size_t num_layers() const { return weights.size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }

    friend bool operator==(const Mlp& a, const Mlp& b) {
        if (a.layer_sizes != b.layer_sizes) return false;
        for (std::size_t l = 0; l < a.weights.size(); ++l)
            if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
        return true;
    }
};

/// Same shapes as the parameters of the network that produced it.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static Gradients zeros_like(const Mlp& net) {
        Gradients g;
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
            g.biases.push_back(Vector::Zero(net.biases[l].size()));
        }
        return g;
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }

    bool congruent_with(const Mlp& net) const {
        if (weights.size() != net.num_layers() || biases.size() != net.num_layers()) return false;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].rows() != net.weights[l].rows() || weights[l].cols() != net.weights[l].cols() ||
                biases[l].size() != net.biases[l].size())
                return false;
        }
        return true;
    }
};

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
inline Mlp init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw ConfigError("layer_sizes needs at least an input and an output size");
    for (int s : layer_sizes)
        if (s < 1) throw ConfigError("layer sizes must be positive");
    Rng rng(seed);
    Mlp net;
    net.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const double bound = std::sqrt(6.0 / fan_in);
        Matrix w(layer_sizes[l + 1], fan_in);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
        net.weights.push_back(std::move(w));
        net.biases.push_back(Vector::Zero(layer_sizes[l + 1]));
    }
    return net;
}

/// Layer inputs kept from a batch forward pass so backward need not redo it.
/// Reused across calls with the same shapes, it stops allocating.
struct ForwardCache {
    std::vector<Matrix> inputs;  ///< inputs[l] feeds layer l
    Matrix output;
};

inline void forward_cached(const Mlp& net, const Matrix& x, ForwardCache& cache) {
    if (x.rows() != net.input_size())
        throw ShapeError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                         std::to_string(net.input_size()));
    const std::size_t layers = net.num_layers();
    cache.inputs.resize(layers);
    cache.inputs[0] = x;
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix& z = l + 1 < layers ? cache.inputs[l + 1] : cache.output;
        z.noalias() = net.weights[l] * cache.inputs[l];
        z.colwise() += net.biases[l];
        if (l + 1 < layers) z = z.cwiseMax(0.0);
    }
}

inline ForwardCache forward_cached(const Mlp& net, const Matrix& x) {
    ForwardCache cache;
    forward_cached(net, x, cache);
    return cache;
}

/// Forward pass over a batch; `x` holds one sample per column.
inline Matrix forward_batch(const Mlp& net, const Matrix& x) { return forward_cached(net, x).output; }

inline Vector forward(const Mlp& net, const Vector& x) {
    if (x.size() != net.input_size())
        throw ShapeError("input has " + std::to_string(x.size()) + " features, network expects " +
                         std::to_string(net.input_size()));
    Vector a = x;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        Vector z = net.weights[l] * a + net.biases[l];
        if (l + 1 < net.num_layers()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

/// Per-layer error terms, kept between backward passes.
struct BackwardScratch {
    std::vector<Matrix> delta;
};

/// Gradient of `sum_j upstream(j, b) * out(j, b)` over the batch with respect
/// to every parameter, summed across columns. Writes into `g`.
inline void backward_cached(const Mlp& net, const ForwardCache& cache, const Matrix& upstream, Gradients& g,
                            BackwardScratch& scratch) {
    const std::size_t layers = net.num_layers();
    if (cache.inputs.size() != layers) throw ShapeError("backward: cache does not match network depth");
    if (upstream.rows() != net.output_size() || upstream.cols() != cache.inputs[0].cols())
        throw ShapeError("backward: upstream gradient shape mismatch");

    g.weights.resize(layers);
    g.biases.resize(layers);
    auto& delta = scratch.delta;
    delta.resize(layers);
    delta[layers - 1] = upstream;
    for (std::size_t l = layers; l-- > 0;) {
        g.weights[l].noalias() = delta[l] * cache.inputs[l].transpose();
        g.biases[l] = delta[l].rowwise().sum();
        if (l > 0) {
            delta[l - 1].noalias() = net.weights[l].transpose() * delta[l];
            // ReLU derivative: 1 where the activation was positive.
            delta[l - 1] = (cache.inputs[l].array() > 0.0).select(delta[l - 1], 0.0);
        }
    }
}

inline Gradients backward_cached(const Mlp& net, const ForwardCache& cache, const Matrix& upstream) {
    Gradients g;
    BackwardScratch scratch;
    backward_cached(net, cache, upstream, g, scratch);
    return g;
}

inline Gradients backward_batch(const Mlp& net, const Matrix& x, const Matrix& upstream) {
    if (x.rows() != net.input_size()) throw ShapeError("backward: input size mismatch");
    return backward_cached(net, forward_cached(net, x), upstream);
}

inline Gradients backward(const Mlp& net, const Vector& x, const Vector& upstream) {
    if (x.size() != net.input_size()) throw ShapeError("backward: input size mismatch");
    if (upstream.size() != net.output_size()) throw ShapeError("backward: upstream gradient size mismatch");
    return backward_batch(net, Matrix(x), Matrix(upstream));
}

enum class Algorithm : std::uint8_t { Sgd, Adam };

inline constexpr double subnormal_floor = 1e-290;

/// Optimizer hyperparameters and state. Adam moments are allocated lazily on
/// the first update.
struct OptimizerState {
    Algorithm algorithm = Algorithm::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    Gradients first_moment;
    Gradients second_moment;

    static OptimizerState sgd(double lr) {
        OptimizerState s;
        s.algorithm = Algorithm::Sgd;
        s.learning_rate = lr;
        return s;
    }

    static OptimizerState adam(double lr = 1e-3) {
        OptimizerState s;
        s.learning_rate = lr;
        return s;
    }
};

/// One optimizer step. Non-finite gradients raise NumericError and leave the
/// network and optimizer untouched.
inline void apply_update(Mlp& net, const Gradients& grads, OptimizerState& opt) {
    if (!(opt.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!grads.congruent_with(net)) throw ShapeError("gradients are not shape-congruent with the network");
    if (!grads.all_finite()) throw NumericError("non-finite gradient; update aborted");

    ++opt.step;
    if (opt.algorithm == Algorithm::Sgd) {
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            net.weights[l] -= opt.learning_rate * grads.weights[l];
            net.biases[l] -= opt.learning_rate * grads.biases[l];
        }
        return;
    }

    if (!opt.first_moment.congruent_with(net)) {
        opt.first_moment = Gradients::zeros_like(net);
        opt.second_moment = Gradients::zeros_like(net);
    }
    const double t = static_cast<double>(opt.step);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
        // Moments of parameters that stop receiving gradient decay into
        // subnormals, which run orders of magnitude slower on x86.
        m = (m.array().abs() < subnormal_floor).select(0.0, m);
        v = (v.array() < subnormal_floor).select(0.0, v);
        param.array() -= opt.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
    };
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        update(net.weights[l], grads.weights[l], opt.first_moment.weights[l], opt.second_moment.weights[l]);
        update(net.biases[l], grads.biases[l], opt.first_moment.biases[l], opt.second_moment.biases[l]);
    }
}

inline Mlp clone(const Mlp& net) { return net; }

inline void copy_into(const Mlp& src, Mlp& dst) {
    if (src.layer_sizes != dst.layer_sizes) throw ShapeError("copy_into: layer sizes differ");
    for (std::size_t l = 0; l < src.num_layers(); ++l) {
        dst.weights[l] = src.weights[l];
        dst.biases[l] = src.biases[l];
    }
}

// Checkpoint text layout (whitespace separated, numbers in shortest
// round-trip decimal form):
//
//   mlp <n_sizes> <size_0> ... <size_n-1>
//   <weights of layer 0, row-major> <bias of layer 0> ...
//
//   optimizer <sgd|adam> <lr> <beta1> <beta2> <epsilon> <step> <has_moments>
//   [<first moment, same layout as parameters> <second moment>]

namespace detail {

inline void write_values(std::ostream& out, const double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) out << (i ? " " : "") << schedrl::detail::format_double(data[i]);
    out << '\n';
}

inline void write_params(std::ostream& out, const std::vector<Matrix>& w, const std::vector<Vector>& b) {
    for (std::size_t l = 0; l < w.size(); ++l) {
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = w[l];
        write_values(out, rm.data(), rm.size());
        write_values(out, b[l].data(), b[l].size());
    }
}

inline std::string next_token(std::istream& in, const char* what) {
    std::string tok;
    if (!(in >> tok)) throw ParseError(std::string("checkpoint truncated while reading ") + what);
    return tok;
}

template <typename T>
T read_number(std::istream& in, const char* what) {
    const auto tok = next_token(in, what);
    T v{};
    if (!schedrl::detail::parse_number(tok, v))
        throw ParseError(std::string("checkpoint: bad number '") + tok + "' for " + what);
    return v;
}

inline void expect(std::istream& in, const std::string& keyword) {
    const auto tok = next_token(in, keyword.c_str());
    if (tok != keyword) throw ParseError("checkpoint: expected '" + keyword + "', found '" + tok + "'");
}

inline void read_params(std::istream& in, std::vector<Matrix>& w, std::vector<Vector>& b) {
    for (std::size_t l = 0; l < w.size(); ++l) {
        for (Eigen::Index r = 0; r < w[l].rows(); ++r)
            for (Eigen::Index c = 0; c < w[l].cols(); ++c) w[l](r, c) = read_number<double>(in, "weight");
        for (Eigen::Index i = 0; i < b[l].size(); ++i) b[l](i) = read_number<double>(in, "bias");
    }
}

}  // namespace detail

inline void write_mlp(std::ostream& out, const Mlp& net) {
    out << "mlp " << net.layer_sizes.size();
    for (int s : net.layer_sizes) out << ' ' << s;
    out << '\n';
    detail::write_params(out, net.weights, net.biases);
}

inline Mlp read_mlp(std::istream& in) {
    detail::expect(in, "mlp");
    const auto n = detail::read_number<std::size_t>(in, "layer count");
    if (n < 2 || n > 64) throw ParseError("checkpoint: implausible layer count");
    std::vector<int> sizes(n);
    for (auto& s : sizes) s = detail::read_number<int>(in, "layer size");
    Mlp net = init(sizes, 0);
    detail::read_params(in, net.weights, net.biases);
    if (!net.all_finite()) throw NumericError("checkpoint contains non-finite parameters");
    return net;
}

inline void write_optimizer(std::ostream& out, const OptimizerState& opt) {
    using schedrl::detail::format_double;
    const bool has_moments = !opt.first_moment.weights.empty();
    out << "optimizer " << (opt.algorithm == Algorithm::Sgd ? "sgd" : "adam") << ' '
        << format_double(opt.learning_rate) << ' ' << format_double(opt.beta1) << ' ' << format_double(opt.beta2)
        << ' ' << format_double(opt.epsilon) << ' ' << opt.step << ' ' << (has_moments ? 1 : 0) << '\n';
    if (has_moments) {
        detail::write_params(out, opt.first_moment.weights, opt.first_moment.biases);
        detail::write_params(out, opt.second_moment.weights, opt.second_moment.biases);
    }
}

/// `shape` supplies the moment shapes.
inline OptimizerState read_optimizer(std::istream& in, const Mlp& shape) {
    detail::expect(in, "optimizer");
    OptimizerState opt;
    const auto algo = detail::next_token(in, "algorithm");
    if (algo == "sgd")
        opt.algorithm = Algorithm::Sgd;
    else if (algo == "adam")
        opt.algorithm = Algorithm::Adam;
    else
        throw ParseError("checkpoint: unknown optimizer '" + algo + "'");
    opt.learning_rate = detail::read_number<double>(in, "learning rate");
    opt.beta1 = detail::read_number<double>(in, "beta1");
    opt.beta2 = detail::read_number<double>(in, "beta2");
    opt.epsilon = detail::read_number<double>(in, "epsilon");
    opt.step = detail::read_number<std::int64_t>(in, "step");
    if (detail::read_number<int>(in, "moment flag") == 1) {
        opt.first_moment = Gradients::zeros_like(shape);
        opt.second_moment = Gradients::zeros_like(shape);
        detail::read_params(in, opt.first_moment.weights, opt.first_moment.biases);
        detail::read_params(in, opt.second_moment.weights, opt.second_moment.biases);
    }
    return opt;
}

}  // namespace schedrl::nn
