#include "cdu/nncore.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

namespace cdu {

namespace {

Matrix activate(const Matrix& z, Activation a) {
    switch (a) {
        case Activation::Identity:
            return z;
        case Activation::Tanh:
            return z.array().tanh().matrix();
        case Activation::ReLU:
            return z.cwiseMax(0.0);
    }
    return z;
}

// Derivative of the activation evaluated at the pre-activation.
Matrix activation_grad(const Matrix& z, Activation a) {
    switch (a) {
        case Activation::Identity:
            return Matrix::Ones(z.rows(), z.cols());
        case Activation::Tanh: {
            const Eigen::ArrayXXd t = z.array().tanh();
            return (1.0 - t * t).matrix();
        }
        case Activation::ReLU:
            return (z.array() > 0.0).cast<double>().matrix();
    }
    return Matrix::Ones(z.rows(), z.cols());
}

void check_finite(const Matrix& m, std::size_t layer, const char* what) {
    if (!m.allFinite()) {
        std::ostringstream os;
        os << "non-finite " << what << " in layer " << layer;
        throw DivergenceError(os.str());
    }
}

void check_finite(const Vector& v, std::size_t layer, const char* what) {
    if (!v.allFinite()) {
        std::ostringstream os;
        os << "non-finite " << what << " in layer " << layer;
        throw DivergenceError(os.str());
    }
}

void check_grad_shapes(const DenseNetwork& net, const Gradients& g) {
    if (g.weights.size() != net.num_layers() || g.bias.size() != net.num_layers()) {
        throw ShapeError("gradient set has wrong number of layers");
    }
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        const auto& l = net.layers()[i];
        if (g.weights[i].rows() != l.weights.rows() || g.weights[i].cols() != l.weights.cols() ||
            g.bias[i].size() != l.bias.size()) {
            throw ShapeError("gradient shape mismatch in layer " + std::to_string(i));
        }
    }
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity:
            return "identity";
        case Activation::Tanh:
            return "tanh";
        case Activation::ReLU:
            return "relu";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::ReLU;
    throw ConfigError("unknown activation '" + name + "'");
}

DenseNetwork::DenseNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weights.rows() != layers_[i].bias.size()) {
            throw ShapeError("layer " + std::to_string(i) + ": weight rows != bias length");
        }
        if (i + 1 < layers_.size() && layers_[i].out_dim() != layers_[i + 1].in_dim()) {
            throw ShapeError("layer " + std::to_string(i) + " output does not match layer " +
                             std::to_string(i + 1) + " input");
        }
    }
}

DenseNetwork DenseNetwork::random(const std::vector<Eigen::Index>& sizes,
                                  const std::vector<Activation>& activations, Seed seed) {
    if (sizes.size() < 2 || activations.size() != sizes.size() - 1) {
        throw ShapeError("need n+1 layer sizes for n activations");
    }
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        if (sizes[i] <= 0 || sizes[i + 1] <= 0) throw ShapeError("layer sizes must be positive");
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        DenseLayer layer;
        layer.weights.resize(sizes[i + 1], sizes[i]);
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = dist(rng);
        layer.bias.resize(sizes[i + 1]);
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = dist(rng);
        layer.activation = activations[i];
        layers.push_back(std::move(layer));
    }
    return DenseNetwork(std::move(layers));
}

Eigen::Index DenseNetwork::input_dim() const {
    return layers_.empty() ? 0 : layers_.front().in_dim();
}

Eigen::Index DenseNetwork::output_dim() const {
    return layers_.empty() ? 0 : layers_.back().out_dim();
}

Eigen::Index DenseNetwork::num_params() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

Gradients Gradients::zeros_like(const DenseNetwork& net) {
    Gradients g;
    for (const auto& l : net.layers()) {
        g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
        g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.weights.size() != weights.size()) throw ShapeError("gradient sets differ in depth");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] += other.weights[i];
        bias[i] += other.bias[i];
    }
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] *= s;
        bias[i] *= s;
    }
    return *this;
}

ForwardResult forward(const DenseNetwork& net, const Matrix& batch) {
    if (net.empty()) throw ContractError("forward on empty network");
    if (batch.cols() != net.input_dim()) {
        throw ShapeError("input has " + std::to_string(batch.cols()) + " features, network expects " +
                         std::to_string(net.input_dim()));
    }
    ForwardResult result;
    result.cache.inputs.reserve(net.num_layers());
    result.cache.preacts.reserve(net.num_layers());
    Matrix h = batch;
    for (const auto& layer : net.layers()) {
        Matrix z = h * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        result.cache.inputs.push_back(std::move(h));
        h = activate(z, layer.activation);
        result.cache.preacts.push_back(std::move(z));
    }
    result.output = std::move(h);
    result.cache.param_fingerprint = param_hash(net);
    return result;
}

Vector forward(const DenseNetwork& net, const Vector& x, ForwardCache* cache) {
    auto r = forward(net, Matrix(x.transpose()));
    if (cache) *cache = std::move(r.cache);
    return r.output.row(0).transpose();
}

Matrix predict(const DenseNetwork& net, const Matrix& batch) {
    if (net.empty()) throw ContractError("predict on empty network");
    if (batch.cols() != net.input_dim()) {
        throw ShapeError("input has " + std::to_string(batch.cols()) + " features, network expects " +
                         std::to_string(net.input_dim()));
    }
    Matrix h = batch;
    for (const auto& layer : net.layers()) {
        Matrix z = h * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        h = activate(z, layer.activation);
    }
    return h;
}

BackwardResult backward(const DenseNetwork& net, const ForwardCache& cache, const Matrix& grad_out) {
    if (cache.inputs.size() != net.num_layers() || cache.preacts.size() != net.num_layers() ||
        cache.param_fingerprint != param_hash(net)) {
        throw ContractError("forward cache does not belong to this network state");
    }
    if (grad_out.cols() != net.output_dim() || grad_out.rows() != cache.preacts.back().rows()) {
        throw ShapeError("grad_out shape does not match forward output");
    }
    BackwardResult result;
    result.params = Gradients::zeros_like(net);
    Matrix delta = grad_out;
    for (std::size_t k = net.num_layers(); k-- > 0;) {
        const auto& layer = net.layers()[k];
        if (layer.activation != Activation::Identity) {
            delta = delta.cwiseProduct(activation_grad(cache.preacts[k], layer.activation));
        }
        result.params.weights[k].noalias() = delta.transpose() * cache.inputs[k];
        result.params.bias[k] = delta.colwise().sum().transpose();
        delta = delta * layer.weights;
    }
    result.grad_in = std::move(delta);
    return result;
}

LossResult mse_loss(const Vector& x_hat, const Vector& x) {
    if (x_hat.size() != x.size()) throw ShapeError("mse_loss: length mismatch");
    if (x.size() == 0) throw ShapeError("mse_loss: empty vectors");
    const double d = static_cast<double>(x.size());
    const Vector diff = x_hat - x;
    LossResult r;
    r.loss = diff.squaredNorm() / d;
    r.grad_wrt_x_hat = (2.0 / d) * diff;
    r.grad_wrt_x = -r.grad_wrt_x_hat;
    return r;
}

BatchLossResult mse_loss(const Matrix& x_hat, const Matrix& x) {
    if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw ShapeError("mse_loss: shape mismatch");
    if (x.size() == 0) throw ShapeError("mse_loss: empty batch");
    const double n = static_cast<double>(x.rows());
    const double d = static_cast<double>(x.cols());
    const Matrix diff = x_hat - x;
    BatchLossResult r;
    r.loss = diff.squaredNorm() / (n * d);
    r.grad_wrt_x_hat = (2.0 / (n * d)) * diff;
    r.grad_wrt_x = -r.grad_wrt_x_hat;
    return r;
}

Vector rowwise_mse(const Matrix& x_hat, const Matrix& x) {
    if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw ShapeError("rowwise_mse: shape mismatch");
    return (x_hat - x).rowwise().squaredNorm() / static_cast<double>(x.cols());
}

OptimizerState OptimizerState::for_network(const DenseNetwork& net, AdamConfig config) {
    OptimizerState s;
    s.config = config;
    s.first_moment = Gradients::zeros_like(net);
    s.second_moment = Gradients::zeros_like(net);
    return s;
}

void optimizer_step(DenseNetwork& net, const Gradients& grads, OptimizerState& state) {
    if (!(state.config.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
    check_grad_shapes(net, grads);
    check_grad_shapes(net, state.first_moment);
    check_grad_shapes(net, state.second_moment);
    for (std::size_t i = 0; i < grads.weights.size(); ++i) {
        check_finite(grads.weights[i], i, "weight gradient");
        check_finite(grads.bias[i], i, "bias gradient");
    }

    const auto& c = state.config;
    const double t = static_cast<double>(state.step + 1);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    Gradients m = state.first_moment;
    Gradients v = state.second_moment;
    DenseNetwork updated = net;
    auto update = [&](auto& param, auto& mom1, auto& mom2, const auto& g) {
        mom1 = c.beta1 * mom1 + (1.0 - c.beta1) * g;
        mom2 = c.beta2 * mom2 + (1.0 - c.beta2) * g.cwiseProduct(g);
        param.array() -= c.learning_rate * (mom1.array() / correction1) /
                         ((mom2.array() / correction2).sqrt() + c.epsilon);
    };
    for (std::size_t i = 0; i < grads.weights.size(); ++i) {
        auto& layer = updated.mutable_layers()[i];
        update(layer.weights, m.weights[i], v.weights[i], grads.weights[i]);
        update(layer.bias, m.bias[i], v.bias[i], grads.bias[i]);
        check_finite(layer.weights, i, "weights after update");
        check_finite(layer.bias, i, "bias after update");
    }
    net = std::move(updated);
    state.first_moment = std::move(m);
    state.second_moment = std::move(v);
    ++state.step;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& loss_fn,
                                     std::vector<double> params, double step) {
    if (!(step > 0.0)) throw ContractError("finite difference step must be positive");
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + step;
        const double up = loss_fn(params);
        params[i] = orig - step;
        const double down = loss_fn(params);
        params[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

Gradients finite_diff_grad(const std::function<double(const DenseNetwork&)>& loss_fn,
                           const DenseNetwork& net, double step) {
    DenseNetwork probe = net;
    auto flat = finite_diff_grad(
        [&](std::span<const double> p) {
            unflatten(probe, p);
            return loss_fn(probe);
        },
        flatten(net), step);
    Gradients g = Gradients::zeros_like(net);
    std::size_t k = 0;
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
        for (Eigen::Index j = 0; j < g.weights[i].size(); ++j) g.weights[i].data()[j] = flat[k++];
        for (Eigen::Index j = 0; j < g.bias[i].size(); ++j) g.bias[i].data()[j] = flat[k++];
    }
    return g;
}

std::vector<double> flatten(const DenseNetwork& net) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(net.num_params()));
    for (const auto& l : net.layers()) {
        out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

std::vector<double> flatten(const Gradients& grads) {
    std::vector<double> out;
    for (std::size_t i = 0; i < grads.weights.size(); ++i) {
        out.insert(out.end(), grads.weights[i].data(), grads.weights[i].data() + grads.weights[i].size());
        out.insert(out.end(), grads.bias[i].data(), grads.bias[i].data() + grads.bias[i].size());
    }
    return out;
}

void unflatten(DenseNetwork& net, std::span<const double> values) {
    if (static_cast<Eigen::Index>(values.size()) != net.num_params()) {
        throw ShapeError("flat parameter vector has wrong length");
    }
    std::size_t k = 0;
    for (auto& l : net.mutable_layers()) {
        std::memcpy(l.weights.data(), values.data() + k, sizeof(double) * l.weights.size());
        k += l.weights.size();
        std::memcpy(l.bias.data(), values.data() + k, sizeof(double) * l.bias.size());
        k += l.bias.size();
    }
}

std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t h) {
    for (double v : values) {
        std::uint64_t w;
        std::memcpy(&w, &v, sizeof(w));
        h ^= w;
        h *= 1099511628211ULL;
        h ^= h >> 29;
    }
    return h;
}

std::uint64_t param_hash(const DenseNetwork& net) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& l : net.layers()) {
        const double shape[3] = {static_cast<double>(l.weights.rows()), static_cast<double>(l.weights.cols()),
                                 static_cast<double>(static_cast<int>(l.activation))};
        h = hash_doubles(shape, h);
        h = hash_doubles({l.weights.data(), static_cast<std::size_t>(l.weights.size())}, h);
        h = hash_doubles({l.bias.data(), static_cast<std::size_t>(l.bias.size())}, h);
    }
    return h;
}

bool all_finite(const DenseNetwork& net) {
    for (const auto& l : net.layers()) {
        if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

}  // namespace cdu
