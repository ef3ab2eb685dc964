#pragma once

// Minimal dense-network core: batched forward/backward passes with explicit
// caches, Adam, and a central-difference gradient oracle.
//
// Batches are row-major in the sense that each row of a matrix is one sample.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdu/errors.hpp"

namespace cdu {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Seed = std::uint64_t;

enum class Activation { Identity, Tanh, ReLU };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
    Matrix weights;  // out_dim x in_dim
    Vector bias;     // out_dim
    Activation activation = Activation::Identity;

    Eigen::Index in_dim() const { return weights.cols(); }
    Eigen::Index out_dim() const { return weights.rows(); }
};

class DenseNetwork {
public:
    DenseNetwork() = default;
    /// Validates adjacent layer dimensions and bias lengths.
    explicit DenseNetwork(std::vector<DenseLayer> layers);

    /// Layer sizes {in, h1, ..., out}; weights ~ U(-1/sqrt(in), 1/sqrt(in)).
    static DenseNetwork random(const std::vector<Eigen::Index>& sizes,
                               const std::vector<Activation>& activations,
                               Seed seed);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& mutable_layers() { return layers_; }
    std::size_t num_layers() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }

    Eigen::Index input_dim() const;
    Eigen::Index output_dim() const;
    Eigen::Index num_params() const;

private:
    std::vector<DenseLayer> layers_;
};

/// One entry per layer, same shapes as the network's weights and biases.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> bias;

    static Gradients zeros_like(const DenseNetwork& net);
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
};

/// Per-layer inputs and pre-activations kept by `forward` for `backward`.
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> preacts;
    std::uint64_t param_fingerprint = 0;
};

struct ForwardResult {
    Matrix output;
    ForwardCache cache;
};

struct BackwardResult {
    Gradients params;  // summed over the batch
    Matrix grad_in;    // one row per sample
};

ForwardResult forward(const DenseNetwork& net, const Matrix& batch);
/// Single-sample convenience wrapper around the batched pass.
Vector forward(const DenseNetwork& net, const Vector& x, ForwardCache* cache = nullptr);

/// Inference only; no cache.
Matrix predict(const DenseNetwork& net, const Matrix& batch);

/// `grad_out` holds dL/dy per sample; rows must match the cached batch.
BackwardResult backward(const DenseNetwork& net, const ForwardCache& cache, const Matrix& grad_out);

struct LossResult {
    double loss = 0.0;
    Vector grad_wrt_x_hat;
    Vector grad_wrt_x;
};

/// (1/d) * sum_i (x_hat_i - x_i)^2 with gradients in both arguments.
LossResult mse_loss(const Vector& x_hat, const Vector& x);

struct BatchLossResult {
    double loss = 0.0;  // mean over rows of the per-row mse
    Matrix grad_wrt_x_hat;
    Matrix grad_wrt_x;
};

BatchLossResult mse_loss(const Matrix& x_hat, const Matrix& x);

/// Per-row mse without gradients.
Vector rowwise_mse(const Matrix& x_hat, const Matrix& x);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    Gradients first_moment;
    Gradients second_moment;
    std::uint64_t step = 0;

    static OptimizerState for_network(const DenseNetwork& net, AdamConfig config = {});
};

/// One Adam update in place. Throws DivergenceError naming the parameter if a
/// gradient or updated value is non-finite; `net` is left unchanged in that case.
void optimizer_step(DenseNetwork& net, const Gradients& grads, OptimizerState& state);

/// Central differences on a flat parameter vector.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& loss_fn,
                                     std::vector<double> params, double step);

Gradients finite_diff_grad(const std::function<double(const DenseNetwork&)>& loss_fn,
                           const DenseNetwork& net, double step);

std::vector<double> flatten(const DenseNetwork& net);
std::vector<double> flatten(const Gradients& grads);
/// Overwrites the parameters of `net` from a flat vector produced by `flatten`.
void unflatten(DenseNetwork& net, std::span<const double> values);

/// FNV-style mix of raw double bit patterns into `h`.
std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t h = 1469598103934665603ULL);

/// Hash over layer shapes and raw parameter bits; runs on every forward pass.
std::uint64_t param_hash(const DenseNetwork& net);

bool all_finite(const DenseNetwork& net);

}  // namespace cdu
