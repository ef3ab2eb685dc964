#pragma once

// Corrective input map f fitted on post-drift samples so that the frozen
// autoencoder reconstructs f(x) well, with an L1 pull of f(x) towards x:
//
//   J(f) = 1/|D*| sum_j [ mse(ae(f(x_j)), f(x_j)) + C * |f(x_j) - x_j|_1 ]
//
// Both loss and penalty are measured in the autoencoder's standardized
// coordinates, so C is independent of the raw feature units.

#include <vector>

#include "cdu/autoencoder.hpp"

namespace cdu {

enum class MapKind { Affine, MLP };

std::string to_string(MapKind kind);
MapKind map_kind_from_string(const std::string& name);

struct UnlearnConfig {
    MapKind kind = MapKind::Affine;
    double regularization = 0.01;  // C
    std::size_t batch_size = 32;
    std::size_t max_epochs = 300;
    std::size_t patience = 20;
    double min_improvement = 1e-6;
    std::size_t min_samples = 50;
    Eigen::Index mlp_hidden = 0;  // 0 selects the input dimension
    AdamConfig adam{.learning_rate = 1e-2};
};

/// f(x) = unscale(g(scale(x))) for MLP maps with g(z) = z + body(z);
/// affine maps are stored directly as A x + b in raw feature units.
class UnlearnMap {
public:
    UnlearnMap() = default;
    UnlearnMap(MapKind kind, DenseNetwork body, FeatureScaler scaler, double regularization, std::size_t fitted_on);

    static UnlearnMap affine(const Matrix& weights, const Vector& bias);

    MapKind kind() const { return kind_; }
    const DenseNetwork& body() const { return body_; }
    DenseNetwork& mutable_body() { return body_; }
    const FeatureScaler& scaler() const { return scaler_; }
    double regularization() const { return regularization_; }
    std::size_t fitted_on() const { return fitted_on_; }
    Eigen::Index dim() const { return body_.input_dim(); }

    /// Affine maps only.
    const Matrix& weights() const;
    const Vector& bias() const;

private:
    MapKind kind_ = MapKind::Affine;
    DenseNetwork body_;
    FeatureScaler scaler_;
    double regularization_ = 0.0;
    std::size_t fitted_on_ = 0;
};

/// A = I, b = 0.
UnlearnMap init_identity(Eigen::Index dim);

Vector apply_unlearner(const UnlearnMap& f, const Vector& x);
Matrix apply_unlearner(const UnlearnMap& f, const Matrix& data);

/// sign(f_out - x) with sign(0) = 0.
Vector l1_penalty_grad(const Vector& f_out, const Vector& x);

struct ObjectiveValue {
    double total = 0.0;
    double reconstruction = 0.0;
    double penalty = 0.0;  // already multiplied by C
    Gradients grads;       // w.r.t. f.body(); empty unless requested
};

ObjectiveValue unlearn_objective_detailed(const AutoencoderModel& ae, const UnlearnMap& f, const Matrix& dstar,
                                          double regularization, bool with_gradient);
double unlearn_objective(const AutoencoderModel& ae, const UnlearnMap& f, const Matrix& dstar, double regularization);

struct UnlearnFitResult {
    UnlearnMap map;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    std::vector<double> objective_history;
    std::size_t epochs_run = 0;
};

/// Minimizes J from the identity with Adam on the L1 subgradient, returning the
/// best full-data iterate. The autoencoder must be frozen and is never modified.
UnlearnFitResult fit_unlearner_detailed(const AutoencoderModel& ae, const Matrix& dstar, const UnlearnConfig& config,
                                        Seed seed);
UnlearnMap fit_unlearner(const AutoencoderModel& ae, const Matrix& dstar, const UnlearnConfig& config, Seed seed);

}  // namespace cdu
