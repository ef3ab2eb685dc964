#include "cdu/unlearner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cdu {

namespace {

Matrix signum(const Matrix& m) {
    return m.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Matrix scale_cols(const Matrix& m, const Vector& s) {
    return m.array().rowwise() * s.transpose().array();
}

Matrix divide_cols(const Matrix& m, const Vector& s) {
    return m.array().rowwise() / s.transpose().array();
}

void check_map(const UnlearnMap& f, const AutoencoderModel& ae, const Matrix& data) {
    if (f.dim() != ae.input_dim()) throw ShapeError("unlearn map and autoencoder dimensions differ");
    if (data.cols() != ae.input_dim()) throw ShapeError("D* width does not match autoencoder input");
    if (data.rows() == 0) throw DataError("D* is empty");
}

// Evaluates J for a body that acts in `scaler` coordinates. Shared by the public
// objective (scaler = f's own) and by fitting (scaler = the autoencoder's).
ObjectiveValue evaluate(const AutoencoderModel& ae, MapKind kind, const DenseNetwork& body,
                        const FeatureScaler& scaler, const Matrix& data, double c, bool with_gradient) {
    const double n = static_cast<double>(data.rows());
    const Matrix zf = scaler.transform(data);
    auto body_fwd = forward(body, zf);
    Matrix gz = std::move(body_fwd.output);
    if (kind == MapKind::MLP) gz += zf;
    const Matrix y = scaler.inverse_transform(gz);

    const auto& ae_scaler = ae.scaler();
    const Matrix zy = ae_scaler.transform(y);
    const Matrix zx = ae_scaler.transform(data);
    auto enc_fwd = forward(ae.encoder(), zy);
    auto dec_fwd = forward(ae.decoder(), enc_fwd.output);
    const auto loss = mse_loss(dec_fwd.output, zy);
    const Matrix diff = zy - zx;

    ObjectiveValue out;
    out.reconstruction = loss.loss;
    out.penalty = c * diff.cwiseAbs().sum() / n;
    out.total = out.reconstruction + out.penalty;
    if (!with_gradient) return out;

    const auto dec_back = backward(ae.decoder(), dec_fwd.cache, loss.grad_wrt_x_hat);
    const auto enc_back = backward(ae.encoder(), enc_fwd.cache, dec_back.grad_in);
    // f(x) enters both arguments of the loss and the penalty.
    Matrix grad_zy = enc_back.grad_in + loss.grad_wrt_x + (c / n) * signum(diff);
    const Matrix grad_gz = scale_cols(divide_cols(grad_zy, ae_scaler.scale), scaler.scale);
    out.grads = backward(body, body_fwd.cache, grad_gz).params;
    return out;
}

DenseNetwork identity_affine_body(Eigen::Index dim) {
    DenseLayer layer{Matrix::Identity(dim, dim), Vector::Zero(dim), Activation::Identity};
    return DenseNetwork({layer});
}

DenseNetwork zero_residual_body(Eigen::Index dim, Eigen::Index hidden, Seed seed) {
    auto net = DenseNetwork::random({dim, hidden, dim}, {Activation::Tanh, Activation::Identity}, seed);
    net.mutable_layers().back().weights.setZero();
    net.mutable_layers().back().bias.setZero();
    return net;
}

// A_raw = diag(s) A diag(1/s), b_raw = s*b + mu - A_raw mu.
DenseNetwork affine_to_raw(const DenseNetwork& body, const FeatureScaler& scaler) {
    const auto& layer = body.layers().front();
    Matrix a = layer.weights;
    a = scaler.scale.asDiagonal() * a * scaler.scale.cwiseInverse().asDiagonal();
    Vector b = scaler.scale.cwiseProduct(layer.bias) + scaler.mean - a * scaler.mean;
    return DenseNetwork({DenseLayer{std::move(a), std::move(b), Activation::Identity}});
}

}  // namespace

std::string to_string(MapKind kind) {
    return kind == MapKind::Affine ? "affine" : "mlp";
}

MapKind map_kind_from_string(const std::string& name) {
    if (name == "affine") return MapKind::Affine;
    if (name == "mlp") return MapKind::MLP;
    throw ConfigError("unknown unlearn map kind '" + name + "'");
}

UnlearnMap::UnlearnMap(MapKind kind, DenseNetwork body, FeatureScaler scaler, double regularization,
                       std::size_t fitted_on)
    : kind_(kind), body_(std::move(body)), scaler_(std::move(scaler)), regularization_(regularization),
      fitted_on_(fitted_on) {
    if (body_.empty()) throw ShapeError("unlearn map needs a body");
    if (body_.input_dim() != body_.output_dim()) throw ShapeError("unlearn map must be X -> X");
    if (scaler_.dim() != body_.input_dim()) throw ShapeError("unlearn map scaler dimension mismatch");
    if (!(regularization_ >= 0.0)) throw ConfigError("regularization strength must be >= 0");
    if (kind_ == MapKind::Affine &&
        (body_.num_layers() != 1 || body_.layers().front().activation != Activation::Identity)) {
        throw ShapeError("affine map must be a single identity-activation layer");
    }
}

UnlearnMap UnlearnMap::affine(const Matrix& weights, const Vector& bias) {
    if (weights.rows() != weights.cols()) throw ShapeError("affine map weights must be square");
    DenseNetwork body({DenseLayer{weights, bias, Activation::Identity}});
    return UnlearnMap(MapKind::Affine, std::move(body), FeatureScaler::identity(weights.rows()), 0.0, 0);
}

const Matrix& UnlearnMap::weights() const {
    if (kind_ != MapKind::Affine) throw ContractError("weights() is defined for affine maps only");
    return body_.layers().front().weights;
}

const Vector& UnlearnMap::bias() const {
    if (kind_ != MapKind::Affine) throw ContractError("bias() is defined for affine maps only");
    return body_.layers().front().bias;
}

UnlearnMap init_identity(Eigen::Index dim) {
    if (dim < 1) throw ShapeError("unlearn map dimension must be >= 1");
    return UnlearnMap::affine(Matrix::Identity(dim, dim), Vector::Zero(dim));
}

Vector apply_unlearner(const UnlearnMap& f, const Vector& x) {
    if (x.size() != f.dim()) throw ShapeError("apply_unlearner: dimension mismatch");
    if (f.kind() == MapKind::Affine) return f.weights() * x + f.bias();
    return apply_unlearner(f, Matrix(x.transpose())).row(0).transpose();
}

Matrix apply_unlearner(const UnlearnMap& f, const Matrix& data) {
    if (data.cols() != f.dim()) throw ShapeError("apply_unlearner: dimension mismatch");
    if (f.kind() == MapKind::Affine) {
        Matrix out = data * f.weights().transpose();
        out.rowwise() += f.bias().transpose();
        return out;
    }
    const Matrix z = f.scaler().transform(data);
    return f.scaler().inverse_transform(Matrix(predict(f.body(), z) + z));
}

Vector l1_penalty_grad(const Vector& f_out, const Vector& x) {
    if (f_out.size() != x.size()) throw ShapeError("l1_penalty_grad: length mismatch");
    return signum(f_out - x);
}

ObjectiveValue unlearn_objective_detailed(const AutoencoderModel& ae, const UnlearnMap& f, const Matrix& dstar,
                                          double regularization, bool with_gradient) {
    check_map(f, ae, dstar);
    if (!(regularization >= 0.0)) throw ConfigError("regularization strength must be >= 0");
    return evaluate(ae, f.kind(), f.body(), f.scaler(), dstar, regularization, with_gradient);
}

double unlearn_objective(const AutoencoderModel& ae, const UnlearnMap& f, const Matrix& dstar, double regularization) {
    return unlearn_objective_detailed(ae, f, dstar, regularization, false).total;
}

UnlearnFitResult fit_unlearner_detailed(const AutoencoderModel& ae, const Matrix& dstar, const UnlearnConfig& config,
                                        Seed seed) {
    if (!ae.frozen()) throw ContractError("fit_unlearner requires a frozen autoencoder");
    if (dstar.cols() != ae.input_dim()) throw ShapeError("D* width does not match autoencoder input");
    if (dstar.rows() < static_cast<Eigen::Index>(std::max<std::size_t>(config.min_samples, 1))) {
        throw DataError("D* has " + std::to_string(dstar.rows()) + " samples, need at least " +
                        std::to_string(config.min_samples));
    }
    if (!dstar.allFinite()) throw DataError("D* contains non-finite values");
    if (!(config.regularization >= 0.0)) throw ConfigError("regularization strength must be >= 0");
    if (config.batch_size == 0) throw ConfigError("batch_size must be positive");

    const Eigen::Index d = dstar.cols();
    const Eigen::Index n = dstar.rows();
    const double c = config.regularization;
    const FeatureScaler& scaler = ae.scaler();
    std::mt19937_64 rng(seed);

    DenseNetwork body = config.kind == MapKind::Affine
                            ? identity_affine_body(d)
                            : zero_residual_body(d, config.mlp_hidden > 0 ? config.mlp_hidden : d, rng());

    UnlearnFitResult result;
    result.initial_objective = evaluate(ae, config.kind, body, scaler, dstar, c, false).total;
    if (!std::isfinite(result.initial_objective)) throw DivergenceError("unlearn objective is non-finite at identity");
    double best = result.initial_objective;
    DenseNetwork best_body = body;
    bool moved = false;
    std::size_t since_improvement = 0;

    auto state = OptimizerState::for_network(body, config.adam);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const auto bs = static_cast<Eigen::Index>(config.batch_size);
    Matrix batch;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += bs) {
            const Eigen::Index m = std::min(bs, n - start);
            batch.resize(m, d);
            for (Eigen::Index i = 0; i < m; ++i) batch.row(i) = dstar.row(order[static_cast<std::size_t>(start + i)]);
            auto step = evaluate(ae, config.kind, body, scaler, batch, c, true);
            if (!std::isfinite(step.total)) throw DivergenceError("unlearn objective became non-finite");
            optimizer_step(body, step.grads, state);
        }
        const double obj = evaluate(ae, config.kind, body, scaler, dstar, c, false).total;
        if (!std::isfinite(obj)) throw DivergenceError("unlearn objective became non-finite");
        result.objective_history.push_back(obj);
        ++result.epochs_run;
        const bool significant = obj < best - config.min_improvement;
        if (obj < best) {
            best = obj;
            best_body = body;
            moved = true;
        }
        if (significant) {
            since_improvement = 0;
        } else if (++since_improvement >= config.patience) {
            break;
        }
    }

    result.final_objective = best;
    const auto fitted_on = static_cast<std::size_t>(n);
    if (config.kind == MapKind::Affine) {
        // An unimproved fit stays the exact identity rather than a rescaled copy of it.
        DenseNetwork raw = moved ? affine_to_raw(best_body, scaler) : identity_affine_body(d);
        result.map = UnlearnMap(MapKind::Affine, std::move(raw), FeatureScaler::identity(d), c,
                                fitted_on);
    } else {
        result.map = UnlearnMap(MapKind::MLP, std::move(best_body), scaler, c, fitted_on);
    }
    return result;
}

UnlearnMap fit_unlearner(const AutoencoderModel& ae, const Matrix& dstar, const UnlearnConfig& config, Seed seed) {
    return fit_unlearner_detailed(ae, dstar, config, seed).map;
}

}  // namespace cdu
