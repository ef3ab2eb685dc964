#include "cdu/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cdu {

namespace {

void require_width(const Matrix& data, Eigen::Index dim, const char* what) {
    if (data.cols() != dim) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(dim) + " features, got " +
                         std::to_string(data.cols()));
    }
}

}  // namespace

FeatureScaler FeatureScaler::fit(const Matrix& data, double floor_fraction) {
    if (data.rows() == 0) throw DataError("cannot fit scaler on empty data");
    if (!(floor_fraction >= 0.0)) throw ConfigError("scale floor fraction must be >= 0");
    FeatureScaler s;
    s.mean = data.colwise().mean().transpose();
    s.scale.resize(data.cols());
    std::vector<double> spread;
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
        const double var = (data.col(j).array() - s.mean(j)).square().mean();
        s.scale(j) = std::sqrt(var);
        if (s.scale(j) > 1e-12) spread.push_back(s.scale(j));
    }
    double floor = 0.0;
    if (floor_fraction > 0.0 && !spread.empty()) {
        auto mid = spread.begin() + static_cast<std::ptrdiff_t>(spread.size() / 2);
        std::nth_element(spread.begin(), mid, spread.end());
        floor = floor_fraction * *mid;
    }
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
        s.scale(j) = s.scale(j) > 1e-12 ? std::max(s.scale(j), floor) : 1.0;
    }
    return s;
}

FeatureScaler FeatureScaler::identity(Eigen::Index dim) {
    return {Vector::Zero(dim), Vector::Ones(dim)};
}

Matrix FeatureScaler::transform(const Matrix& data) const {
    require_width(data, dim(), "scaler");
    return (data.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Matrix FeatureScaler::inverse_transform(const Matrix& data) const {
    require_width(data, dim(), "scaler");
    return (data.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
}

Vector FeatureScaler::transform(const Vector& x) const {
    if (x.size() != dim()) throw ShapeError("scaler: dimension mismatch");
    return ((x - mean).array() / scale.array()).matrix();
}

Vector FeatureScaler::inverse_transform(const Vector& x) const {
    if (x.size() != dim()) throw ShapeError("scaler: dimension mismatch");
    return (x.array() * scale.array()).matrix() + mean;
}

std::vector<Eigen::Index> AEConfig::encoder_widths(Eigen::Index input_dim) const {
    if (!hidden.empty()) return hidden;
    const Eigen::Index first = std::max<Eigen::Index>(8, input_dim / 2);
    const Eigen::Index latent = std::min<Eigen::Index>(std::max<Eigen::Index>(4, input_dim / 4), input_dim - 1);
    return {first, latent};
}

AutoencoderModel::AutoencoderModel(DenseNetwork encoder, DenseNetwork decoder, FeatureScaler scaler, bool frozen)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)), scaler_(std::move(scaler)), frozen_(frozen) {
    if (encoder_.empty() || decoder_.empty()) throw ShapeError("autoencoder needs non-empty encoder and decoder");
    if (encoder_.output_dim() != decoder_.input_dim()) throw ShapeError("encoder output != decoder input");
    if (decoder_.output_dim() != encoder_.input_dim()) throw ShapeError("decoder output != encoder input");
    if (scaler_.dim() != encoder_.input_dim() || scaler_.scale.size() != scaler_.dim()) {
        throw ShapeError("feature scaler dimension mismatch");
    }
    if (latent_dim() >= input_dim()) {
        throw ShapeError("autoencoder must be undercomplete (latent " + std::to_string(latent_dim()) +
                         " >= input " + std::to_string(input_dim()) + ")");
    }
}

DenseNetwork& AutoencoderModel::mutable_encoder() {
    if (frozen_) throw ContractError("autoencoder is frozen");
    return encoder_;
}

DenseNetwork& AutoencoderModel::mutable_decoder() {
    if (frozen_) throw ContractError("autoencoder is frozen");
    return decoder_;
}

std::uint64_t AutoencoderModel::param_hash() const {
    std::uint64_t h = cdu::param_hash(encoder_);
    h ^= cdu::param_hash(decoder_) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h = hash_doubles({scaler_.mean.data(), static_cast<std::size_t>(scaler_.mean.size())}, h);
    h = hash_doubles({scaler_.scale.data(), static_cast<std::size_t>(scaler_.scale.size())}, h);
    return h;
}

Matrix AutoencoderModel::reconstruct_standardized(const Matrix& z) const {
    return predict(decoder_, predict(encoder_, z));
}

AETrainResult train_autoencoder_detailed(const Matrix& data, const AEConfig& config, Seed seed) {
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (n < static_cast<Eigen::Index>(std::max<std::size_t>(config.min_samples, 1))) {
        throw DataError("autoencoder training needs at least " + std::to_string(config.min_samples) +
                        " samples, got " + std::to_string(n));
    }
    if (!data.allFinite()) throw DataError("autoencoder training data contains non-finite values");
    if (config.batch_size == 0) throw ConfigError("batch_size must be positive");

    const auto widths = config.encoder_widths(d);
    if (widths.empty() || widths.back() >= d) throw ConfigError("latent size must be smaller than input size");

    std::vector<Eigen::Index> enc_sizes{d};
    enc_sizes.insert(enc_sizes.end(), widths.begin(), widths.end());
    std::vector<Eigen::Index> dec_sizes(enc_sizes.rbegin(), enc_sizes.rend());
    std::vector<Activation> enc_act(widths.size(), config.hidden_activation);
    std::vector<Activation> dec_act(widths.size(), config.hidden_activation);
    dec_act.back() = Activation::Identity;

    std::mt19937_64 rng(seed);
    DenseNetwork encoder = DenseNetwork::random(enc_sizes, enc_act, rng());
    DenseNetwork decoder = DenseNetwork::random(dec_sizes, dec_act, rng());
    FeatureScaler scaler = config.standardize ? FeatureScaler::fit(data, config.scale_floor) : FeatureScaler::identity(d);
    const Matrix z = scaler.transform(data);

    auto full_loss = [&](const DenseNetwork& e, const DenseNetwork& dn) {
        return mse_loss(predict(dn, predict(e, z)), z).loss;
    };

    AETrainResult result;
    result.initial_loss = full_loss(encoder, decoder);
    double best = result.initial_loss;
    DenseNetwork best_enc = encoder;
    DenseNetwork best_dec = decoder;
    std::size_t since_improvement = 0;

    auto enc_state = OptimizerState::for_network(encoder, config.adam);
    auto dec_state = OptimizerState::for_network(decoder, config.adam);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const auto bs = static_cast<Eigen::Index>(config.batch_size);
    Matrix batch;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += bs) {
            const Eigen::Index m = std::min(bs, n - start);
            batch.resize(m, d);
            for (Eigen::Index i = 0; i < m; ++i) batch.row(i) = z.row(order[static_cast<std::size_t>(start + i)]);
            auto enc_fwd = forward(encoder, batch);
            auto dec_fwd = forward(decoder, enc_fwd.output);
            const auto loss = mse_loss(dec_fwd.output, batch);
            if (!std::isfinite(loss.loss)) throw DivergenceError("autoencoder loss became non-finite");
            auto dec_back = backward(decoder, dec_fwd.cache, loss.grad_wrt_x_hat);
            auto enc_back = backward(encoder, enc_fwd.cache, dec_back.grad_in);
            optimizer_step(decoder, dec_back.params, dec_state);
            optimizer_step(encoder, enc_back.params, enc_state);
        }
        const double loss = full_loss(encoder, decoder);
        if (!std::isfinite(loss)) throw DivergenceError("autoencoder loss became non-finite");
        result.loss_history.push_back(loss);
        ++result.epochs_run;
        if (loss < best - config.min_improvement) {
            best = loss;
            best_enc = encoder;
            best_dec = decoder;
            since_improvement = 0;
        } else {
            if (loss < best) {
                best = loss;
                best_enc = encoder;
                best_dec = decoder;
            }
            if (++since_improvement >= config.patience) break;
        }
    }

    result.final_loss = best;
    result.model = AutoencoderModel(std::move(best_enc), std::move(best_dec), std::move(scaler), true);
    return result;
}

AutoencoderModel train_autoencoder(const Matrix& data, const AEConfig& config, Seed seed) {
    return train_autoencoder_detailed(data, config, seed).model;
}

Vector reconstruct(const AutoencoderModel& model, const Vector& x) {
    if (x.size() != model.input_dim()) throw ShapeError("reconstruct: dimension mismatch");
    return reconstruct(model, Matrix(x.transpose())).row(0).transpose();
}

Matrix reconstruct(const AutoencoderModel& model, const Matrix& data) {
    require_width(data, model.input_dim(), "reconstruct");
    const auto& s = model.scaler();
    return s.inverse_transform(model.reconstruct_standardized(s.transform(data)));
}

Vector reconstruction_losses(const AutoencoderModel& model, const Matrix& data) {
    require_width(data, model.input_dim(), "reconstruction_loss");
    const Matrix z = model.scaler().transform(data);
    return rowwise_mse(model.reconstruct_standardized(z), z);
}

double reconstruction_loss(const AutoencoderModel& model, const Matrix& data) {
    if (data.rows() == 0) throw DataError("reconstruction_loss: empty data set");
    return reconstruction_losses(model, data).mean();
}

}  // namespace cdu
