#pragma once

#include <cstdint>
#include <vector>

#include "cdu/nncore.hpp"

namespace cdu {

/// Per-feature z-score transform. Zero-variance features pass through with scale 1.
struct FeatureScaler {
    Vector mean;
    Vector scale;

    /// Non-constant features get scale max(sd, floor_fraction * median sd), so a
    /// nearly constant feature cannot dominate standardized losses.
    static FeatureScaler fit(const Matrix& data, double floor_fraction = 0.0);
    static FeatureScaler identity(Eigen::Index dim);

    Eigen::Index dim() const { return mean.size(); }
    Matrix transform(const Matrix& data) const;
    Matrix inverse_transform(const Matrix& data) const;
    Vector transform(const Vector& x) const;
    Vector inverse_transform(const Vector& x) const;
};

struct AEConfig {
    /// Encoder layer widths after the input; the last entry is the latent size.
    /// Empty selects the default {max(8, d/2), max(4, d/4)} shape.
    std::vector<Eigen::Index> hidden;
    Activation hidden_activation = Activation::Tanh;
    /// z-score features inside the model; false keeps raw units (identity scaler).
    bool standardize = true;
    /// Scale floor as a fraction of the median feature standard deviation.
    double scale_floor = 0.25;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 500;
    std::size_t patience = 20;
    double min_improvement = 1e-6;
    std::size_t min_samples = 50;
    AdamConfig adam{};

    std::vector<Eigen::Index> encoder_widths(Eigen::Index input_dim) const;
};

class AutoencoderModel {
public:
    AutoencoderModel() = default;
    /// Checks dimensions and that the latent space is strictly smaller than the input.
    AutoencoderModel(DenseNetwork encoder, DenseNetwork decoder, FeatureScaler scaler, bool frozen);

    const DenseNetwork& encoder() const { return encoder_; }
    const DenseNetwork& decoder() const { return decoder_; }
    const FeatureScaler& scaler() const { return scaler_; }
    Eigen::Index input_dim() const { return decoder_.output_dim(); }
    Eigen::Index latent_dim() const { return encoder_.output_dim(); }
    bool frozen() const { return frozen_; }

    void freeze() { frozen_ = true; }
    /// Throws ContractError once frozen.
    DenseNetwork& mutable_encoder();
    DenseNetwork& mutable_decoder();

    /// Combined hash of both networks and the scaler.
    std::uint64_t param_hash() const;

    /// dec(enc(z)) on already standardized rows.
    Matrix reconstruct_standardized(const Matrix& z) const;

private:
    DenseNetwork encoder_;
    DenseNetwork decoder_;
    FeatureScaler scaler_;
    bool frozen_ = false;
};

struct AETrainResult {
    AutoencoderModel model;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> loss_history;  // full-data loss after every epoch
    std::size_t epochs_run = 0;
};

/// Fits the scaler on `data`, trains enc/dec on the standardized rows with
/// shuffled mini-batches, keeps the best epoch, and returns a frozen model.
AETrainResult train_autoencoder_detailed(const Matrix& data, const AEConfig& config, Seed seed);
AutoencoderModel train_autoencoder(const Matrix& data, const AEConfig& config, Seed seed);

Vector reconstruct(const AutoencoderModel& model, const Vector& x);
Matrix reconstruct(const AutoencoderModel& model, const Matrix& data);

/// Mean per-sample mse between reconstruction and input, measured in the
/// model's standardized coordinates.
double reconstruction_loss(const AutoencoderModel& model, const Matrix& data);
Vector reconstruction_losses(const AutoencoderModel& model, const Matrix& data);

}  // namespace cdu
