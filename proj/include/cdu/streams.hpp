#pragma once

// Data supply: bundled digits, CSV ingestion, sensor-fault injection, a
// synthetic correlated-sensor generator and k-fold splitting.

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cdu/nncore.hpp"

namespace cdu {

struct Dataset {
    Matrix features;                         // n x d
    std::optional<std::vector<int>> labels;  // length n when present
    std::vector<std::string> names;          // empty or length d

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    /// Throws DataError if labels/names have the wrong length or features are non-finite.
    void validate() const;
    Dataset rows(const std::vector<Eigen::Index>& idx) const;
};

/// Directory holding the bundled assets; honours $CDU_DATA_DIR.
std::filesystem::path data_dir();

/// Classes 0-4 of the 8x8 handwritten digits, 64 features in [0, 16].
/// The asset's SHA-256 is checked against its manifest.
Dataset load_digits();

/// Zeroes the upper four pixel rows (features 0..31) of a row-major 8x8 image.
Vector digits_drift(const Vector& x);
Matrix digits_drift(const Matrix& x);

enum class FaultKind { ConstantOffset, GaussianNoise, PowerFailure, ProportionalOffset };

std::string to_string(FaultKind kind);
FaultKind fault_kind_from_string(const std::string& name);

struct FaultSpec {
    FaultKind kind = FaultKind::ConstantOffset;
    Eigen::Index target = 0;
    double parameter = 0.0;  // offset / noise sigma / unused / gain
    Eigen::Index onset = 0;
    Seed seed = 0;

    void validate(Eigen::Index rows, Eigen::Index cols) const;
};

/// Rows >= onset of column `target` are faulted; everything else is copied bitwise.
Matrix inject_fault(const Matrix& x, const FaultSpec& spec);

/// Uniform kind and target; magnitudes scale with the target's standard deviation.
FaultSpec sample_fault_spec(std::mt19937_64& rng, const Vector& feature_sd, Eigen::Index onset);

struct SynthNetConfig {
    Eigen::Index sensors = 32;
    Eigen::Index factors = 4;
    Eigen::Index samples = 3000;
    Seed mixing_seed = 7;
    double daily_amplitude = 1.0;
    Eigen::Index samples_per_day = 48;
    double noise = 0.05;  // relative to the noiseless signal's standard deviation
    double base_level = 50.0;
    double persistence = 0.98;  // AR(1) coefficient of the latent walks
    double smoothing = 0.3;     // low-pass factor applied to the latent walks

    void validate() const;
};

/// Pressure-like stream X = base + Z M^T + daily cycle + noise with smooth
/// non-negative latent demand factors Z and a fixed non-negative mixing M.
Dataset synth_network_stream(const SynthNetConfig& config, Seed seed);

struct Fold {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
};

std::vector<Fold> kfold_split(Eigen::Index n, Eigen::Index k, Seed seed);

Dataset load_csv(const std::filesystem::path& path, bool has_labels);
void save_csv(const std::filesystem::path& path, const Dataset& data);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace cdu
