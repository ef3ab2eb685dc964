#pragma once

#include <cstddef>
#include <functional>

#include "cdu/autoencoder.hpp"

namespace cdu {

struct DriftVerdict {
    bool drifted = false;
    double statistic = 0.0;
    double threshold = 0.0;
    std::size_t sample_index = 0;
};

struct MonitorConfig {
    double quantile = 0.99;
    double smoothing = 0.1;  // EWMA alpha in (0, 1]
    double safety_factor = 1.5;
    std::size_t warmup = 10;
};

/// Value-type state of the reconstruction-error monitor. The threshold is set
/// once by `calibrate`; `observe` only advances the EWMA and the counter.
struct MonitorState {
    double smoothing = 0.1;
    double threshold = 0.0;
    std::size_t warmup = 10;
    double ewma = 0.0;
    std::size_t observed = 0;
};

/// Runs the EWMA over the drift-free holdout in order and sets the threshold to
/// safety_factor * quantile(smoothed losses).
MonitorState calibrate(const AutoencoderModel& ae, const Matrix& holdout, const MonitorConfig& config = {});

std::pair<MonitorState, DriftVerdict> observe(const MonitorState& state, const AutoencoderModel& ae, const Vector& x);

/// drifted(t) = t >= onset.
class GroundTruthDetector {
public:
    explicit GroundTruthDetector(std::size_t onset) : onset_(onset) {}
    bool operator()(std::size_t t) const { return t >= onset_; }
    std::size_t onset() const { return onset_; }

private:
    std::size_t onset_;
};

GroundTruthDetector ground_truth_detector(std::size_t onset);

/// Linear-interpolation empirical quantile, q in [0, 1].
double empirical_quantile(std::vector<double> values, double q);

}  // namespace cdu
