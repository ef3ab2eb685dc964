#include "cdu/driftmon.hpp"

#include <algorithm>
#include <cmath>

namespace cdu {

double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("quantile of empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

MonitorState calibrate(const AutoencoderModel& ae, const Matrix& holdout, const MonitorConfig& config) {
    if (holdout.rows() == 0) throw DataError("calibration holdout is empty");
    if (!(config.quantile > 0.0 && config.quantile <= 1.0)) throw ConfigError("quantile must lie in (0, 1]");
    if (!(config.smoothing > 0.0 && config.smoothing <= 1.0)) throw ConfigError("smoothing must lie in (0, 1]");
    if (!(config.safety_factor > 0.0)) throw ConfigError("safety factor must be positive");

    const Vector losses = reconstruction_losses(ae, holdout);
    std::vector<double> smoothed;
    smoothed.reserve(static_cast<std::size_t>(losses.size()));
    double ewma = losses(0);
    for (Eigen::Index i = 0; i < losses.size(); ++i) {
        ewma = i == 0 ? losses(0) : config.smoothing * losses(i) + (1.0 - config.smoothing) * ewma;
        smoothed.push_back(ewma);
    }
    MonitorState state;
    state.smoothing = config.smoothing;
    state.warmup = config.warmup;
    state.threshold = config.safety_factor * empirical_quantile(std::move(smoothed), config.quantile);
    return state;
}

std::pair<MonitorState, DriftVerdict> observe(const MonitorState& state, const AutoencoderModel& ae, const Vector& x) {
    if (x.size() != ae.input_dim()) throw ShapeError("observe: dimension mismatch");
    const double loss = reconstruction_losses(ae, Matrix(x.transpose()))(0);
    MonitorState next = state;
    next.ewma = state.observed == 0 ? loss : state.smoothing * loss + (1.0 - state.smoothing) * state.ewma;
    next.observed = state.observed + 1;

    DriftVerdict verdict;
    verdict.statistic = next.ewma;
    verdict.threshold = state.threshold;
    verdict.sample_index = state.observed;
    verdict.drifted = next.observed > state.warmup && next.ewma > state.threshold;
    return {next, verdict};
}

GroundTruthDetector ground_truth_detector(std::size_t onset) {
    return GroundTruthDetector(onset);
}

}  // namespace cdu
