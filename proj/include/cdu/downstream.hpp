#pragma once

// Frozen downstream task models: a multinomial logistic-regression classifier
// and linear virtual sensors (one feature regressed on all the others).

#include <vector>

#include "cdu/nncore.hpp"

namespace cdu {

struct LogisticConfig {
    double l2 = 1e-2;
    std::size_t epochs = 300;
    std::size_t batch_size = 64;
    AdamConfig adam{.learning_rate = 1e-2};
};

struct LogisticModel {
    Matrix weights;           // num_classes x d
    Vector bias;              // num_classes
    std::vector<int> labels;  // class label for each row of `weights`

    Eigen::Index num_classes() const { return weights.rows(); }
    Eigen::Index dim() const { return weights.cols(); }
    std::uint64_t param_hash() const;
};

/// Softmax cross-entropy + (l2/2)|W|^2, Adam on seeded shuffled mini-batches.
LogisticModel train_logistic(const Matrix& x, const std::vector<int>& y, const LogisticConfig& config, Seed seed);

Matrix class_scores(const LogisticModel& m, const Matrix& x);
Matrix class_probabilities(const LogisticModel& m, const Matrix& x);
/// Argmax of the class scores; ties go to the lowest class index.
int predict_class(const LogisticModel& m, const Vector& x);
std::vector<int> predict_classes(const LogisticModel& m, const Matrix& x);
double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);
double accuracy(const LogisticModel& m, const Matrix& x, const std::vector<int>& y);

struct VirtualSensorModel {
    Eigen::Index target = 0;
    std::vector<Eigen::Index> inputs;  // all feature indices except target, ascending
    Vector weights;                    // one per entry of `inputs`
    double bias = 0.0;

    Eigen::Index dim() const { return static_cast<Eigen::Index>(inputs.size()) + 1; }
    std::uint64_t param_hash() const;
};

/// Centered normal equations with 1e-8 added to the diagonal.
VirtualSensorModel train_virtual_sensor(const Matrix& x, Eigen::Index target);

/// Predictions from the non-target columns of full-width rows.
Vector predict_sensor(const VirtualSensorModel& m, const Matrix& x);

/// 1 - SS_res / SS_tot; DegenerateMetricError when y_true is constant.
double r2_score(const Vector& y_true, const Vector& y_pred);

}  // namespace cdu
