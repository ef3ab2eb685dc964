#include "cdu/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace cdu {

std::uint64_t LogisticModel::param_hash() const {
    std::uint64_t h = hash_doubles({weights.data(), static_cast<std::size_t>(weights.size())});
    h = hash_doubles({bias.data(), static_cast<std::size_t>(bias.size())}, h);
    for (int l : labels) {
        const double v = l;
        h = hash_doubles({&v, 1}, h);
    }
    return h;
}

std::uint64_t VirtualSensorModel::param_hash() const {
    const double head[2] = {static_cast<double>(target), bias};
    std::uint64_t h = hash_doubles(head);
    return hash_doubles({weights.data(), static_cast<std::size_t>(weights.size())}, h);
}

LogisticModel train_logistic(const Matrix& x, const std::vector<int>& y, const LogisticConfig& config, Seed seed) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (static_cast<std::size_t>(n) != y.size()) throw ShapeError("train_logistic: label count != sample count");
    if (n == 0) throw DataError("train_logistic: empty training set");
    if (!x.allFinite()) throw DataError("train_logistic: non-finite features");
    if (config.batch_size == 0) throw ConfigError("batch_size must be positive");

    std::vector<int> labels(y.begin(), y.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (labels.size() < 2) throw DataError("train_logistic: need at least two classes");
    std::map<int, Eigen::Index> class_of;
    for (std::size_t k = 0; k < labels.size(); ++k) class_of[labels[k]] = static_cast<Eigen::Index>(k);
    const auto num_classes = static_cast<Eigen::Index>(labels.size());

    std::mt19937_64 rng(seed);
    DenseNetwork net({DenseLayer{Matrix::Zero(num_classes, d), Vector::Zero(num_classes), Activation::Identity}});
    auto state = OptimizerState::for_network(net, config.adam);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const auto bs = static_cast<Eigen::Index>(config.batch_size);
    Matrix batch;
    std::vector<Eigen::Index> batch_class;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += bs) {
            const Eigen::Index m = std::min(bs, n - start);
            batch.resize(m, d);
            batch_class.resize(static_cast<std::size_t>(m));
            for (Eigen::Index i = 0; i < m; ++i) {
                const auto idx = order[static_cast<std::size_t>(start + i)];
                batch.row(i) = x.row(idx);
                batch_class[static_cast<std::size_t>(i)] = class_of.at(y[static_cast<std::size_t>(idx)]);
            }
            auto fwd = forward(net, batch);
            // Softmax cross-entropy gradient: (p - onehot) / m.
            Matrix grad = fwd.output;
            for (Eigen::Index i = 0; i < m; ++i) {
                auto row = grad.row(i);
                const double mx = row.maxCoeff();
                row = (row.array() - mx).exp().matrix();
                row /= row.sum();
                row(batch_class[static_cast<std::size_t>(i)]) -= 1.0;
            }
            grad /= static_cast<double>(m);
            auto back = backward(net, fwd.cache, grad);
            back.params.weights[0] += config.l2 * net.layers()[0].weights;
            optimizer_step(net, back.params, state);
        }
    }
    LogisticModel model;
    model.weights = net.layers()[0].weights;
    model.bias = net.layers()[0].bias;
    model.labels = std::move(labels);
    return model;
}

Matrix class_scores(const LogisticModel& m, const Matrix& x) {
    if (x.cols() != m.dim()) throw ShapeError("logistic model: dimension mismatch");
    Matrix s = x * m.weights.transpose();
    s.rowwise() += m.bias.transpose();
    return s;
}

Matrix class_probabilities(const LogisticModel& m, const Matrix& x) {
    Matrix s = class_scores(m, x);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        auto row = s.row(i);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp().matrix();
        row /= row.sum();
    }
    return s;
}

namespace {

int argmax_label(const LogisticModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& scores) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.size(); ++k) {
        if (scores(k) > scores(best)) best = k;
    }
    return m.labels[static_cast<std::size_t>(best)];
}

}  // namespace

int predict_class(const LogisticModel& m, const Vector& x) {
    const Matrix s = class_scores(m, Matrix(x.transpose()));
    return argmax_label(m, s.row(0));
}

std::vector<int> predict_classes(const LogisticModel& m, const Matrix& x) {
    const Matrix s = class_scores(m, x);
    std::vector<int> out(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_label(m, s.row(i));
    return out;
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("accuracy: length mismatch");
    if (truth.empty()) throw DataError("accuracy: no samples");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == predicted[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double accuracy(const LogisticModel& m, const Matrix& x, const std::vector<int>& y) {
    return accuracy(y, predict_classes(m, x));
}

VirtualSensorModel train_virtual_sensor(const Matrix& x, Eigen::Index target) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (d < 2) throw ShapeError("virtual sensor needs at least two features");
    if (target < 0 || target >= d) throw ShapeError("virtual sensor target index out of range");
    if (n <= d) throw DataError("virtual sensor needs more samples than features");
    if (!x.allFinite()) throw DataError("virtual sensor training data contains non-finite values");

    VirtualSensorModel m;
    m.target = target;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (j != target) m.inputs.push_back(j);
    }
    const auto k = static_cast<Eigen::Index>(m.inputs.size());
    Matrix xs(n, k);
    for (Eigen::Index j = 0; j < k; ++j) xs.col(j) = x.col(m.inputs[static_cast<std::size_t>(j)]);
    const Vector y = x.col(target);
    const Eigen::RowVectorXd x_mean = xs.colwise().mean();
    const double y_mean = y.mean();
    const Matrix xc = xs.rowwise() - x_mean;
    const Vector yc = y.array() - y_mean;

    Matrix gram = xc.transpose() * xc;
    gram.diagonal().array() += 1e-8;
    const Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw SingularityError("virtual sensor normal equations are singular");
    }
    m.weights = ldlt.solve(xc.transpose() * yc);
    if (!m.weights.allFinite()) throw SingularityError("virtual sensor solve produced non-finite weights");
    m.bias = y_mean - x_mean.dot(m.weights);
    return m;
}

Vector predict_sensor(const VirtualSensorModel& m, const Matrix& x) {
    if (x.cols() != m.dim()) throw ShapeError("virtual sensor: dimension mismatch");
    Vector out = Vector::Constant(x.rows(), m.bias);
    for (std::size_t j = 0; j < m.inputs.size(); ++j) {
        out += m.weights(static_cast<Eigen::Index>(j)) * x.col(m.inputs[j]);
    }
    return out;
}

double r2_score(const Vector& y_true, const Vector& y_pred) {
    if (y_true.size() != y_pred.size()) throw ShapeError("r2_score: length mismatch");
    if (y_true.size() == 0) throw DataError("r2_score: empty input");
    const double mean = y_true.mean();
    const double ss_tot = (y_true.array() - mean).square().sum();
    const double ss_res = (y_true - y_pred).squaredNorm();
    const double scale = std::max(1.0, mean * mean) * static_cast<double>(y_true.size());
    if (!(ss_tot > 1e-24 * scale)) throw DegenerateMetricError("r2_score: target has zero variance");
    return 1.0 - ss_res / ss_tot;
}

}  // namespace cdu
