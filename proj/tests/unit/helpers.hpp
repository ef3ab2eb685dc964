#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cdu/autoencoder.hpp"
#include "cdu/nncore.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

inline cdu::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    cdu::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// Linear autoencoder that projects onto the column span of `basis` (orthonormal
// columns), with an identity scaler so standardized and raw coordinates agree.
inline cdu::AutoencoderModel projection_ae(const cdu::Matrix& basis) {
    using namespace cdu;
    DenseNetwork enc({DenseLayer{basis.transpose(), Vector::Zero(basis.cols()), Activation::Identity}});
    DenseNetwork dec({DenseLayer{basis, Vector::Zero(basis.rows()), Activation::Identity}});
    return AutoencoderModel(enc, dec, FeatureScaler::identity(basis.rows()), true);
}

}  // namespace testutil
