#include <doctest.h>

#include <random>

#include "cdu/artifact.hpp"
#include "cdu/unlearner.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace cdu;
using testutil::rel_err;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

Matrix orthonormal_basis(Eigen::Index d, Eigen::Index k, Seed seed) {
    std::mt19937_64 rng(seed);
    Eigen::HouseholderQR<Matrix> qr(testutil::random_matrix(rng, d, k));
    return qr.householderQ() * Matrix::Identity(d, k);
}

// Samples in span(basis), zero mean, plus a constant offset on feature k.
Matrix offset_dstar(const Matrix& basis, Eigen::Index k, double offset, Eigen::Index n, Seed seed) {
    std::mt19937_64 rng(seed);
    Matrix z = testutil::random_matrix(rng, n, basis.cols()) * basis.transpose();
    z.rowwise() -= z.colwise().mean();
    z.col(k).array() += offset;
    return z;
}

// Small nonlinear autoencoder with a non-trivial scaler.
AutoencoderModel random_ae(Eigen::Index d, Seed seed) {
    std::mt19937_64 rng(seed);
    auto enc = DenseNetwork::random({d, 3, 2}, {Activation::Tanh, Activation::Tanh}, seed);
    auto dec = DenseNetwork::random({2, 3, d}, {Activation::Tanh, Activation::Identity}, seed + 1);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    FeatureScaler s{testutil::random_matrix(rng, d, 1), Vector(d)};
    for (Eigen::Index i = 0; i < d; ++i) s.scale(i) = u(rng);
    return AutoencoderModel(enc, dec, s, true);
}

}  // namespace

TEST_CASE("init_identity") {
    const auto f = init_identity(3);
    CHECK(apply_unlearner(f, vec({1, 2, 3})) == vec({1, 2, 3}));
    CHECK(f.weights() == Matrix::Identity(3, 3));
    CHECK(f.bias().isZero());
    CHECK_THROWS_AS(init_identity(0), ShapeError);

    const auto ae = random_ae(3, 1);
    std::mt19937_64 rng(2);
    const Matrix d = testutil::random_matrix(rng, 10, 3);
    const auto v = unlearn_objective_detailed(ae, f, d, 0.7, false);
    CHECK(v.penalty == 0.0);
    CHECK(v.total == doctest::Approx(reconstruction_loss(ae, d)).epsilon(1e-12));
}

TEST_CASE("unlearn_objective: identity equals reconstruction loss for any C") {
    const auto ae = random_ae(4, 3);
    std::mt19937_64 rng(4);
    const Matrix d = testutil::random_matrix(rng, 12, 4);
    const double recon = reconstruction_loss(ae, d);
    CHECK(unlearn_objective(ae, init_identity(4), d, 0.0) == doctest::Approx(recon).epsilon(1e-12));
    CHECK(unlearn_objective(ae, init_identity(4), d, 5.0) == doctest::Approx(recon).epsilon(1e-12));
}

TEST_CASE("unlearn_objective: hand example on span{e1}") {
    Matrix basis = Matrix::Zero(2, 1);
    basis(0, 0) = 1.0;
    const auto ae = testutil::projection_ae(basis);
    Matrix dstar(1, 2);
    dstar << 0, 1;
    const auto f = UnlearnMap::affine(Matrix::Identity(2, 2), vec({0, -1}));
    CHECK(unlearn_objective(ae, f, dstar, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("unlearn_objective: errors") {
    const auto ae = random_ae(3, 5);
    CHECK_THROWS_AS(unlearn_objective(ae, init_identity(4), Matrix::Zero(2, 4), 0.1), ShapeError);
    CHECK_THROWS_AS(unlearn_objective(ae, init_identity(3), Matrix::Zero(0, 3), 0.1), DataError);
    CHECK_THROWS_AS(unlearn_objective(ae, init_identity(3), Matrix::Zero(2, 3), -1.0), ConfigError);
}

TEST_CASE("unlearn_objective gradient w.r.t. (A, b) matches central differences") {
    std::mt19937_64 rng(77);
    int checked = 0;
    for (int trial = 0; checked < 50; ++trial) {
        REQUIRE(trial < 500);
        const Eigen::Index d = 3 + trial % 3;
        const auto ae = random_ae(d, 100 + trial);
        const Matrix x = testutil::random_matrix(rng, 6, d);
        const Matrix a = Matrix::Identity(d, d) + testutil::random_matrix(rng, d, d, 0.2);
        const Vector b = testutil::random_matrix(rng, d, 1, 0.5);
        const auto f = UnlearnMap::affine(a, b);
        const double c = 0.05 + 0.5 * (trial % 4);
        // Skip instances near an L1 kink (in standardized coordinates).
        const auto& sc = ae.scaler();
        if ((sc.transform(apply_unlearner(f, x)) - sc.transform(x)).cwiseAbs().minCoeff() < 1e-3) continue;

        const auto an = flatten(unlearn_objective_detailed(ae, f, x, c, true).grads);
        auto loss = [&](const DenseNetwork& body) {
            return unlearn_objective(ae, UnlearnMap(MapKind::Affine, body, f.scaler(), c, 0), x, c);
        };
        const auto fd = flatten(finite_diff_grad(loss, f.body(), 1e-5));
        REQUIRE(an.size() == fd.size());
        for (std::size_t i = 0; i < an.size(); ++i) CHECK(rel_err(an[i], fd[i]) < 1e-4);
        ++checked;
    }
}

TEST_CASE("unlearn_objective gradient for the MLP kind matches central differences") {
    std::mt19937_64 rng(91);
    const auto ae = random_ae(4, 9);
    const Matrix x = testutil::random_matrix(rng, 5, 4);
    auto body = DenseNetwork::random({4, 5, 4}, {Activation::Tanh, Activation::Identity}, 4);
    const UnlearnMap f(MapKind::MLP, body, ae.scaler(), 0.3, 0);
    const auto& sc = ae.scaler();
    REQUIRE((sc.transform(apply_unlearner(f, x)) - sc.transform(x)).cwiseAbs().minCoeff() > 1e-3);
    const auto an = flatten(unlearn_objective_detailed(ae, f, x, 0.3, true).grads);
    auto loss = [&](const DenseNetwork& b) {
        return unlearn_objective(ae, UnlearnMap(MapKind::MLP, b, f.scaler(), 0.3, 0), x, 0.3);
    };
    const auto fd = flatten(finite_diff_grad(loss, body, 1e-5));
    for (std::size_t i = 0; i < an.size(); ++i) CHECK(rel_err(an[i], fd[i]) < 1e-4);
}

TEST_CASE("apply_unlearner examples") {
    const auto f = UnlearnMap::affine(2.0 * Matrix::Identity(2, 2), vec({1, 1}));
    CHECK(apply_unlearner(f, vec({1, 2})) == vec({3, 5}));
    CHECK(apply_unlearner(init_identity(2), vec({-4, 9})) == vec({-4, 9}));

    std::mt19937_64 rng(6);
    const auto g = UnlearnMap::affine(testutil::random_matrix(rng, 3, 3), testutil::random_matrix(rng, 3, 1));
    const Vector x = testutil::random_matrix(rng, 3, 1), y = testutil::random_matrix(rng, 3, 1);
    const double al = 0.3, be = -1.7;
    const Vector lhs = apply_unlearner(g, Vector(al * x + be * y));
    const Vector rhs = al * apply_unlearner(g, x) + be * apply_unlearner(g, y) + (1.0 - al - be) * g.bias();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(apply_unlearner(g, vec({1, 2})), ShapeError);
}

TEST_CASE("l1_penalty_grad examples") {
    CHECK(l1_penalty_grad(vec({1, -2, 0}), vec({1, -2, 0})).isZero());
    CHECK(l1_penalty_grad(vec({2, -1}), vec({0, 0})) == vec({1, -1}));
    CHECK_THROWS_AS(l1_penalty_grad(vec({1}), vec({1, 2})), ShapeError);

    const Vector x = vec({0.3, -1.0, 2.0});
    const Vector fo = vec({1.0, -2.0, 2.5});
    const Vector step = -1e-4 * l1_penalty_grad(fo, x);
    CHECK((fo + step - x).cwiseAbs().sum() < (fo - x).cwiseAbs().sum());
}

TEST_CASE("fit_unlearner: preconditions") {
    const auto frozen = random_ae(3, 2);
    AutoencoderModel open(frozen.encoder(), frozen.decoder(), frozen.scaler(), false);
    std::mt19937_64 rng(3);
    const Matrix d = testutil::random_matrix(rng, 60, 3);
    CHECK_THROWS_AS(fit_unlearner(open, d, UnlearnConfig{}, 1), ContractError);
    CHECK_THROWS_AS(fit_unlearner(frozen, d.topRows(10), UnlearnConfig{}, 1), DataError);
    CHECK_THROWS_AS(fit_unlearner(frozen, Matrix::Zero(60, 4), UnlearnConfig{}, 1), ShapeError);
}

TEST_CASE("fit_unlearner: best iterate, frozen AE untouched, deterministic") {
    const Matrix basis = orthonormal_basis(4, 2, 12);
    const auto ae = testutil::projection_ae(basis);
    const Matrix dstar = offset_dstar(basis, 1, 1.5, 120, 4);
    const auto h = ae.param_hash();
    UnlearnConfig cfg;
    cfg.regularization = 0.1;
    const auto r = fit_unlearner_detailed(ae, dstar, cfg, 5);
    CHECK(ae.param_hash() == h);
    CHECK(r.final_objective <= r.initial_objective);
    const double at_identity = unlearn_objective(ae, init_identity(4), dstar, cfg.regularization);
    CHECK(unlearn_objective(ae, r.map, dstar, cfg.regularization) <= at_identity);
    const auto parts = unlearn_objective_detailed(ae, r.map, dstar, cfg.regularization, false);
    CHECK(parts.reconstruction <= reconstruction_loss(ae, dstar));
    CHECK(r.map.fitted_on() == 120);
    const auto again = fit_unlearner_detailed(ae, dstar, cfg, 5);
    CHECK(flatten(again.map.body()) == flatten(r.map.body()));
}

TEST_CASE("fit_unlearner: constant offset recovers the analytic minimizer") {
    const Matrix basis = orthonormal_basis(4, 2, 21);
    const auto ae = testutil::projection_ae(basis);
    const double offset = 2.0, c = 0.1;
    const Matrix dstar = offset_dstar(basis, 0, offset, 200, 8);
    Vector v = Vector::Zero(4);
    v(0) = offset;
    const Vector oracle = testutil::lasso_bias_oracle(basis, v, c);
    UnlearnConfig cfg;
    cfg.regularization = c;
    cfg.max_epochs = 2000;
    cfg.patience = 100;
    const auto r = fit_unlearner_detailed(ae, dstar, cfg, 3);
    // A and b trade off along the offset direction, so compare the translation
    // the map applies at the D* centroid.
    const Vector xbar = dstar.colwise().mean().transpose();
    const Vector shift = (r.map.weights() - Matrix::Identity(4, 4)) * xbar + r.map.bias();
    const double tol = 0.1 * oracle.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(shift(i) - oracle(i)) <= tol);
    CHECK(r.final_objective <= 1.01 * testutil::lasso_bias_objective(basis, v, c, oracle));
}

TEST_CASE("lasso oracle: two-dimensional closed form") {
    Matrix basis = Matrix::Zero(2, 1);
    basis(0, 0) = 1.0;
    for (double c : {0.05, 0.3, 1.0}) {
        const Vector b = testutil::lasso_bias_oracle(basis, vec({0.0, 2.0}), c);
        CHECK(b(0) == doctest::Approx(0.0));
        CHECK(b(1) == doctest::Approx(-(2.0 - c)));
    }
}

TEST_CASE("fit_unlearner: undrifted D* leaves f close to the identity") {
    const Matrix basis = orthonormal_basis(6, 3, 31);
    const auto ae = testutil::projection_ae(basis);
    const Matrix dstar = offset_dstar(basis, 0, 0.0, 200, 9);
    const auto f = fit_unlearner(ae, dstar, UnlearnConfig{}, 2);
    const double shift = (apply_unlearner(f, dstar) - dstar).cwiseAbs().mean();
    CHECK(shift <= 0.05);
}

TEST_CASE("fit_unlearner: larger C never changes more bias coordinates") {
    const Matrix basis = orthonormal_basis(5, 2, 41);
    const auto ae = testutil::projection_ae(basis);
    for (Seed s = 0; s < 10; ++s) {
        const Matrix dstar = offset_dstar(basis, static_cast<Eigen::Index>(s % 5), 1.5, 100, 50 + s);
        UnlearnConfig c0, c1;
        c0.regularization = 0.0;
        c1.regularization = 0.1;
        const auto count = [](const UnlearnMap& f) { return (f.bias().cwiseAbs().array() > 0.05).count(); };
        CHECK(count(fit_unlearner(ae, dstar, c1, s)) <= count(fit_unlearner(ae, dstar, c0, s)));
    }
}

TEST_CASE("fit_unlearner: strong C keeps f closer to the identity") {
    const Matrix basis = orthonormal_basis(5, 2, 51);
    const auto ae = testutil::projection_ae(basis);
    const Matrix dstar = offset_dstar(basis, 2, 2.0, 100, 3);
    UnlearnConfig c0, c10;
    c0.regularization = 0.0;
    c10.regularization = 10.0;
    auto moved = [&](const UnlearnMap& f) { return (apply_unlearner(f, dstar) - dstar).cwiseAbs().rowwise().sum().mean(); };
    CHECK(moved(fit_unlearner(ae, dstar, c10, 1)) < moved(fit_unlearner(ae, dstar, c0, 1)));
}

TEST_CASE("fit_unlearner: MLP kind runs and never worsens the objective") {
    const Matrix basis = orthonormal_basis(4, 2, 61);
    const auto ae = testutil::projection_ae(basis);
    const Matrix dstar = offset_dstar(basis, 3, 1.0, 80, 2);
    UnlearnConfig cfg;
    cfg.kind = MapKind::MLP;
    cfg.max_epochs = 50;
    const auto r = fit_unlearner_detailed(ae, dstar, cfg, 7);
    CHECK(r.map.kind() == MapKind::MLP);
    CHECK(r.final_objective <= r.initial_objective);
    CHECK_THROWS_AS(r.map.weights(), ContractError);
}

TEST_CASE("unlearn map artifact round-trip") {
    std::mt19937_64 rng(13);
    const auto f = UnlearnMap::affine(testutil::random_matrix(rng, 3, 3), testutil::random_matrix(rng, 3, 1));
    const auto back = unlearn_map_from_json(Json::parse(to_json(f).dump()));
    CHECK(back.weights() == f.weights());
    CHECK(back.bias() == f.bias());
    CHECK(back.kind() == MapKind::Affine);
}
