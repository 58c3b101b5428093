#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "driftkd/drca.hpp"
#include "driftkd/errors.hpp"

using namespace driftkd;

namespace {

Mat gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0, double shift = 0.0) {
    std::normal_distribution<double> n(shift, scale);
    Mat A(rows, cols);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = n(rng);
    return A;
}

// Anisotropic source/target pair with a mean shift between domains.
std::pair<Mat, Mat> domains(int D, std::mt19937_64& rng) {
    Mat S = gaussian(40, D, rng);
    Mat T = gaussian(35, D, rng);
    for (int j = 0; j < D; ++j) {
        S.col(j) *= 1.0 + j;
        T.col(j) *= 1.0 + 0.5 * j;
    }
    const Mat shift = gaussian(1, D, rng, 3.0);
    T.rowwise() += shift.row(0);
    return {S, T};
}

struct Problem {
    Mat W, B;
};

Problem problem_of(const Mat& S, const Mat& T, const DrcaConfig& cfg, double eps) {
    const Vec ms = S.colwise().mean(), mt = T.colwise().mean();
    const Mat Sc = S.rowwise() - ms.transpose(), Tc = T.rowwise() - mt.transpose();
    Problem p;
    p.W = Sc.transpose() * Sc + cfg.alpha * (Tc.transpose() * Tc);
    p.B = (ms - mt) * (ms - mt).transpose();
    p.B.diagonal().array() += eps;
    return p;
}

}  // namespace

TEST_CASE("2-D toy: domain-shift axis is rejected") {
    Mat S(2, 2), T(2, 2);
    S << 0, 0, 0, 1;
    T << 5, 0, 5, 1;
    const DrcaModel m = fit_drca(S, T, {.alpha = 1.0, .dim = 1});
    REQUIRE(m.projection.rows() == 2);
    REQUIRE(m.projection.cols() == 1);
    Vec axis2(2);
    axis2 << 0, 1;
    CHECK(std::abs(m.projection.col(0).dot(axis2)) > 0.99);
    // Hand solution: W = diag(0, 1), B = diag(25 + eps, eps), eps = 1e-6 * 25 / 2 + 1e-12.
    const double eps = 1e-6 * 25.0 / 2.0 + 1e-12;
    CHECK(m.eps == doctest::Approx(eps).epsilon(1e-12));
    CHECK(m.eigenvalues[0] == doctest::Approx(1.0 / eps).epsilon(1e-6));
}

TEST_CASE("source == target reduces to leading within-scatter directions") {
    std::mt19937_64 rng(8);
    Mat X = gaussian(60, 5, rng);
    for (int j = 0; j < 5; ++j) X.col(j) *= 5.0 - j;
    const DrcaModel m = fit_drca(X, X, {.alpha = 1.0, .dim = 2});

    const Mat Xc = X.rowwise() - X.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Mat> pca(Xc.transpose() * Xc);
    for (int k = 0; k < 2; ++k) {
        const Vec ref = pca.eigenvectors().col(4 - k);
        CHECK(std::abs(std::abs(ref.dot(m.projection.col(k))) - 1.0) < 1e-8);
    }
}

TEST_CASE("retained eigenvalues equal Rayleigh quotients and are non-increasing") {
    std::mt19937_64 rng(9);
    for (int D : {3, 6, 12, 30}) {
        const auto [S, T] = domains(D, rng);
        const DrcaConfig cfg{.alpha = 0.3, .dim = D - 1};
        const DrcaModel m = fit_drca(S, T, cfg);
        const Problem p = problem_of(S, T, cfg, m.eps);
        double prev = std::numeric_limits<double>::infinity();
        for (int k = 0; k < m.output_dim(); ++k) {
            const double q = rayleigh_quotient(p.W, p.B, m.projection.col(k));
            CHECK(std::abs(q - m.eigenvalues[k]) <= 1e-6 * std::abs(m.eigenvalues[k]));
            CHECK(q <= prev * (1 + 1e-8) + 1e-8);
            prev = q;
            CHECK(std::abs(m.projection.col(k).norm() - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("property: top direction beats 1000 random unit vectors") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const int D = 2 + trial % 5;
        const auto [S, T] = domains(D, rng);
        const DrcaConfig cfg{.alpha = std::pow(10.0, trial % 7 - 3), .dim = 1};
        const DrcaModel m = fit_drca(S, T, cfg);
        const Problem p = problem_of(S, T, cfg, m.eps);
        const double best = rayleigh_quotient(p.W, p.B, m.projection.col(0));
        for (int i = 0; i < 1000; ++i) {
            Vec v(D);
            for (auto& x : v) x = n(rng);
            v.normalize();
            CHECK(rayleigh_quotient(p.W, p.B, v) <= best * (1 + 1e-9));
        }
    }
}

TEST_CASE("scale equivariance of the subspace") {
    std::mt19937_64 rng(11);
    const auto [S, T] = domains(6, rng);
    const DrcaConfig cfg{.alpha = 2.0, .dim = 3};
    const DrcaModel a = fit_drca(S, T, cfg);
    for (double c : {1e-3, 0.5, 7.0, 1e3}) {
        const DrcaModel b = fit_drca(c * S, c * T, cfg);
        for (int k = 0; k < 3; ++k)
            CHECK(std::abs(std::abs(a.projection.col(k).dot(b.projection.col(k))) - 1.0) < 1e-6);
    }
}

TEST_CASE("fit_drca is exactly deterministic") {
    std::mt19937_64 rng(12);
    const auto [S, T] = domains(10, rng);
    const DrcaModel a = fit_drca(S, T, {.alpha = 0.1, .dim = 4});
    const DrcaModel b = fit_drca(S, T, {.alpha = 0.1, .dim = 4});
    CHECK(a.projection == b.projection);
    CHECK(a.eigenvalues == b.eigenvalues);
    for (int k = 0; k < 4; ++k) {
        Eigen::Index arg = 0;
        a.projection.col(k).cwiseAbs().maxCoeff(&arg);
        CHECK(a.projection(arg, k) > 0);
    }
}

TEST_CASE("fit_drca rejects bad inputs") {
    std::mt19937_64 rng(13);
    const Mat S = gaussian(10, 4, rng), T = gaussian(10, 4, rng);
    CHECK_THROWS_AS(fit_drca(S, T, {.dim = 4}), NumericsError);
    CHECK_THROWS_AS(fit_drca(S, T, {.dim = 0}), NumericsError);
    CHECK_THROWS_AS(fit_drca(S, T, {.alpha = 0.0, .dim = 2}), NumericsError);
    CHECK_THROWS_AS(fit_drca(S, gaussian(10, 3, rng), {.dim = 2}), NumericsError);
    CHECK_THROWS_AS(fit_drca(Mat(0, 4), T, {.dim = 2}), NumericsError);
    CHECK_THROWS_AS(fit_drca(Mat::Ones(5, 4), Mat::Ones(5, 4) * 2, {.dim = 2}), NumericsError);
}

TEST_CASE("project") {
    DrcaModel m;
    m.projection = Mat::Identity(3, 2);
    Mat X(1, 3);
    X << 1, 2, 3;
    const Mat Z = project(m, X);
    CHECK(Z(0, 0) == 1);
    CHECK(Z(0, 1) == 2);
    CHECK(project(m, Mat::Zero(4, 3)).isZero(0));
    CHECK_THROWS_AS(project(m, Mat::Zero(1, 2)), NumericsError);

    std::mt19937_64 rng(14);
    const auto [S, T] = domains(5, rng);
    const DrcaModel fitted = fit_drca(S, T, {.dim = 2});
    const Mat A = gaussian(3, 5, rng), Bm = gaussian(3, 5, rng);
    CHECK((project(fitted, A + 2.5 * Bm) - project(fitted, A) - 2.5 * project(fitted, Bm)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("save and load round-trip") {
    std::mt19937_64 rng(15);
    const auto [S, T] = domains(7, rng);
    const DrcaModel m = fit_drca(S, T, {.alpha = 0.01, .dim = 3});
    std::stringstream io;
    save_drca(io, m);
    const DrcaModel back = load_drca(io);
    CHECK(back.projection == m.projection);
    CHECK(back.eigenvalues == m.eigenvalues);
    CHECK(back.eps == m.eps);
    CHECK(back.config.alpha == m.config.alpha);
    CHECK(back.config.dim == 3);

    std::istringstream bad("driftkd-network 1\n");
    CHECK_THROWS_AS(load_drca(bad), DataError);
}
