#include "driftkd/numerics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "driftkd/errors.hpp"

namespace driftkd::numerics {

namespace {

void require_square(const Mat& A, const char* what) {
    if (A.rows() != A.cols() || A.rows() == 0)
        throw NumericsError(std::string(what) + ": expected a non-empty square matrix, got " +
                            std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
}

}  // namespace

bool all_finite(const Mat& A) { return A.allFinite(); }

bool is_symmetric(const Mat& A, double tol) {
    if (A.rows() != A.cols()) return false;
    // Tolerance is relative to the entry scale so that large scatter matrices
    // built from rounded sums still qualify.
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    return (A - A.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

void canonicalize_sign(Eigen::Ref<Vec> v) {
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
}

Vec mean_vector(const Mat& X) {
    if (X.rows() == 0 || X.cols() == 0) throw NumericsError("mean_vector: empty matrix");
    return X.colwise().mean().transpose();
}

Mat scatter_matrix(const Mat& X, const Vec& mu) {
    if (X.cols() != mu.size())
        throw NumericsError("scatter_matrix: dimension mismatch (" + std::to_string(X.cols()) +
                            " columns vs mean of length " + std::to_string(mu.size()) + ")");
    const Mat centered = X.rowwise() - mu.transpose();
    Mat S = Mat::Zero(X.cols(), X.cols());
    S.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    S.triangularView<Eigen::StrictlyUpper>() = S.transpose();
    assert(S.allFinite());
    return S;
}

Mat between_scatter(const Vec& muS, const Vec& muT) {
    if (muS.size() != muT.size()) throw NumericsError("between_scatter: dimension mismatch");
    const Vec delta = muS - muT;
    return delta * delta.transpose();
}

Mat regularized_inverse(const Mat& A, double eps) {
    require_square(A, "regularized_inverse");
    if (!(eps > 0)) throw NumericsError("regularized_inverse: eps must be positive");
    if (!is_symmetric(A)) throw NumericsError("regularized_inverse: input is not symmetric");
    Mat shifted = A;
    shifted.diagonal().array() += eps;
    Eigen::LLT<Mat> llt(shifted);
    if (llt.info() != Eigen::Success)
        throw NumericsError("regularized_inverse: Cholesky failed, eps too small for this matrix");
    Mat inv = llt.solve(Mat::Identity(A.rows(), A.cols()));
    inv = 0.5 * (inv + inv.transpose());
    assert(inv.allFinite());
    return inv;
}

EigenResult eig_sym(const Mat& A) {
    require_square(A, "eig_sym");
    if (!is_symmetric(A)) throw NumericsError("eig_sym: input is not symmetric");
    if (!A.allFinite()) throw NumericsError("eig_sym: non-finite input");

    Eigen::SelfAdjointEigenSolver<Mat> solver(A, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success)
        throw NumericsError("eig_sym: eigen-solver did not converge");

    // Eigen returns ascending order.
    const Eigen::Index n = A.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const Vec& ev = solver.eigenvalues();
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return ev[a] > ev[b]; });

    EigenResult out{Vec(n), Mat(n, n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        out.eigenvalues[k] = ev[order[static_cast<std::size_t>(k)]];
        out.eigenvectors.col(k) = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
        out.eigenvectors.col(k).normalize();
        canonicalize_sign(out.eigenvectors.col(k));
    }
    return out;
}

Mat inverse_sqrt_spd(const Mat& A) {
    const EigenResult e = eig_sym(A);
    if (e.eigenvalues.minCoeff() <= 0)
        throw NumericsError("inverse_sqrt_spd: matrix is not positive definite");
    const Vec scale = e.eigenvalues.array().rsqrt();
    Mat out = e.eigenvectors * scale.asDiagonal() * e.eigenvectors.transpose();
    return 0.5 * (out + out.transpose());
}

}  // namespace driftkd::numerics
