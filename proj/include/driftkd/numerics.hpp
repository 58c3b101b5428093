#pragma once

#include <Eigen/Dense>

namespace driftkd {

/// Dense 64-bit matrix. Rows are samples wherever a matrix holds data.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Spectrum of a symmetric matrix. Eigenvalues are sorted descending and
/// column k of `eigenvectors` belongs to `eigenvalues[k]`. Each eigenvector
/// has its largest-magnitude entry positive.
struct EigenResult {
    Vec eigenvalues;
    Mat eigenvectors;
};

namespace numerics {

/// Column-wise mean of an n x D sample matrix.
Vec mean_vector(const Mat& X);

/// Sum over rows of (x - mu)(x - mu)'. No 1/n normalization.
Mat scatter_matrix(const Mat& X, const Vec& mu);

/// (muS - muT)(muS - muT)'.
Mat between_scatter(const Vec& muS, const Vec& muT);

/// (A + eps I)^-1 through a Cholesky factorization. Throws NumericsError when
/// A is not symmetric or the shifted matrix is not positive definite.
Mat regularized_inverse(const Mat& A, double eps);

/// Full symmetric eigendecomposition, descending order.
EigenResult eig_sym(const Mat& A);

/// A^-1/2 for a symmetric positive definite A.
Mat inverse_sqrt_spd(const Mat& A);

bool is_symmetric(const Mat& A, double tol = 1e-10);
bool all_finite(const Mat& A);

/// Flip the sign of a vector so that its largest-magnitude entry is positive.
void canonicalize_sign(Eigen::Ref<Vec> v);

}  // namespace numerics
}  // namespace driftkd
