#pragma once

#include <iosfwd>

#include "driftkd/numerics.hpp"

namespace driftkd {

/// Hyperparameters of the domain-regularized projection.
///
/// The between-domain scatter has rank at most one, so it is shifted by
/// eps * I before inversion with
///   eps = eps_relative * trace(S_b) / D + eps_floor.
struct DrcaConfig {
    double alpha = 1.0;    ///< weight on the target within-domain scatter
    int dim = 50;          ///< subspace dimension d, must be < D
    double eps_relative = 1e-6;
    double eps_floor = 1e-12;
};

/// Fitted projection P (D x d) with unit-norm columns.
struct DrcaModel {
    Mat projection;
    Vec eigenvalues;  ///< retained generalized eigenvalues, descending
    DrcaConfig config;
    double eps = 0;   ///< the shift actually applied to S_b

    int input_dim() const { return static_cast<int>(projection.rows()); }
    int output_dim() const { return static_cast<int>(projection.cols()); }
};

/// Fits the projection from labeled-source and unlabeled-target features.
///
/// Solves (S_b + eps I)^-1 (S_w^S + alpha S_w^T) p = theta p through the
/// symmetric matrix B^-1/2 W B^-1/2, maps each eigenvector u back with
/// p = B^-1/2 u and keeps the top `config.dim` directions. Columns are
/// normalized and sign-fixed (largest entry positive).
DrcaModel fit_drca(const Mat& source_X, const Mat& target_X, const DrcaConfig& config);

/// X * P.
Mat project(const DrcaModel& model, const Mat& X);

/// p' W p / p' B p for the given direction.
double rayleigh_quotient(const Mat& W, const Mat& B, const Vec& p);

void save_drca(std::ostream& out, const DrcaModel& model);
DrcaModel load_drca(std::istream& in);

}  // namespace driftkd
