#include "driftkd/drca.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "driftkd/errors.hpp"
#include "driftkd/serialize.hpp"

namespace driftkd {

DrcaModel fit_drca(const Mat& source_X, const Mat& target_X, const DrcaConfig& config) {
    if (source_X.rows() == 0 || target_X.rows() == 0) throw NumericsError("fit_drca: empty domain");
    if (source_X.cols() != target_X.cols())
        throw NumericsError("fit_drca: source and target feature dimensions differ");
    const auto D = source_X.cols();
    if (config.dim < 1 || config.dim >= D)
        throw NumericsError("fit_drca: subspace dimension " + std::to_string(config.dim) +
                            " must lie in [1, " + std::to_string(D - 1) + "]");
    if (!(config.alpha > 0)) throw NumericsError("fit_drca: alpha must be positive");
    if (!(config.eps_relative >= 0) || !(config.eps_floor > 0))
        throw NumericsError("fit_drca: regularizer must be positive");

    const Vec mu_s = numerics::mean_vector(source_X);
    const Vec mu_t = numerics::mean_vector(target_X);
    const Mat W = numerics::scatter_matrix(source_X, mu_s) + config.alpha * numerics::scatter_matrix(target_X, mu_t);
    if (W.cwiseAbs().maxCoeff() == 0) throw NumericsError("fit_drca: within-domain scatter is zero");

    Mat B = numerics::between_scatter(mu_s, mu_t);
    const double eps = config.eps_relative * B.trace() / static_cast<double>(D) + config.eps_floor;
    B.diagonal().array() += eps;

    const Mat B_isqrt = numerics::inverse_sqrt_spd(B);
    Mat M = B_isqrt * W * B_isqrt;
    M = 0.5 * (M + M.transpose());
    const EigenResult eig = numerics::eig_sym(M);

    DrcaModel model;
    model.config = config;
    model.eps = eps;
    model.eigenvalues = eig.eigenvalues.head(config.dim);
    model.projection = B_isqrt * eig.eigenvectors.leftCols(config.dim);
    for (Eigen::Index k = 0; k < model.projection.cols(); ++k) {
        model.projection.col(k).normalize();
        numerics::canonicalize_sign(model.projection.col(k));
    }
    if (!model.projection.allFinite()) throw NumericsError("fit_drca: non-finite projection");
    return model;
}

Mat project(const DrcaModel& model, const Mat& X) {
    if (X.cols() != model.projection.rows())
        throw NumericsError("project: expected " + std::to_string(model.projection.rows()) + " features, got " +
                            std::to_string(X.cols()));
    return X * model.projection;
}

double rayleigh_quotient(const Mat& W, const Mat& B, const Vec& p) {
    return p.dot(W * p) / p.dot(B * p);
}

void save_drca(std::ostream& out, const DrcaModel& model) {
    serial::write_header(out, "drca");
    serial::write_scalar(out, "alpha", model.config.alpha);
    serial::write_scalar(out, "dim", model.config.dim);
    serial::write_scalar(out, "eps_relative", model.config.eps_relative);
    serial::write_scalar(out, "eps_floor", model.config.eps_floor);
    serial::write_scalar(out, "eps", model.eps);
    serial::write_matrix(out, "eigenvalues", model.eigenvalues.transpose());
    serial::write_matrix(out, "projection", model.projection);
}

DrcaModel load_drca(std::istream& in) {
    serial::read_header(in, "drca");
    DrcaModel m;
    m.config.alpha = serial::read_scalar(in, "alpha");
    m.config.dim = static_cast<int>(serial::read_scalar(in, "dim"));
    m.config.eps_relative = serial::read_scalar(in, "eps_relative");
    m.config.eps_floor = serial::read_scalar(in, "eps_floor");
    m.eps = serial::read_scalar(in, "eps");
    m.eigenvalues = serial::read_matrix(in, "eigenvalues").transpose();
    m.projection = serial::read_matrix(in, "projection");
    if (m.projection.cols() != m.config.dim || m.eigenvalues.size() != m.config.dim)
        throw DataError("drca model: dimension fields disagree with stored matrices");
    return m;
}

}  // namespace driftkd
