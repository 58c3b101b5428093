#include "driftkd/kd.hpp"

#include <istream>
#include <ostream>

#include "driftkd/errors.hpp"
#include "driftkd/serialize.hpp"

namespace driftkd {

SoftLabelSet make_soft_labels(const Network& teacher, const Mat& source_X, const Mat& target_X, double temperature) {
    if (!(temperature > 0)) throw NumericsError("make_soft_labels: temperature must be positive");
    if (source_X.cols() != teacher.input_dim() || (target_X.rows() > 0 && target_X.cols() != teacher.input_dim()))
        throw NumericsError("make_soft_labels: feature dimension does not match the teacher");

    SoftLabelSet out;
    out.features.resize(source_X.rows() + target_X.rows(), source_X.cols());
    out.features.topRows(source_X.rows()) = source_X;
    if (target_X.rows() > 0) out.features.bottomRows(target_X.rows()) = target_X;

    const Mat logits = forward_logits(teacher, out.features);
    if (!logits.allFinite()) throw NumericsError("make_soft_labels: teacher produced non-finite logits");
    out.targets = softmax_rows(logits, temperature);
    return out;
}

KdResult distill(Network teacher, const Mat& source_X, const Mat& target_X, const KdConfig& cfg) {
    KdResult r;
    r.soft_labels = make_soft_labels(teacher, source_X, target_X, cfg.temperature);
    r.teacher = std::move(teacher);

    NetworkConfig net_cfg = cfg.network;
    net_cfg.input_dim = static_cast<int>(source_X.cols());
    auto trained = train_soft(init_network(net_cfg, cfg.student_train.seed), r.soft_labels.features,
                              r.soft_labels.targets, cfg.student_train, cfg.student_loss);
    r.student = std::move(trained.net);
    r.student_loss = std::move(trained.loss_trace);
    return r;
}

KdResult kd_pipeline(const Mat& source_X, std::span<const int> source_y, const Mat& target_X, const KdConfig& cfg) {
    NetworkConfig net_cfg = cfg.network;
    net_cfg.input_dim = static_cast<int>(source_X.cols());
    auto teacher = train_supervised(init_network(net_cfg, cfg.teacher_train.seed), source_X, source_y, cfg.teacher_train);
    KdResult r = distill(std::move(teacher.net), source_X, target_X, cfg);
    r.teacher_loss = std::move(teacher.loss_trace);
    return r;
}

ProjectionStage fit_projection_stage(const Mat& source_X, const Mat& target_X, const DrcaConfig& cfg) {
    ProjectionStage stage;
    stage.drca = fit_drca(source_X, target_X, cfg);
    stage.restandardizer = fit_standardizer(project(stage.drca, source_X));
    return stage;
}

Mat Predictor::transform(const Mat& X) const {
    Mat Z = input ? input->apply(X) : X;
    if (projection) Z = projection->apply(Z);
    return Z;
}

Mat Predictor::predict_proba(const Mat& X) const { return driftkd::predict_proba(net, transform(X)); }

std::vector<int> Predictor::predict_labels(const Mat& X) const { return argmax_rows(predict_proba(X)); }

KdDrcaResult kd_drca_pipeline(const Mat& source_X, std::span<const int> source_y, const Mat& target_X,
                              const DrcaConfig& drca_cfg, const KdConfig& kd_cfg) {
    KdDrcaResult out;
    ProjectionStage stage = fit_projection_stage(source_X, target_X, drca_cfg);
    const Mat source_p = stage.apply(source_X);
    const Mat target_p = target_X.rows() > 0 ? stage.apply(target_X) : Mat(0, source_p.cols());
    out.kd = kd_pipeline(source_p, source_y, target_p, kd_cfg);
    out.predictor.projection = std::move(stage);
    out.predictor.net = out.kd.student;
    return out;
}

namespace {

void write_standardizer(std::ostream& out, const std::string& name, const Standardizer& s) {
    serial::write_matrix(out, name + "_mean", s.mean.transpose());
    serial::write_matrix(out, name + "_std", s.std.transpose());
}

Standardizer read_standardizer(std::istream& in, const std::string& name) {
    Standardizer s;
    s.mean = serial::read_matrix(in, name + "_mean").transpose();
    s.std = serial::read_matrix(in, name + "_std").transpose();
    if (s.mean.size() != s.std.size()) throw DataError("predictor: standardizer shape mismatch");
    return s;
}

}  // namespace

void save_predictor(std::ostream& out, const Predictor& p) {
    serial::write_header(out, "predictor");
    serial::write_scalar(out, "has_input", p.input ? 1 : 0);
    if (p.input) write_standardizer(out, "input", *p.input);
    serial::write_scalar(out, "has_projection", p.projection ? 1 : 0);
    if (p.projection) {
        save_drca(out, p.projection->drca);
        write_standardizer(out, "projected", p.projection->restandardizer);
    }
    save_network(out, p.net);
}

Predictor load_predictor(std::istream& in) {
    serial::read_header(in, "predictor");
    Predictor p;
    if (serial::read_scalar(in, "has_input") != 0) p.input = read_standardizer(in, "input");
    if (serial::read_scalar(in, "has_projection") != 0) {
        ProjectionStage stage;
        stage.drca = load_drca(in);
        stage.restandardizer = read_standardizer(in, "projected");
        p.projection = std::move(stage);
    }
    p.net = load_network(in);
    return p;
}

}  // namespace driftkd
