#pragma once

#include <iosfwd>
#include <optional>
#include <span>

#include "driftkd/dataset.hpp"
#include "driftkd/drca.hpp"
#include "driftkd/fcnn.hpp"

namespace driftkd {

struct KdConfig {
    double temperature = 1.0;
    NetworkConfig network{};  ///< input_dim is filled from the data
    TrainConfig teacher_train{};
    TrainConfig student_train{};
    SoftLossOptions student_loss{};  ///< plain form unless overridden
};

/// Union of source rows (first) and target rows, each paired with the
/// teacher's temperature-softened distribution.
struct SoftLabelSet {
    Mat features;
    Mat targets;
};

/// softmax(teacher_logits / T) on the vertical concatenation of source_X and
/// target_X. Source ground-truth labels play no part.
SoftLabelSet make_soft_labels(const Network& teacher, const Mat& source_X, const Mat& target_X, double temperature);

struct KdResult {
    Network teacher;
    Network student;
    SoftLabelSet soft_labels;
    std::vector<double> teacher_loss;
    std::vector<double> student_loss;
};

/// Teacher on labeled source, soft labels on source + target, fresh student
/// trained on those soft labels.
KdResult kd_pipeline(const Mat& source_X, std::span<const int> source_y, const Mat& target_X, const KdConfig& cfg);

/// Same, starting from an already trained teacher.
KdResult distill(Network teacher, const Mat& source_X, const Mat& target_X, const KdConfig& cfg);

/// Projection stage shared by DRCA and KD-DRCA: the fitted projection and the
/// standardizer refitted on projected source features.
struct ProjectionStage {
    DrcaModel drca;
    Standardizer restandardizer;

    Mat apply(const Mat& X) const { return restandardizer.apply(project(drca, X)); }
};

ProjectionStage fit_projection_stage(const Mat& source_X, const Mat& target_X, const DrcaConfig& cfg);

/// End-to-end classifier: optional input standardizer, optional projection
/// stage, network.
struct Predictor {
    std::optional<Standardizer> input;
    std::optional<ProjectionStage> projection;
    Network net;

    Mat transform(const Mat& X) const;
    Mat predict_proba(const Mat& X) const;
    std::vector<int> predict_labels(const Mat& X) const;
};

struct KdDrcaResult {
    Predictor predictor;  ///< projection + student, no input standardizer
    KdResult kd;
};

/// Fit DRCA on (source, target), project and restandardize both, then run
/// kd_pipeline in the projected space.
KdDrcaResult kd_drca_pipeline(const Mat& source_X, std::span<const int> source_y, const Mat& target_X,
                              const DrcaConfig& drca_cfg, const KdConfig& kd_cfg);

void save_predictor(std::ostream& out, const Predictor& p);
Predictor load_predictor(std::istream& in);

}  // namespace driftkd
