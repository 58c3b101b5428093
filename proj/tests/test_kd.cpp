#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "driftkd/errors.hpp"
#include "driftkd/kd.hpp"
#include "support/synthetic.hpp"

using namespace driftkd;

namespace {

Mat gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0, scale);
    Mat A(rows, cols);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = n(rng);
    return A;
}

double entropy(const Vec& p) {
    double h = 0;
    for (double v : p)
        if (v > 0) h -= v * std::log(v);
    return h;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
    int hit = 0;
    for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
    return static_cast<double>(hit) / static_cast<double>(a.size());
}

KdConfig quick_config(double T, std::uint64_t seed) {
    KdConfig cfg;
    cfg.temperature = T;
    cfg.teacher_train.seed = seed;
    cfg.student_train.seed = seed + 1;
    return cfg;
}

}  // namespace

TEST_CASE("make_soft_labels: layout and T = 1") {
    std::mt19937_64 rng(1);
    const Network teacher = init_network({.input_dim = 5}, 3);
    const Mat S = gaussian(7, 5, rng), T = gaussian(4, 5, rng);
    const SoftLabelSet set = make_soft_labels(teacher, S, T, 1.0);
    REQUIRE(set.features.rows() == 11);
    CHECK(set.features.topRows(7) == S);
    CHECK(set.features.bottomRows(4) == T);
    Mat both(11, 5);
    both << S, T;
    CHECK(set.targets == predict_proba(teacher, both));
    CHECK((set.targets.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-9);
    CHECK(set.targets.minCoeff() >= 0);

    CHECK(make_soft_labels(teacher, S, Mat(0, 5), 1.0).targets.rows() == 7);
    CHECK_THROWS_AS(make_soft_labels(teacher, S, gaussian(2, 4, rng), 1.0), NumericsError);
    CHECK_THROWS_AS(make_soft_labels(teacher, S, T, 0.0), NumericsError);
}

TEST_CASE("make_soft_labels: very large T is uniform") {
    std::mt19937_64 rng(2);
    const Network teacher = init_network({.input_dim = 3}, 4);
    const SoftLabelSet set = make_soft_labels(teacher, 10 * gaussian(20, 3, rng), gaussian(5, 3, rng), 1e6);
    CHECK((set.targets.array() - 1.0 / 6).abs().maxCoeff() < 1e-4);
}

TEST_CASE("property: softening monotonicity and argmax preservation") {
    std::mt19937_64 rng(3);
    const std::vector<double> temps{0.3, 1, 2, 5, 25};
    for (int trial = 0; trial < 20; ++trial) {
        const Network teacher = init_network({.input_dim = 4}, 100 + static_cast<std::uint64_t>(trial));
        const Mat X = 3 * gaussian(15, 4, rng);
        const auto logit_argmax = argmax_rows(forward_logits(teacher, X));
        std::vector<SoftLabelSet> sets;
        for (double t : temps) sets.push_back(make_soft_labels(teacher, X, Mat(0, 4), t));
        for (std::size_t k = 0; k < temps.size(); ++k) {
            CHECK(argmax_rows(sets[k].targets) == logit_argmax);
            if (k == 0) continue;
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                CHECK(entropy(sets[k].targets.row(i)) >= entropy(sets[k - 1].targets.row(i)) - 1e-12);
                CHECK(sets[k].targets.row(i).maxCoeff() <= sets[k - 1].targets.row(i).maxCoeff() + 1e-12);
            }
        }
    }
}

TEST_CASE("permuting target rows permutes soft labels") {
    std::mt19937_64 rng(4);
    const Network teacher = init_network({.input_dim = 6}, 5);
    const Mat S = gaussian(5, 6, rng), T = gaussian(9, 6, rng);
    std::vector<Eigen::Index> perm(9);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const Mat Tp = T(perm, Eigen::all);
    const SoftLabelSet a = make_soft_labels(teacher, S, T, 2.0);
    const SoftLabelSet b = make_soft_labels(teacher, S, Tp, 2.0);
    CHECK((a.targets.topRows(5) - b.targets.topRows(5)).cwiseAbs().maxCoeff() < 1e-15);
    for (int i = 0; i < 9; ++i)
        CHECK((b.targets.row(5 + i) - a.targets.row(5 + perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("self-distillation on source only agrees with the teacher") {
    const auto train = testing::make_blobs(20, 6, 6, 1.0, 10);
    const auto held_out = testing::make_blobs(20, 6, 6, 1.0, 11);
    const KdResult r = kd_pipeline(train.X, train.y, Mat(0, 6), quick_config(1.0, 7));
    CHECK(r.soft_labels.features.rows() == train.X.rows());
    CHECK(r.teacher_loss.size() == 200);
    CHECK(r.student_loss.size() == 200);
    const double agreement = accuracy(predict_labels(r.student, held_out.X), predict_labels(r.teacher, held_out.X));
    INFO("agreement " << agreement);
    CHECK(agreement > 0.9);
}

TEST_CASE("no drift: student accuracy within 5 points of the teacher") {
    const auto source = testing::make_blobs(25, 6, 6, 2.0, 20);
    const auto target = testing::make_blobs(25, 6, 6, 2.0, 21);
    const KdResult r = kd_pipeline(source.X, source.y, target.X, quick_config(2.0, 3));
    const double teacher_acc = accuracy(predict_labels(r.teacher, target.X), target.y);
    const double student_acc = accuracy(predict_labels(r.student, target.X), target.y);
    INFO("teacher " << teacher_acc << " student " << student_acc);
    CHECK(std::abs(teacher_acc - student_acc) <= 0.05);
}

TEST_CASE("kd_pipeline and distill are deterministic; distill keeps the teacher") {
    const auto source = testing::make_blobs(10, 6, 4, 1.0, 30);
    const auto target = testing::make_blobs(10, 6, 4, 1.0, 31);
    KdConfig cfg = quick_config(5.0, 12);
    cfg.teacher_train.epochs = cfg.student_train.epochs = 30;
    const KdResult a = kd_pipeline(source.X, source.y, target.X, cfg);
    const KdResult b = kd_pipeline(source.X, source.y, target.X, cfg);
    CHECK(a.student == b.student);
    CHECK(a.teacher == b.teacher);
    CHECK(a.student_loss == b.student_loss);

    const KdResult c = distill(a.teacher, source.X, target.X, cfg);
    CHECK(c.teacher == a.teacher);
    CHECK(c.student == a.student);

    cfg.student_loss = {.student_temperature = 5.0, .scale_by_t_squared = true};
    const KdResult d = distill(a.teacher, source.X, target.X, cfg);
    CHECK_FALSE(d.student == a.student);
    CHECK(std::all_of(d.student_loss.begin(), d.student_loss.end(), [](double v) { return std::isfinite(v); }));
}

TEST_CASE("KD-DRCA: end-to-end prediction equals the manual composition") {
    const auto source = testing::make_blobs(10, 6, 8, 1.0, 40);
    const auto target = testing::make_blobs(10, 6, 8, 1.0, 41, 2.0);
    KdConfig cfg = quick_config(2.0, 5);
    cfg.teacher_train.epochs = cfg.student_train.epochs = 40;
    const KdDrcaResult r = kd_drca_pipeline(source.X, source.y, target.X, {.alpha = 0.1, .dim = 5}, cfg);
    REQUIRE(r.predictor.projection.has_value());
    CHECK_FALSE(r.predictor.input.has_value());
    CHECK(r.predictor.net == r.kd.student);
    CHECK(r.kd.student.input_dim() == 5);

    // Manual oracle: fit pieces independently, then compose.
    const DrcaModel drca = fit_drca(source.X, target.X, {.alpha = 0.1, .dim = 5});
    const Mat Zs = source.X * drca.projection;
    const Vec mu = Zs.colwise().mean();
    const Vec sd = ((Zs.rowwise() - mu.transpose()).array().square().colwise().mean()).sqrt().max(1e-8);
    const Mat Zt = ((target.X * drca.projection).rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
    const Mat manual = predict_proba(r.kd.student, Zt);
    CHECK((r.predictor.predict_proba(target.X) - manual).cwiseAbs().maxCoeff() <= 1e-12);

    const KdDrcaResult again = kd_drca_pipeline(source.X, source.y, target.X, {.alpha = 0.1, .dim = 5}, cfg);
    CHECK(again.predictor.net == r.predictor.net);
    CHECK(again.predictor.projection->drca.projection == r.predictor.projection->drca.projection);
}

TEST_CASE("KD-DRCA with source == target and d = D - 1 tracks plain KD") {
    const auto data = testing::make_blobs(25, 6, 6, 2.0, 50);
    const auto test = testing::make_blobs(25, 6, 6, 2.0, 51);
    const KdConfig cfg = quick_config(2.0, 9);
    const KdResult kd = kd_pipeline(data.X, data.y, data.X, cfg);
    const KdDrcaResult hybrid = kd_drca_pipeline(data.X, data.y, data.X, {.alpha = 1.0, .dim = 5}, cfg);
    const double kd_acc = accuracy(predict_labels(kd.student, test.X), test.y);
    const double hybrid_acc = accuracy(hybrid.predictor.predict_labels(test.X), test.y);
    INFO("kd " << kd_acc << " kd-drca " << hybrid_acc);
    CHECK(std::abs(kd_acc - hybrid_acc) <= 0.05);
}

TEST_CASE("predictor save and load") {
    const auto source = testing::make_blobs(8, 6, 5, 1.0, 60);
    const auto target = testing::make_blobs(8, 6, 5, 1.0, 61, 1.0);
    KdConfig cfg = quick_config(3.0, 2);
    cfg.teacher_train.epochs = cfg.student_train.epochs = 10;
    KdDrcaResult r = kd_drca_pipeline(source.X, source.y, target.X, {.alpha = 1.0, .dim = 3}, cfg);
    r.predictor.input = fit_standardizer(source.X);

    std::stringstream io;
    save_predictor(io, r.predictor);
    const Predictor back = load_predictor(io);
    CHECK(back.predict_proba(target.X) == r.predictor.predict_proba(target.X));
    CHECK(back.predict_labels(target.X) == r.predictor.predict_labels(target.X));

    Predictor plain{std::nullopt, std::nullopt, r.kd.teacher};
    std::stringstream io2;
    save_predictor(io2, plain);
    const Predictor plain_back = load_predictor(io2);
    CHECK_FALSE(plain_back.input.has_value());
    CHECK_FALSE(plain_back.projection.has_value());
    CHECK(plain_back.net == plain.net);

    std::istringstream bad("driftkd-predictor 2\n");
    CHECK_THROWS_AS(load_predictor(bad), DataError);
}
