#include "driftkd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "driftkd/errors.hpp"

namespace driftkd {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
    if (num_classes < 1) throw DataError("confusion matrix needs at least one class");
}

std::size_t ConfusionMatrix::index(int i, int j) const {
    if (i < 0 || i >= k_ || j < 0 || j >= k_)
        throw DataError("confusion matrix: class index out of range (" + std::to_string(i) + ", " +
                        std::to_string(j) + ")");
    return static_cast<std::size_t>(i * k_ + j);
}

void ConfusionMatrix::add(int truth, int predicted, long n) { counts_[index(truth, predicted)] += n; }

long ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0L); }

long ConfusionMatrix::row_sum(int truth) const {
    long s = 0;
    for (int j = 0; j < k_; ++j) s += at(truth, j);
    return s;
}

long ConfusionMatrix::col_sum(int predicted) const {
    long s = 0;
    for (int i = 0; i < k_; ++i) s += at(i, predicted);
    return s;
}

long ConfusionMatrix::trace() const {
    long s = 0;
    for (int i = 0; i < k_; ++i) s += at(i, i);
    return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
    if (truth.size() != predicted.size())
        throw DataError("confusion: " + std::to_string(truth.size()) + " labels vs " +
                        std::to_string(predicted.size()) + " predictions");
    if (truth.empty()) throw DataError("confusion: no samples");
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    const long total = cm.total();
    if (total == 0) throw DataError("metrics: empty confusion matrix");

    MetricsReport r;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    int included = 0;
    for (int k = 0; k < cm.num_classes(); ++k) {
        const long rows = cm.row_sum(k);
        if (rows == 0) continue;  // absent from the truth set
        const long cols = cm.col_sum(k);
        const double tp = static_cast<double>(cm.at(k, k));
        const double precision = cols > 0 ? tp / static_cast<double>(cols) : 0.0;
        const double recall = tp / static_cast<double>(rows);
        const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        r.precision += precision;
        r.recall += recall;
        r.f1 += f1;
        ++included;
    }
    r.precision /= included;
    r.recall /= included;
    r.f1 /= included;
    return r;
}

MetricsReport evaluate(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
    return metrics(confusion(truth, predicted, num_classes));
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::better: return "better";
        case Verdict::same: return "same";
        case Verdict::worse: return "worse";
    }
    return "?";
}

std::string to_string(Metric m) {
    switch (m) {
        case Metric::accuracy: return "accuracy";
        case Metric::f1: return "f1";
        case Metric::recall: return "recall";
        case Metric::precision: return "precision";
    }
    return "?";
}

double metric_value(const MetricsReport& r, Metric m) {
    switch (m) {
        case Metric::accuracy: return r.accuracy;
        case Metric::f1: return r.f1;
        case Metric::recall: return r.recall;
        case Metric::precision: return r.precision;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Student t distribution
// ---------------------------------------------------------------------------

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1;
    const double qam = a - 1;
    double c = 1;
    double d = 1 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1) < kEps) return h;
    }
    throw NumericsError("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0) || !(b > 0)) throw NumericsError("incomplete_beta: parameters must be positive");
    if (x < 0 || x > 1) throw NumericsError("incomplete_beta: x outside [0,1]");
    if (x == 0) return 0;
    if (x == 1) return 1;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1) / (a + b + 2)) return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    return 1 - std::exp(log_front) * beta_continued_fraction(b, a, 1 - x) / b;
}

double student_t_two_sided(double t, double df) {
    if (!(df > 0)) throw NumericsError("student_t: degrees of freedom must be positive");
    if (std::isinf(t)) return 0;
    return incomplete_beta(df / 2, 0.5, df / (df + t * t));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("paired_t_test: samples have different lengths");
    if (a.size() < 2) throw DataError("paired_t_test: need at least two pairs");

    const auto n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    TTestResult r;
    r.n = static_cast<int>(n);
    r.mean_difference = mean;
    if (sd == 0) {
        r.degenerate = true;
        if (mean == 0) {
            r.t_statistic = 0;
            r.p_value = 1;
            r.verdict = Verdict::same;
        } else {
            r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), mean);
            r.p_value = 0;
            r.verdict = mean > 0 ? Verdict::better : Verdict::worse;
        }
        return r;
    }
    r.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p_value = std::clamp(student_t_two_sided(r.t_statistic, static_cast<double>(n - 1)), 0.0, 1.0);
    if (r.p_value < kSignificanceLevel && mean != 0)
        r.verdict = mean > 0 ? Verdict::better : Verdict::worse;
    return r;
}

CountsTable significance_counts(const std::map<CellKey, TTestResult>& cells, const std::vector<std::string>& methods,
                                const std::vector<int>& tasks, const std::vector<int>& batches) {
    CountsTable table;
    std::ostringstream missing;
    int missing_count = 0;
    for (const auto& method : methods) {
        auto& overall = table[method]["overall"];
        for (int task : tasks) {
            auto& per_task = table[method]["task" + std::to_string(task)];
            for (int batch : batches) {
                for (Metric m : kAllMetrics) {
                    const auto it = cells.find(CellKey{method, task, batch, m});
                    if (it == cells.end()) {
                        if (missing_count++ < 20)
                            missing << " (" << method << ", task" << task << ", batch" << batch << ", "
                                    << to_string(m) << ")";
                        continue;
                    }
                    for (VerdictCounts* c : {&overall, &per_task}) {
                        switch (it->second.verdict) {
                            case Verdict::better: ++c->better; break;
                            case Verdict::same: ++c->same; break;
                            case Verdict::worse: ++c->worse; break;
                        }
                    }
                }
            }
        }
    }
    if (missing_count > 0)
        throw DataError("significance_counts: " + std::to_string(missing_count) + " missing cells:" + missing.str());
    return table;
}

}  // namespace driftkd
