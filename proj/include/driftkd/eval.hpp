#pragma once

#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace driftkd {

/// counts[i][j] = number of samples with true class i predicted as j.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes = 6);

    int num_classes() const { return k_; }
    long at(int truth, int predicted) const { return counts_[index(truth, predicted)]; }
    void add(int truth, int predicted, long n = 1);
    long total() const;
    long row_sum(int truth) const;
    long col_sum(int predicted) const;
    long trace() const;

private:
    std::size_t index(int i, int j) const;

    int k_;
    std::vector<long> counts_;
};

/// Macro-averaged over classes present in the truth set.
struct MetricsReport {
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int num_classes = 6);
MetricsReport metrics(const ConfusionMatrix& cm);
MetricsReport evaluate(std::span<const int> truth, std::span<const int> predicted, int num_classes = 6);

enum class Verdict { better, same, worse };
std::string to_string(Verdict v);

struct TTestResult {
    double t_statistic = 0;
    double p_value = 1;
    double mean_difference = 0;
    int n = 0;
    Verdict verdict = Verdict::same;
    bool degenerate = false;  ///< differences had zero variance
};

inline constexpr double kSignificanceLevel = 0.05;

/// Two-sided paired t-test on a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Two-sided tail P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

// ---- significance tables ----

enum class Metric { accuracy, f1, recall, precision };
inline constexpr Metric kAllMetrics[] = {Metric::accuracy, Metric::f1, Metric::recall, Metric::precision};
std::string to_string(Metric m);
double metric_value(const MetricsReport& r, Metric m);

struct CellKey {
    std::string method;
    int task = 0;
    int batch = 0;
    Metric metric = Metric::accuracy;

    auto operator<=>(const CellKey&) const = default;
};

struct VerdictCounts {
    int better = 0;
    int same = 0;
    int worse = 0;
    int total() const { return better + same + worse; }
    bool operator==(const VerdictCounts&) const = default;
};

/// Tallies per method: scope "overall" and "task<k>".
using CountsTable = std::map<std::string, std::map<std::string, VerdictCounts>>;

/// Every (method, task, batch, metric) combination of the expected sets must
/// be present; missing cells are listed in the thrown DataError.
CountsTable significance_counts(const std::map<CellKey, TTestResult>& cells, const std::vector<std::string>& methods,
                                const std::vector<int>& tasks, const std::vector<int>& batches);

}  // namespace driftkd
