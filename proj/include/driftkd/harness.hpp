#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftkd/dataset.hpp"
#include "driftkd/eval.hpp"
#include "driftkd/fcnn.hpp"

namespace driftkd {

inline constexpr const char* kToolVersion = "1.0.0";

/// Every grid cell of a cross-domain run failed.
class RunFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Task { within_batch = 0, task1 = 1, task2 = 2 };
enum class Method { baseline, kd, drca, kd_drca };

std::string to_string(Task t);
std::string to_string(Method m);
Task parse_task(const std::string& s);
Method parse_method(const std::string& s);

struct GridSpec {
    std::vector<double> temperatures{0.3, 1, 2, 3, 5, 25, 50, 100, 200};
    std::vector<int> dims{50, 100};
    std::vector<double> alphas{0.001, 0.01, 0.1, 1, 10, 100, 1000};
};

/// One hyperparameter setting. Fields that do not apply to a method are unset.
struct GridCell {
    std::optional<double> temperature;
    std::optional<int> dim;
    std::optional<double> alpha;

    bool operator==(const GridCell&) const = default;
};

/// Cells in selection order: temperature outermost, then d, then alpha.
std::vector<GridCell> grid_cells(Method method, const GridSpec& grid);

struct ExperimentSpec {
    Task task = Task::task1;
    Method method = Method::baseline;
    int target_batch = 2;
    int partitions = 30;
    std::uint64_t base_seed = 0;
    GridSpec grid{};
    TrainConfig train{};  ///< seed field is overwritten per work item
    std::vector<int> hidden{100, 50, 20};
    SoftLossOptions student_loss{};
    int workers = 1;
    bool record_time = true;
};

struct CellOutcome {
    int cell_index = 0;
    GridCell cell;
    bool ok = false;
    std::string error;
    MetricsReport validation;
    MetricsReport test;
};

struct RunResult {
    Task task = Task::task1;
    Method method = Method::baseline;
    int batch = 0;
    int partition = 0;
    std::uint64_t seed = 0;  ///< split seed, shared by every method for pairing
    GridCell chosen;
    MetricsReport validation;
    MetricsReport test;
    double seconds = 0;
    std::vector<CellOutcome> cells;  ///< audit trail, not part of runs.csv
};

/// Seeds derived from (base_seed, task, batch, partition, role, index).
std::uint64_t split_seed(std::uint64_t base, Task task, int batch, int partition);
std::uint64_t source_model_seed(std::uint64_t base, Task task, int batch, int partition, int projection_key);
std::uint64_t cell_seed(std::uint64_t base, Task task, int batch, int partition, int cell_index);

/// Source batches for a task: {1} for task 1, {1..n-1} for task 2.
std::vector<int> source_batches(Task task, int target_batch);

/// 70/15/15 split, standardize on train, one FCNN per partition.
std::vector<RunResult> run_within_batch(const Batch& batch, int partitions, std::uint64_t base_seed,
                                        const TrainConfig& train, const std::vector<int>& hidden = {100, 50, 20},
                                        int workers = 1, bool record_time = true);

/// Cross-domain protocol for one (task, method, target batch). `batches`
/// holds all ten batches ordered by index.
std::vector<RunResult> run_cross_domain(const std::vector<Batch>& batches, const ExperimentSpec& spec);

// ---- aggregation ----

struct SummaryStat {
    double mean = 0;
    double std = 0;  ///< sample standard deviation, 0 for a single run
    int n = 0;
};

struct GroupKey {
    Task task;
    Method method;
    int batch;
    Metric metric;
    auto operator<=>(const GroupKey&) const = default;
};

struct RadarRow {
    Method method;
    Task task;
    int batch;
    Metric metric;
    double normalized_mean;  ///< method mean / baseline mean
};

struct ReportBundle {
    std::vector<RunResult> runs;
    std::map<GroupKey, SummaryStat> test_stats;
    std::map<GroupKey, SummaryStat> validation_stats;
    std::map<CellKey, TTestResult> ttests;  ///< test-split metrics vs baseline
    CountsTable counts;
    std::vector<RadarRow> radar;
    nlohmann::json metadata;
};

SummaryStat summarize(const std::vector<double>& values);

/// Paired t-tests vs baseline, counts, radar rows and mean/std tables.
/// Throws DataError when partitions of a method and the baseline do not
/// share identical split seeds, or when run keys repeat.
ReportBundle aggregate(const std::vector<RunResult>& runs, nlohmann::json metadata = nlohmann::json::object());

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Design choices recorded in every summary.json.
nlohmann::json design_decisions();

// ---- files ----

void write_runs_csv(std::ostream& out, const std::vector<RunResult>& runs, bool header = true);
std::vector<RunResult> read_runs_csv(std::istream& in);
void write_cells_csv(std::ostream& out, const std::vector<RunResult>& runs, bool header = true);

/// Appends to `dir`/runs.csv and `dir`/cells.csv, creating them with headers.
/// Throws DataError when a (task, method, batch, partition) key already exists.
void append_runs(const std::filesystem::path& dir, const std::vector<RunResult>& runs);

nlohmann::json summary_json(const ReportBundle& bundle);
void write_report(const std::filesystem::path& dir, const ReportBundle& bundle);

/// Recomputes means/stds from the per-run rows and compares them with the
/// stored summary. Returns the largest absolute discrepancy.
double check_consistency(const nlohmann::json& summary, const std::vector<RunResult>& runs);

}  // namespace driftkd
