#include "driftkd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "driftkd/errors.hpp"
#include "driftkd/kd.hpp"
#include "driftkd/seed.hpp"
#include "driftkd/serialize.hpp"

namespace driftkd {

namespace {

// Seed roles.
constexpr std::uint64_t kSplitRole = 1;
constexpr std::uint64_t kSourceModelRole = 2;
constexpr std::uint64_t kCellRole = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; the body must catch its own exceptions.
template <class F>
void parallel_for(std::size_t n, int workers, F&& body) {
    const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
}

MetricsReport evaluate_rows(const Network& net, const Mat& X, const std::vector<int>& y,
                            const std::vector<std::size_t>& idx) {
    std::vector<Eigen::Index> rows(idx.begin(), idx.end());
    const Mat Xs = X(rows, Eigen::all);
    std::vector<int> truth;
    truth.reserve(idx.size());
    for (auto i : idx) truth.push_back(y[i]);
    return evaluate(truth, predict_labels(net, Xs), kNumClasses);
}

Batch concat_batches(const std::vector<Batch>& batches, const std::vector<int>& indices) {
    Batch out;
    out.index = indices.back();
    for (int b : indices) {
        const auto& src = batches.at(static_cast<std::size_t>(b - 1));
        if (src.index != b) throw DataError("batches must be ordered by index");
        out.samples.insert(out.samples.end(), src.samples.begin(), src.samples.end());
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Task t) {
    switch (t) {
        case Task::within_batch: return "within";
        case Task::task1: return "task1";
        case Task::task2: return "task2";
    }
    return "?";
}

std::string to_string(Method m) {
    switch (m) {
        case Method::baseline: return "baseline";
        case Method::kd: return "kd";
        case Method::drca: return "drca";
        case Method::kd_drca: return "kd-drca";
    }
    return "?";
}

Task parse_task(const std::string& s) {
    if (s == "within" || s == "0") return Task::within_batch;
    if (s == "task1" || s == "1") return Task::task1;
    if (s == "task2" || s == "2") return Task::task2;
    throw DataError("unknown task '" + s + "'");
}

Method parse_method(const std::string& s) {
    if (s == "baseline") return Method::baseline;
    if (s == "kd") return Method::kd;
    if (s == "drca") return Method::drca;
    if (s == "kd-drca" || s == "kd_drca") return Method::kd_drca;
    throw DataError("unknown method '" + s + "'");
}

std::vector<GridCell> grid_cells(Method method, const GridSpec& grid) {
    std::vector<GridCell> cells;
    const bool uses_t = method == Method::kd || method == Method::kd_drca;
    const bool uses_proj = method == Method::drca || method == Method::kd_drca;
    const std::vector<std::optional<double>> ts =
        uses_t ? std::vector<std::optional<double>>(grid.temperatures.begin(), grid.temperatures.end())
               : std::vector<std::optional<double>>{std::nullopt};
    std::vector<std::pair<std::optional<int>, std::optional<double>>> projections;
    if (uses_proj) {
        for (int d : grid.dims)
            for (double a : grid.alphas) projections.emplace_back(d, a);
    } else {
        projections.emplace_back(std::nullopt, std::nullopt);
    }
    for (const auto& t : ts)
        for (const auto& [d, a] : projections) cells.push_back(GridCell{t, d, a});
    return cells;
}

std::uint64_t split_seed(std::uint64_t base, Task task, int batch, int partition) {
    return derive_seed({base, static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(batch),
                        static_cast<std::uint64_t>(partition), kSplitRole});
}

std::uint64_t source_model_seed(std::uint64_t base, Task task, int batch, int partition, int projection_key) {
    return derive_seed({base, static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(batch),
                        static_cast<std::uint64_t>(partition), kSourceModelRole,
                        static_cast<std::uint64_t>(projection_key)});
}

std::uint64_t cell_seed(std::uint64_t base, Task task, int batch, int partition, int cell_index) {
    return derive_seed({base, static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(batch),
                        static_cast<std::uint64_t>(partition), kCellRole, static_cast<std::uint64_t>(cell_index)});
}

std::vector<int> source_batches(Task task, int target_batch) {
    if (task == Task::within_batch) return {target_batch};
    if (target_batch < 2 || target_batch > kNumBatches)
        throw DataError("target batch must lie in [2,10], got " + std::to_string(target_batch));
    if (task == Task::task1) return {1};
    std::vector<int> out(static_cast<std::size_t>(target_batch - 1));
    std::iota(out.begin(), out.end(), 1);
    return out;
}

// ---------------------------------------------------------------------------
// Within-batch reference
// ---------------------------------------------------------------------------

std::vector<RunResult> run_within_batch(const Batch& batch, int partitions, std::uint64_t base_seed,
                                        const TrainConfig& train, const std::vector<int>& hidden, int workers,
                                        bool record_time) {
    if (partitions < 1) throw DataError("partitions must be positive");
    if (batch.size() < 3) throw DataError("batch " + std::to_string(batch.index) + " is too small to split 70/15/15");

    std::vector<RunResult> results(static_cast<std::size_t>(partitions));
    std::vector<std::string> errors(results.size());
    parallel_for(results.size(), workers, [&](std::size_t p) {
        const auto start = Clock::now();
        const int part = static_cast<int>(p);
        RunResult& r = results[p];
        r.task = Task::within_batch;
        r.method = Method::baseline;
        r.batch = batch.index;
        r.partition = part;
        r.seed = split_seed(base_seed, Task::within_batch, batch.index, part);
        try {
            const auto parts = split_partition(batch, PartitionSpec{r.seed, {0.7, 0.15, 0.15}});
            const Mat train_raw = features_of(batch.samples, parts[0]);
            const Standardizer s = fit_standardizer(train_raw);
            const Mat X = s.apply(features_of(batch.samples));
            const std::vector<int> y = labels_of(batch.samples);

            NetworkConfig net_cfg{static_cast<int>(X.cols()), hidden, kNumClasses};
            TrainConfig cfg = train;
            cfg.seed = source_model_seed(base_seed, Task::within_batch, batch.index, part, 0);
            auto trained = train_supervised(init_network(net_cfg, cfg.seed), s.apply(train_raw),
                                            labels_of(batch.samples, parts[0]), cfg);
            r.validation = evaluate_rows(trained.net, X, y, parts[1]);
            r.test = evaluate_rows(trained.net, X, y, parts[2]);
            r.cells.push_back(CellOutcome{0, {}, true, {}, r.validation, r.test});
        } catch (const std::exception& e) {
            errors[p] = e.what();
        }
        r.seconds = record_time ? seconds_since(start) : 0.0;
    });
    for (std::size_t p = 0; p < errors.size(); ++p)
        if (!errors[p].empty())
            throw RunFailure("within-batch " + std::to_string(batch.index) + " partition " + std::to_string(p) +
                             ": " + errors[p]);
    return results;
}

// ---------------------------------------------------------------------------
// Cross-domain protocol
// ---------------------------------------------------------------------------

std::vector<RunResult> run_cross_domain(const std::vector<Batch>& batches, const ExperimentSpec& spec) {
    if (spec.task == Task::within_batch) throw DataError("run_cross_domain: use run_within_batch for within-batch runs");
    if (spec.partitions < 1) throw DataError("partitions must be positive");
    if (batches.size() != static_cast<std::size_t>(kNumBatches)) throw DataError("expected ten batches");

    const Batch source = concat_batches(batches, source_batches(spec.task, spec.target_batch));
    const Batch& target = batches.at(static_cast<std::size_t>(spec.target_batch - 1));

    // Standardization is fitted on the source domain only.
    const Standardizer standardizer = fit_standardizer(features_of(source.samples));
    const Mat Xs = standardizer.apply(features_of(source.samples));
    const std::vector<int> ys = labels_of(source.samples);
    const Mat Xt = standardizer.apply(features_of(target.samples));
    const std::vector<int> yt = labels_of(target.samples);
    const int D = static_cast<int>(Xs.cols());

    const auto P = static_cast<std::size_t>(spec.partitions);
    std::vector<RunResult> results(P);
    std::vector<std::vector<std::size_t>> val_idx(P), test_idx(P);
    for (std::size_t p = 0; p < P; ++p) {
        RunResult& r = results[p];
        r.task = spec.task;
        r.method = spec.method;
        r.batch = spec.target_batch;
        r.partition = static_cast<int>(p);
        r.seed = split_seed(spec.base_seed, spec.task, spec.target_batch, r.partition);
        auto parts = split_partition(target, PartitionSpec{r.seed, {0.5, 0.5}});
        val_idx[p] = std::move(parts[0]);
        test_idx[p] = std::move(parts[1]);
    }

    const std::vector<GridCell> cells = grid_cells(spec.method, spec.grid);
    const bool distills = spec.method == Method::kd || spec.method == Method::kd_drca;
    const bool projects = spec.method == Method::drca || spec.method == Method::kd_drca;
    const std::size_t n_temps = distills ? spec.grid.temperatures.size() : 1;
    const std::size_t n_keys = cells.size() / n_temps;

    std::vector<std::vector<CellOutcome>> outcomes(P, std::vector<CellOutcome>(cells.size()));
    std::vector<std::vector<double>> busy(P, std::vector<double>(cells.size() + n_keys, 0.0));
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t c = 0; c < cells.size(); ++c) {
            outcomes[p][c].cell_index = static_cast<int>(c);
            outcomes[p][c].cell = cells[c];
        }

    auto kd_config = [&](double temperature, std::uint64_t student_seed) {
        KdConfig cfg;
        cfg.temperature = temperature;
        cfg.network = NetworkConfig{0, spec.hidden, kNumClasses};
        cfg.student_train = spec.train;
        cfg.student_train.seed = student_seed;
        cfg.student_loss = spec.student_loss;
        // The conventional variant softens the student with the same T.
        if (cfg.student_loss.scale_by_t_squared) cfg.student_loss.student_temperature = temperature;
        return cfg;
    };

    for (std::size_t key = 0; key < n_keys; ++key) {
        // Cells sharing this projection key: key, key + n_keys, ...
        const GridCell& proto = cells[key];
        std::optional<ProjectionStage> stage;
        Mat Xs_k = Xs, Xt_k = Xt;
        std::string key_error;
        if (projects) {
            try {
                if (*proto.dim >= D)
                    throw NumericsError("subspace dimension " + std::to_string(*proto.dim) +
                                        " is not below the feature dimension " + std::to_string(D));
                DrcaConfig dc;
                dc.dim = *proto.dim;
                dc.alpha = *proto.alpha;
                stage = fit_projection_stage(Xs, Xt, dc);
                Xs_k = stage->apply(Xs);
                Xt_k = stage->apply(Xt);
            } catch (const std::exception& e) {
                key_error = e.what();
            }
        }

        // One source-trained network per partition: the final model for
        // baseline/DRCA, the teacher for KD/KD-DRCA.
        std::vector<std::optional<Network>> source_nets(P);
        std::vector<std::string> source_errors(P, key_error);
        if (key_error.empty()) {
            parallel_for(P, spec.workers, [&](std::size_t p) {
                const auto start = Clock::now();
                try {
                    TrainConfig cfg = spec.train;
                    cfg.seed = source_model_seed(spec.base_seed, spec.task, spec.target_batch, static_cast<int>(p),
                                                 projects ? static_cast<int>(key) + 1 : 0);
                    NetworkConfig net_cfg{static_cast<int>(Xs_k.cols()), spec.hidden, kNumClasses};
                    source_nets[p] = train_supervised(init_network(net_cfg, cfg.seed), Xs_k, ys, cfg).net;
                } catch (const std::exception& e) {
                    source_errors[p] = e.what();
                }
                busy[p][cells.size() + key] = seconds_since(start);
            });
        }

        parallel_for(P * n_temps, spec.workers, [&](std::size_t item) {
            const std::size_t p = item / n_temps;
            const std::size_t c = (item % n_temps) * n_keys + key;
            CellOutcome& out = outcomes[p][c];
            if (!source_nets[p]) {
                out.error = source_errors[p];
                return;
            }
            const auto start = Clock::now();
            try {
                if (distills) {
                    const auto cfg = kd_config(*cells[c].temperature,
                                               cell_seed(spec.base_seed, spec.task, spec.target_batch,
                                                         static_cast<int>(p), static_cast<int>(c)));
                    const KdResult kd = distill(*source_nets[p], Xs_k, Xt_k, cfg);
                    out.validation = evaluate_rows(kd.student, Xt_k, yt, val_idx[p]);
                    out.test = evaluate_rows(kd.student, Xt_k, yt, test_idx[p]);
                } else {
                    out.validation = evaluate_rows(*source_nets[p], Xt_k, yt, val_idx[p]);
                    out.test = evaluate_rows(*source_nets[p], Xt_k, yt, test_idx[p]);
                }
                out.ok = true;
            } catch (const std::exception& e) {
                out.error = e.what();
            }
            busy[p][c] = seconds_since(start);
        });
    }

    for (std::size_t p = 0; p < P; ++p) {
        RunResult& r = results[p];
        r.cells = std::move(outcomes[p]);
        const CellOutcome* best = nullptr;
        for (const auto& o : r.cells) {
            if (!o.ok) {
                std::cerr << "warning: " << to_string(spec.task) << " " << to_string(spec.method) << " batch "
                          << spec.target_batch << " partition " << p << " cell " << o.cell_index
                          << " failed: " << o.error << '\n';
                continue;
            }
            if (!best || o.validation.accuracy > best->validation.accuracy) best = &o;
        }
        if (!best)
            throw RunFailure(to_string(spec.task) + " " + to_string(spec.method) + " batch " +
                             std::to_string(spec.target_batch) + " partition " + std::to_string(p) +
                             ": every grid cell failed (" + r.cells.front().error + ")");
        r.chosen = best->cell;
        r.validation = best->validation;
        r.test = best->test;
        r.seconds = spec.record_time ? std::accumulate(busy[p].begin(), busy[p].end(), 0.0) : 0.0;
    }
    return results;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

SummaryStat summarize(const std::vector<double>& values) {
    SummaryStat s;
    s.n = static_cast<int>(values.size());
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DataError("spearman: need two equal-length samples of size >= 2");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < order.size();) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0;
    return sxy / std::sqrt(sxx * syy);
}

nlohmann::json design_decisions() {
    return {
        {"preprocessing", "z-score standardization fitted on source-domain features only, applied to both domains; "
                          "std floored at 1e-8"},
        {"label_mapping", "file labels 1..6 mapped to classes 0..5"},
        {"drca_between_scatter_regularizer", "B = S_b + eps*I, eps = 1e-6*trace(S_b)/D + 1e-12"},
        {"drca_eigenproblem", "symmetric form B^-1/2 W B^-1/2, eigenvectors mapped back by B^-1/2"},
        {"drca_columns", "projection columns normalized to unit length, largest entry positive"},
        {"drca_restandardization", "projected features restandardized on projected source data"},
        {"drca_target_rows", "full target batch (validation and test halves, unlabeled)"},
        {"kd_target_rows", "full target batch (validation and test halves, unlabeled)"},
        {"kd_source_targets", "teacher soft labels for source rows; ground-truth labels unused"},
        {"kd_student_loss", "teacher logits divided by T; student logits unscaled unless the T^2 option is set"},
        {"kd_student_architecture", "same as teacher"},
        {"kd_teacher", "teacher equals the baseline network of the same partition"},
        {"optimizer", "Adam lr 1e-3, beta 0.9/0.999, 200 epochs, batch 64, no early stopping"},
        {"network", "hidden [100, 50, 20], ReLU, softmax output, He-normal init"},
        {"metric_averaging", "macro over classes present in the truth set"},
        {"significance", "two-sided paired t-test at 0.05, no multiple-comparison correction"},
        {"selection", "grid cell with highest validation accuracy, ties to the first cell (T, then d, then alpha)"},
        {"radar_normalization", "ratio of means: method mean / baseline mean"},
        {"std_convention", "sample standard deviation (n-1)"},
    };
}

ReportBundle aggregate(const std::vector<RunResult>& runs, nlohmann::json metadata) {
    ReportBundle bundle;
    bundle.runs = runs;
    bundle.metadata = std::move(metadata);

    // (task, method, batch) -> partition -> run
    std::map<std::tuple<Task, Method, int>, std::map<int, const RunResult*>> groups;
    for (const auto& r : runs) {
        auto& g = groups[{r.task, r.method, r.batch}];
        if (!g.emplace(r.partition, &r).second)
            throw DataError("duplicate run: " + to_string(r.task) + " " + to_string(r.method) + " batch " +
                            std::to_string(r.batch) + " partition " + std::to_string(r.partition));
    }

    for (const auto& [key, parts] : groups) {
        const auto& [task, method, batch] = key;
        for (Metric m : kAllMetrics) {
            std::vector<double> test, val;
            for (const auto& [p, r] : parts) {
                test.push_back(metric_value(r->test, m));
                val.push_back(metric_value(r->validation, m));
            }
            bundle.test_stats[{task, method, batch, m}] = summarize(test);
            bundle.validation_stats[{task, method, batch, m}] = summarize(val);
        }
    }

    std::set<std::string> compared_methods;
    std::set<int> tasks_seen, batches_seen;
    bool tests_possible = true;
    for (const auto& [key, parts] : groups) {
        const auto& [task, method, batch] = key;
        if (task == Task::within_batch) continue;
        tasks_seen.insert(static_cast<int>(task));
        batches_seen.insert(batch);
        if (method == Method::baseline) continue;
        compared_methods.insert(to_string(method));

        const auto base_it = groups.find({task, Method::baseline, batch});
        if (base_it == groups.end()) continue;  // reported as missing by significance_counts
        const auto& base = base_it->second;
        if (base.size() != parts.size())
            throw DataError("pairing broken: " + to_string(method) + " has " + std::to_string(parts.size()) +
                            " partitions, baseline has " + std::to_string(base.size()) + " (" + to_string(task) +
                            ", batch " + std::to_string(batch) + ")");
        for (const auto& [p, r] : parts) {
            const auto b = base.find(p);
            if (b == base.end() || b->second->seed != r->seed)
                throw DataError("pairing broken: partition " + std::to_string(p) + " of " + to_string(method) +
                                " does not share its split seed with the baseline (" + to_string(task) + ", batch " +
                                std::to_string(batch) + ")");
        }
        if (parts.size() < 2) {
            tests_possible = false;
            continue;
        }
        for (Metric m : kAllMetrics) {
            std::vector<double> a, b;
            for (const auto& [p, r] : parts) {
                a.push_back(metric_value(r->test, m));
                b.push_back(metric_value(base.at(p)->test, m));
            }
            bundle.ttests[{to_string(method), static_cast<int>(task), batch, m}] = paired_t_test(a, b);
        }
    }

    if (!compared_methods.empty() && tests_possible) {
        bundle.counts = significance_counts(bundle.ttests, {compared_methods.begin(), compared_methods.end()},
                                            {tasks_seen.begin(), tasks_seen.end()},
                                            {batches_seen.begin(), batches_seen.end()});
    } else if (!compared_methods.empty()) {
        bundle.metadata["notes"].push_back("significance tests skipped: fewer than two partitions");
    }

    for (const auto& [key, stat] : bundle.test_stats) {
        if (key.task == Task::within_batch) continue;
        const auto base = bundle.test_stats.find({key.task, Method::baseline, key.batch, key.metric});
        if (base == bundle.test_stats.end()) continue;
        const double ratio = base->second.mean > 0 ? stat.mean / base->second.mean
                                                   : std::numeric_limits<double>::quiet_NaN();
        bundle.radar.push_back(RadarRow{key.method, key.task, key.batch, key.metric, ratio});
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kRunsHeader =
    "task,method,batch,partition,seed,chosen_T,chosen_d,chosen_alpha,val_acc,val_f1,val_recall,val_precision,"
    "test_acc,test_f1,test_recall,test_precision,seconds";

std::string opt(const std::optional<double>& v) { return v ? serial::format_double(*v) : ""; }
std::string opt(const std::optional<int>& v) { return v ? std::to_string(*v) : ""; }

void write_metrics(std::ostream& out, const MetricsReport& m) {
    out << serial::format_double(m.accuracy) << ',' << serial::format_double(m.f1) << ','
        << serial::format_double(m.recall) << ',' << serial::format_double(m.precision);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("runs.csv line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

std::string metric_label(Metric m) { return to_string(m); }

std::string run_key(const RunResult& r) {
    return to_string(r.task) + "/" + to_string(r.method) + "/" + std::to_string(r.batch) + "/" +
           std::to_string(r.partition);
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

void write_runs_csv(std::ostream& out, const std::vector<RunResult>& runs, bool header) {
    if (header) out << kRunsHeader << '\n';
    for (const auto& r : runs) {
        out << to_string(r.task) << ',' << to_string(r.method) << ',' << r.batch << ',' << r.partition << ','
            << r.seed << ',' << opt(r.chosen.temperature) << ',' << opt(r.chosen.dim) << ','
            << opt(r.chosen.alpha) << ',';
        write_metrics(out, r.validation);
        out << ',';
        write_metrics(out, r.test);
        out << ',' << serial::format_double(r.seconds) << '\n';
    }
}

std::vector<RunResult> read_runs_csv(std::istream& in) {
    std::vector<RunResult> runs;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw DataError("runs.csv is empty");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kRunsHeader) throw DataError("runs.csv: unexpected header");
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 17) throw DataError("runs.csv line " + std::to_string(line_no) + ": expected 17 fields");
        RunResult r;
        r.task = parse_task(f[0]);
        r.method = parse_method(f[1]);
        r.batch = static_cast<int>(to_double(f[2], line_no));
        r.partition = static_cast<int>(to_double(f[3], line_no));
        try {
            r.seed = std::stoull(f[4]);
        } catch (const std::exception&) {
            throw DataError("runs.csv line " + std::to_string(line_no) + ": bad seed");
        }
        if (!f[5].empty()) r.chosen.temperature = to_double(f[5], line_no);
        if (!f[6].empty()) r.chosen.dim = static_cast<int>(to_double(f[6], line_no));
        if (!f[7].empty()) r.chosen.alpha = to_double(f[7], line_no);
        r.validation = {to_double(f[8], line_no), to_double(f[11], line_no), to_double(f[10], line_no),
                        to_double(f[9], line_no)};
        r.test = {to_double(f[12], line_no), to_double(f[15], line_no), to_double(f[14], line_no),
                  to_double(f[13], line_no)};
        r.seconds = to_double(f[16], line_no);
        runs.push_back(std::move(r));
    }
    return runs;
}

void write_cells_csv(std::ostream& out, const std::vector<RunResult>& runs, bool header) {
    if (header) out << "task,method,batch,partition,cell,T,d,alpha,status,val_acc,test_acc,selected\n";
    for (const auto& r : runs)
        for (const auto& c : r.cells) {
            out << to_string(r.task) << ',' << to_string(r.method) << ',' << r.batch << ',' << r.partition << ','
                << c.cell_index << ',' << opt(c.cell.temperature) << ',' << opt(c.cell.dim) << ','
                << opt(c.cell.alpha) << ',' << (c.ok ? "ok" : "failed") << ',';
            if (c.ok) out << serial::format_double(c.validation.accuracy) << ',' << serial::format_double(c.test.accuracy);
            else out << ',';
            out << ',' << (c.ok && c.cell == r.chosen ? 1 : 0) << '\n';
        }
}

void append_runs(const std::filesystem::path& dir, const std::vector<RunResult>& runs) {
    std::filesystem::create_directories(dir);
    const auto runs_path = dir / "runs.csv";
    const auto cells_path = dir / "cells.csv";
    const bool existing = std::filesystem::exists(runs_path);
    if (existing) {
        std::ifstream in(runs_path);
        std::set<std::string> keys;
        for (const auto& r : read_runs_csv(in)) keys.insert(run_key(r));
        for (const auto& r : runs)
            if (keys.count(run_key(r)))
                throw DataError(runs_path.string() + " already holds run " + run_key(r) +
                                "; choose a fresh output directory");
    }
    {
        std::ofstream out(runs_path, std::ios::app);
        if (!out) throw DataError("cannot write " + runs_path.string());
        write_runs_csv(out, runs, !existing);
    }
    const bool cells_existing = std::filesystem::exists(cells_path);
    std::ofstream out(cells_path, std::ios::app);
    if (!out) throw DataError("cannot write " + cells_path.string());
    write_cells_csv(out, runs, !cells_existing);
}

nlohmann::json summary_json(const ReportBundle& bundle) {
    using nlohmann::json;
    json j;
    j["tool"] = {{"name", "driftkd"}, {"version", kToolVersion}};
    j["metadata"] = bundle.metadata;
    j["metadata"]["design_decisions"] = design_decisions();

    auto stats = [](const std::map<GroupKey, SummaryStat>& table) {
        json arr = json::array();
        for (const auto& [k, s] : table)
            arr.push_back({{"task", to_string(k.task)},
                           {"method", to_string(k.method)},
                           {"batch", k.batch},
                           {"metric", metric_label(k.metric)},
                           {"mean", s.mean},
                           {"std", s.std},
                           {"n", s.n}});
        return arr;
    };
    j["aggregates"]["test"] = stats(bundle.test_stats);
    j["aggregates"]["validation"] = stats(bundle.validation_stats);

    // Across-batch summary of the within-batch reference: mean and std of
    // the per-batch means.
    json within = json::object();
    for (Metric m : kAllMetrics) {
        std::vector<double> means;
        for (const auto& [k, s] : bundle.test_stats)
            if (k.task == Task::within_batch && k.metric == m) means.push_back(s.mean);
        if (means.empty()) continue;
        const auto s = summarize(means);
        within[metric_label(m)] = {{"mean", s.mean}, {"std", s.std}, {"batches", s.n}};
    }
    j["within_batch"] = within;

    json tests = json::array();
    for (const auto& [k, t] : bundle.ttests)
        tests.push_back({{"method", k.method},
                         {"task", "task" + std::to_string(k.task)},
                         {"batch", k.batch},
                         {"metric", metric_label(k.metric)},
                         {"t", number_or_null(t.t_statistic)},
                         {"p", t.p_value},
                         {"mean_difference", t.mean_difference},
                         {"n", t.n},
                         {"verdict", to_string(t.verdict)},
                         {"degenerate", t.degenerate}});
    j["ttests"] = tests;

    json counts = json::object();
    for (const auto& [method, scopes] : bundle.counts)
        for (const auto& [scope, c] : scopes)
            counts[method][scope] = {{"better", c.better}, {"same", c.same}, {"worse", c.worse}};
    j["counts"] = counts;
    return j;
}

void write_report(const std::filesystem::path& dir, const ReportBundle& bundle) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw DataError("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("runs.csv");
        write_runs_csv(out, bundle.runs);
    }
    {
        auto out = open("summary.json");
        out << summary_json(bundle).dump(2) << '\n';
    }
    {
        auto out = open("significance.csv");
        out << "method,task,batch,metric,t,p,verdict\n";
        for (const auto& [k, t] : bundle.ttests)
            out << k.method << ",task" << k.task << ',' << k.batch << ',' << metric_label(k.metric) << ','
                << serial::format_double(t.t_statistic) << ',' << serial::format_double(t.p_value) << ','
                << to_string(t.verdict) << '\n';
    }
    {
        auto out = open("counts.csv");
        out << "method,scope,better,same,worse\n";
        for (const auto& [method, scopes] : bundle.counts)
            for (const auto& [scope, c] : scopes)
                out << method << ',' << scope << ',' << c.better << ',' << c.same << ',' << c.worse << '\n';
    }
    {
        auto out = open("radar.csv");
        out << "method,task,batch,metric,mean_normalized_to_baseline\n";
        for (const auto& r : bundle.radar)
            out << to_string(r.method) << ',' << to_string(r.task) << ',' << r.batch << ',' << metric_label(r.metric)
                << ',' << (std::isfinite(r.normalized_mean) ? serial::format_double(r.normalized_mean) : "") << '\n';
    }
}

double check_consistency(const nlohmann::json& summary, const std::vector<RunResult>& runs) {
    const ReportBundle fresh = aggregate(runs);
    double worst = 0;
    std::size_t matched = 0;
    for (const char* split : {"test", "validation"}) {
        const auto& table = std::string(split) == "test" ? fresh.test_stats : fresh.validation_stats;
        const auto& stored = summary.at("aggregates").at(split);
        for (const auto& row : stored) {
            Metric metric = Metric::accuracy;
            for (Metric m : kAllMetrics)
                if (metric_label(m) == row.at("metric").get<std::string>()) metric = m;
            const GroupKey key{parse_task(row.at("task").get<std::string>()),
                               parse_method(row.at("method").get<std::string>()), row.at("batch").get<int>(), metric};
            const auto it = table.find(key);
            if (it == table.end()) return std::numeric_limits<double>::infinity();
            worst = std::max({worst, std::abs(it->second.mean - row.at("mean").get<double>()),
                              std::abs(it->second.std - row.at("std").get<double>())});
            ++matched;
        }
        if (matched == 0 && !table.empty()) return std::numeric_limits<double>::infinity();
    }
    if (matched != fresh.test_stats.size() + fresh.validation_stats.size())
        return std::numeric_limits<double>::infinity();
    return worst;
}

}  // namespace driftkd
