#include "driftkd/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "driftkd/errors.hpp"
#include "driftkd/harness.hpp"

namespace driftkd::cli {

namespace {

namespace fs = std::filesystem;

std::vector<int> parse_batches(const std::string& spec, int first) {
    std::vector<int> out;
    if (spec == "all") {
        for (int b = first; b <= kNumBatches; ++b) out.push_back(b);
        return out;
    }
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        int b = 0;
        try {
            b = std::stoi(tok);
        } catch (const std::exception&) {
            throw CLI::ValidationError("--batches", "not a batch number: '" + tok + "'");
        }
        if (b < first || b > kNumBatches)
            throw CLI::ValidationError("--batches", "batch " + tok + " outside [" + std::to_string(first) + ",10]");
        out.push_back(b);
    }
    if (out.empty()) throw CLI::ValidationError("--batches", "empty batch list");
    return out;
}

std::vector<Method> parse_methods(const std::string& spec) {
    if (spec == "all") return {Method::baseline, Method::kd, Method::drca, Method::kd_drca};
    std::vector<Method> out;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(parse_method(tok));
        } catch (const DataError& e) {
            throw CLI::ValidationError("--method", e.what());
        }
    }
    return out;
}

/// Records every invocation that wrote into an output directory.
void record_invocation(const fs::path& dir, const nlohmann::json& entry) {
    fs::create_directories(dir);
    const auto path = dir / "config.json";
    nlohmann::json config = {{"invocations", nlohmann::json::array()}};
    if (fs::exists(path)) {
        std::ifstream in(path);
        config = nlohmann::json::parse(in);
    }
    config["invocations"].push_back(entry);
    std::ofstream out(path);
    out << config.dump(2) << '\n';
}

nlohmann::json train_json(const TrainConfig& t) {
    return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
            {"optimizer", "adam"}, {"beta1", t.beta1}, {"beta2", t.beta2}, {"adam_eps", t.adam_eps}};
}

struct CommonTraining {
    TrainConfig train;
    int workers = 1;
    bool no_timing = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--epochs", train.epochs, "training epochs")->check(CLI::NonNegativeNumber);
        cmd->add_option("--batch-size", train.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
        cmd->add_option("--learning-rate", train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
        cmd->add_option("--workers", workers, "parallel workers")->check(CLI::PositiveNumber);
        cmd->add_flag("--no-timing", no_timing, "write 0 in the seconds column (byte-reproducible runs.csv)");
    }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sensor-drift compensation benchmark: baseline, KD, DRCA and KD-DRCA on the gas sensor drift batches",
                 "driftkd"};
    app.require_subcommand(1);

    // manifest
    std::string manifest_dir;
    auto* manifest = app.add_subcommand("manifest", "print per-batch sample counts and feature dimension");
    manifest->add_option("data_dir", manifest_dir, "directory holding batch1.dat .. batch10.dat")->required();

    // within
    std::string within_data, within_out, within_batches = "all";
    int within_partitions = 30;
    std::uint64_t within_seed = 0;
    CommonTraining within_train;
    auto* within = app.add_subcommand("within", "within-batch reference (70/15/15 splits)");
    within->add_option("--data", within_data, "dataset directory")->required();
    within->add_option("--partitions", within_partitions, "random partitions per batch")->check(CLI::PositiveNumber);
    within->add_option("--seed", within_seed, "base seed");
    within->add_option("--batches", within_batches, "comma-separated batch list or 'all'");
    within->add_option("--out", within_out, "output directory")->required();
    within_train.add_to(within);

    // run
    std::string run_data, run_out, run_batches = "all", run_methods;
    int run_task = 1;
    int run_partitions = 30;
    std::uint64_t run_seed = 0;
    GridSpec grid;
    CommonTraining run_train;
    bool t_squared = false;
    auto* runc = app.add_subcommand("run", "cross-domain experiment for one task");
    runc->add_option("--data", run_data, "dataset directory")->required();
    runc->add_option("--task", run_task, "1: batch 1 -> batch n, 2: batches 1..n-1 -> batch n")
        ->required()
        ->check(CLI::IsMember({1, 2}));
    runc->add_option("--method", run_methods, "baseline|kd|drca|kd-drca, a comma list, or 'all'")->required();
    runc->add_option("--batches", run_batches, "target batches (2..10), comma list or 'all'");
    runc->add_option("--partitions", run_partitions, "random 50/50 validation/test partitions")
        ->check(CLI::PositiveNumber);
    runc->add_option("--seed", run_seed, "base seed");
    runc->add_option("--temperatures", grid.temperatures, "KD temperature grid")->delimiter(',');
    runc->add_option("--dims", grid.dims, "DRCA subspace dimension grid")->delimiter(',');
    runc->add_option("--alphas", grid.alphas, "DRCA alpha grid")->delimiter(',');
    runc->add_flag("--kd-t-squared", t_squared, "conventional distillation loss: scale student logits by 1/T, loss by T^2");
    runc->add_option("--out", run_out, "output directory")->required();
    run_train.add_to(runc);

    // report
    std::string report_in, report_out;
    bool verify = false;
    auto* report = app.add_subcommand("report", "aggregate runs.csv into t-tests, counts and radar data");
    report->add_option("--in", report_in, "directory with runs.csv")->required();
    report->add_option("--out", report_out, "output directory")->required();
    report->add_flag("--verify", verify, "re-read summary.json and check it against runs.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    }

    try {
        if (*manifest) {
            const auto batches = load_batches(manifest_dir);
            out << "batch,samples,dim";
            for (int c = 1; c <= kNumClasses; ++c) out << ",class" << c;
            out << '\n';
            std::size_t total = 0;
            for (const auto& b : batches) {
                std::array<int, kNumClasses> per_class{};
                for (const auto& s : b.samples) ++per_class[static_cast<std::size_t>(s.label)];
                out << b.index << ',' << b.size() << ',' << b.dim();
                for (int c : per_class) out << ',' << c;
                out << '\n';
                total += b.size();
            }
            out << "total," << total << ',' << batches.front().dim() << '\n';
            return kSuccess;
        }

        if (*within) {
            std::vector<int> batch_ids;
            try {
                batch_ids = parse_batches(within_batches, 1);
            } catch (const CLI::ValidationError& e) {
                err << "error: " << e.what() << '\n';
                return kUsageError;
            }
            const auto batches = load_batches(within_data);
            std::vector<RunResult> all;
            for (int b : batch_ids) {
                err << "within-batch " << b << '\n';
                auto r = run_within_batch(batches[static_cast<std::size_t>(b - 1)], within_partitions, within_seed,
                                          within_train.train, {100, 50, 20}, within_train.workers,
                                          !within_train.no_timing);
                all.insert(all.end(), r.begin(), r.end());
            }
            append_runs(within_out, all);
            record_invocation(within_out, {{"command", "within"},
                                           {"batches", batch_ids},
                                           {"partitions", within_partitions},
                                           {"seed", within_seed},
                                           {"train", train_json(within_train.train)}});
            return kSuccess;
        }

        if (*runc) {
            std::vector<int> targets;
            std::vector<Method> methods;
            try {
                targets = parse_batches(run_batches, 2);
                methods = parse_methods(run_methods);
                for (double t : grid.temperatures)
                    if (!(t > 0)) throw CLI::ValidationError("--temperatures", "must be positive");
                for (double a : grid.alphas)
                    if (!(a > 0)) throw CLI::ValidationError("--alphas", "must be positive");
                for (int d : grid.dims)
                    if (d < 1) throw CLI::ValidationError("--dims", "must be positive");
                if (grid.temperatures.empty() || grid.alphas.empty() || grid.dims.empty())
                    throw CLI::ValidationError("grid", "grid lists must be non-empty");
            } catch (const CLI::ValidationError& e) {
                err << "error: " << e.what() << '\n';
                return kUsageError;
            }
            const auto batches = load_batches(run_data);
            std::vector<RunResult> all;
            for (Method m : methods)
                for (int b : targets) {
                    err << "task" << run_task << ' ' << to_string(m) << " batch " << b << '\n';
                    ExperimentSpec spec;
                    spec.task = run_task == 1 ? Task::task1 : Task::task2;
                    spec.method = m;
                    spec.target_batch = b;
                    spec.partitions = run_partitions;
                    spec.base_seed = run_seed;
                    spec.grid = grid;
                    spec.train = run_train.train;
                    spec.student_loss.scale_by_t_squared = t_squared;
                    spec.workers = run_train.workers;
                    spec.record_time = !run_train.no_timing;
                    auto r = run_cross_domain(batches, spec);
                    all.insert(all.end(), r.begin(), r.end());
                }
            append_runs(run_out, all);
            nlohmann::json method_names = nlohmann::json::array();
            for (Method m : methods) method_names.push_back(to_string(m));
            record_invocation(run_out, {{"command", "run"},
                                        {"task", run_task},
                                        {"methods", method_names},
                                        {"batches", targets},
                                        {"partitions", run_partitions},
                                        {"seed", run_seed},
                                        {"grid",
                                         {{"temperatures", grid.temperatures},
                                          {"dims", grid.dims},
                                          {"alphas", grid.alphas}}},
                                        {"kd_t_squared", t_squared},
                                        {"train", train_json(run_train.train)}});
            return kSuccess;
        }

        if (*report) {
            const fs::path in_dir(report_in);
            std::ifstream runs_in(in_dir / "runs.csv");
            if (!runs_in) throw DataError("cannot open " + (in_dir / "runs.csv").string());
            const auto runs = read_runs_csv(runs_in);
            nlohmann::json metadata = nlohmann::json::object();
            if (fs::exists(in_dir / "config.json")) {
                std::ifstream cin(in_dir / "config.json");
                metadata["config"] = nlohmann::json::parse(cin);
            }
            const auto bundle = aggregate(runs, metadata);
            write_report(report_out, bundle);
            if (verify) {
                std::ifstream sin(fs::path(report_out) / "summary.json");
                const double worst = check_consistency(nlohmann::json::parse(sin), runs);
                if (!(worst <= 1e-12)) {
                    err << "error: summary.json disagrees with runs.csv (max deviation " << worst << ")\n";
                    return kDataError;
                }
                out << "summary.json consistent with runs.csv (max deviation " << worst << ")\n";
            }
            for (const auto& [method, scopes] : bundle.counts)
                for (const auto& [scope, c] : scopes)
                    out << method << ' ' << scope << ": +" << c.better << " =" << c.same << " -" << c.worse << '\n';
            return kSuccess;
        }
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "run failure: " << e.what() << '\n';
        return kRunFailure;
    }
    return kUsageError;
}

}  // namespace driftkd::cli
