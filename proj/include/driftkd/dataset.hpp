#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "driftkd/numerics.hpp"

namespace driftkd {

inline constexpr int kNumClasses = 6;
inline constexpr int kNumBatches = 10;
inline constexpr std::size_t kExpectedFeatureDim = 128;

/// One gas measurement. `label` is zero-based (file labels 1..6 map to 0..5).
struct Sample {
    std::vector<double> features;
    int label = 0;

    bool operator==(const Sample&) const = default;
};

/// One time-indexed collection of measurements (index 1..10).
struct Batch {
    int index = 0;
    std::vector<Sample> samples;

    std::size_t dim() const { return samples.empty() ? 0 : samples.front().features.size(); }
    std::size_t size() const { return samples.size(); }
};

/// Per-feature z-score transform. `std` entries are floored at kStdFloor.
struct Standardizer {
    static constexpr double kStdFloor = 1e-8;

    Vec mean;
    Vec std;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

    Mat apply(const Mat& X) const;
    Mat invert(const Mat& X) const;
};

Standardizer fit_standardizer(const Mat& X);
Standardizer fit_standardizer(const std::vector<Sample>& samples);
std::vector<Sample> apply_standardizer(const Standardizer& s, const std::vector<Sample>& samples);

/// Seeded shuffle of [0, n) divided by fractions.
struct PartitionSpec {
    std::uint64_t seed = 0;
    std::vector<double> fractions;
};

/// Parts are disjoint, cover every index, and depend only on
/// (batch.index, spec.seed, batch.size()).
std::vector<std::vector<std::size_t>> split_partition(const Batch& batch, const PartitionSpec& spec);

/// Part sizes for `n` items: floor of each share, remainder handed one by one
/// to the earliest parts.
std::vector<std::size_t> partition_sizes(std::size_t n, const std::vector<double>& fractions);

// ---- sparse `label idx:value ...` format ----

Batch parse_batch(std::istream& in, int expected_index, const std::string& source_name = "<stream>");
Batch parse_batch_file(const std::filesystem::path& path, int expected_index);
void write_batch(std::ostream& out, const Batch& batch);
void write_batch_file(const std::filesystem::path& path, const Batch& batch);

/// Loads batch1.dat .. batch10.dat and checks that they share one feature
/// dimension. Warns on stderr when that dimension is not 128.
std::vector<Batch> load_batches(const std::filesystem::path& dir);

/// Feature matrix (rows in sample order) and labels of a subset of samples.
Mat features_of(const std::vector<Sample>& samples);
Mat features_of(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx);
std::vector<int> labels_of(const std::vector<Sample>& samples);
std::vector<int> labels_of(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx);

}  // namespace driftkd
