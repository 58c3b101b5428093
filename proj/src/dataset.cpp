#include "driftkd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>
#include <utility>

#include "driftkd/errors.hpp"
#include "driftkd/seed.hpp"

namespace driftkd {

// ---------------------------------------------------------------------------
// Standardizer
// ---------------------------------------------------------------------------

Mat Standardizer::apply(const Mat& X) const {
    if (X.cols() != mean.size())
        throw DataError("standardizer: expected " + std::to_string(mean.size()) + " features, got " +
                        std::to_string(X.cols()));
    return (X.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Mat Standardizer::invert(const Mat& X) const {
    if (X.cols() != mean.size()) throw DataError("standardizer: dimension mismatch on invert");
    Mat out = X.array().rowwise() * std.transpose().array();
    return out.rowwise() + mean.transpose();
}

Standardizer fit_standardizer(const Mat& X) {
    if (X.rows() == 0 || X.cols() == 0) throw DataError("fit_standardizer: empty input");
    Standardizer s;
    s.mean = X.colwise().mean().transpose();
    // Population convention.
    const Mat centered = X.rowwise() - s.mean.transpose();
    s.std = (centered.array().square().colwise().sum() / static_cast<double>(X.rows())).sqrt().transpose();
    s.std = s.std.cwiseMax(Standardizer::kStdFloor);
    return s;
}

Standardizer fit_standardizer(const std::vector<Sample>& samples) {
    if (samples.empty()) throw DataError("fit_standardizer: empty input");
    return fit_standardizer(features_of(samples));
}

std::vector<Sample> apply_standardizer(const Standardizer& s, const std::vector<Sample>& samples) {
    const Mat Z = s.apply(features_of(samples));
    std::vector<Sample> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        out[i].features.resize(static_cast<std::size_t>(Z.cols()));
        for (Eigen::Index j = 0; j < Z.cols(); ++j) out[i].features[static_cast<std::size_t>(j)] = Z(row, j);
        out[i].label = samples[i].label;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

std::vector<std::size_t> partition_sizes(std::size_t n, const std::vector<double>& fractions) {
    if (fractions.empty()) throw DataError("partition: no fractions given");
    double total = 0;
    for (double f : fractions) {
        if (!(f > 0 && f < 1) && !(fractions.size() == 1 && f == 1.0))
            throw DataError("partition: fractions must lie in (0,1)");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DataError("partition: fractions must sum to 1");

    std::vector<std::size_t> sizes;
    std::size_t assigned = 0;
    for (double f : fractions) {
        // The slack absorbs products like 0.15 * 20 = 2.9999999999999996.
        const auto k = static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
        sizes.push_back(k);
        assigned += k;
    }
    for (std::size_t i = 0; assigned < n; i = (i + 1) % sizes.size(), ++assigned) ++sizes[i];
    return sizes;
}

std::vector<std::vector<std::size_t>> split_partition(const Batch& batch, const PartitionSpec& spec) {
    if (batch.samples.empty()) throw DataError("split_partition: empty batch");
    const auto sizes = partition_sizes(batch.size(), spec.fractions);

    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed({spec.seed, static_cast<std::uint64_t>(batch.index)}));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> parts;
    auto it = order.begin();
    for (std::size_t k : sizes) {
        parts.emplace_back(it, it + static_cast<std::ptrdiff_t>(k));
        it += static_cast<std::ptrdiff_t>(k);
    }
    return parts;
}

// ---------------------------------------------------------------------------
// Sparse text format
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <class T>
bool parse_number(std::string_view text, T& value) {
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    return ec == std::errc() && ptr == end;
}

struct ParsedLine {
    int label = 0;
    std::vector<std::pair<std::size_t, double>> entries;
};

}  // namespace

Batch parse_batch(std::istream& in, int expected_index, const std::string& source_name) {
    if (expected_index < 1 || expected_index > kNumBatches)
        throw DataError("parse_batch: batch index must be in [1,10], got " + std::to_string(expected_index));

    std::vector<ParsedLine> lines;
    std::size_t dim = 0;
    std::string raw;
    std::size_t line_no = 0;

    auto fail = [&](const std::string& why) {
        throw DataError(source_name + ":" + std::to_string(line_no) + ": " + why);
    };

    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = trim(raw);
        if (line.empty()) continue;

        ParsedLine parsed;
        std::size_t pos = 0;
        bool first = true;
        std::vector<bool> seen;
        while (pos < line.size()) {
            const auto next = line.find_first_of(" \t", pos);
            const std::string_view tok = line.substr(pos, next == std::string_view::npos ? next : next - pos);
            pos = next == std::string_view::npos ? line.size() : line.find_first_not_of(" \t", next);
            if (pos == std::string_view::npos) pos = line.size();

            if (first) {
                first = false;
                // The UCI distribution writes `label;concentration`.
                const std::string_view label_tok = tok.substr(0, tok.find(';'));
                int label = 0;
                if (!parse_number(label_tok, label)) fail("malformed label '" + std::string(tok) + "'");
                if (label < 1 || label > kNumClasses)
                    fail("label " + std::to_string(label) + " outside {1..6}");
                parsed.label = label - 1;
                continue;
            }
            const auto colon = tok.find(':');
            if (colon == std::string_view::npos) fail("expected idx:value, got '" + std::string(tok) + "'");
            std::size_t idx = 0;
            double value = 0;
            if (!parse_number(tok.substr(0, colon), idx) || idx == 0)
                fail("malformed feature index in '" + std::string(tok) + "'");
            if (!parse_number(tok.substr(colon + 1), value) || !std::isfinite(value))
                fail("malformed feature value in '" + std::string(tok) + "'");
            if (idx > seen.size()) seen.resize(idx, false);
            if (seen[idx - 1]) fail("duplicate feature index " + std::to_string(idx));
            seen[idx - 1] = true;
            parsed.entries.emplace_back(idx - 1, value);
            dim = std::max(dim, idx);
        }
        if (first) fail("missing label");
        lines.push_back(std::move(parsed));
    }
    if (in.bad()) throw DataError(source_name + ": read error");
    if (lines.empty()) throw DataError(source_name + ": no samples");

    Batch batch;
    batch.index = expected_index;
    batch.samples.reserve(lines.size());
    for (auto& l : lines) {
        Sample s;
        s.label = l.label;
        s.features.assign(dim, 0.0);
        for (auto [i, v] : l.entries) s.features[i] = v;
        batch.samples.push_back(std::move(s));
    }
    return batch;
}

Batch parse_batch_file(const std::filesystem::path& path, int expected_index) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_batch(in, expected_index, path.string());
}

void write_batch(std::ostream& out, const Batch& batch) {
    char buf[64];
    for (const auto& s : batch.samples) {
        out << (s.label + 1);
        for (std::size_t j = 0; j < s.features.size(); ++j) {
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf, s.features[j]);
            out << ' ' << (j + 1) << ':' << std::string_view(buf, static_cast<std::size_t>(end - buf));
        }
        out << '\n';
    }
}

void write_batch_file(const std::filesystem::path& path, const Batch& batch) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    write_batch(out, batch);
}

std::vector<Batch> load_batches(const std::filesystem::path& dir) {
    std::vector<Batch> batches;
    for (int b = 1; b <= kNumBatches; ++b)
        batches.push_back(parse_batch_file(dir / ("batch" + std::to_string(b) + ".dat"), b));

    const std::size_t dim = batches.front().dim();
    for (const auto& b : batches) {
        for (const auto& s : b.samples)
            if (s.features.size() != dim)
                throw DataError("batch" + std::to_string(b.index) + ".dat has feature dimension " +
                                std::to_string(s.features.size()) + ", batch1.dat has " + std::to_string(dim));
    }
    if (dim != kExpectedFeatureDim)
        std::cerr << "warning: feature dimension is " << dim << ", expected " << kExpectedFeatureDim << '\n';
    return batches;
}

// ---------------------------------------------------------------------------

Mat features_of(const std::vector<Sample>& samples) {
    if (samples.empty()) return Mat(0, 0);
    const auto d = static_cast<Eigen::Index>(samples.front().features.size());
    Mat X(static_cast<Eigen::Index>(samples.size()), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (static_cast<Eigen::Index>(samples[i].features.size()) != d)
            throw DataError("inconsistent feature dimension at sample " + std::to_string(i));
        X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(samples[i].features.data(), d);
    }
    return X;
}

Mat features_of(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
    if (samples.empty() || idx.empty()) return Mat(0, samples.empty() ? 0 : static_cast<Eigen::Index>(samples.front().features.size()));
    const auto d = static_cast<Eigen::Index>(samples.front().features.size());
    Mat X(static_cast<Eigen::Index>(idx.size()), d);
    for (std::size_t r = 0; r < idx.size(); ++r)
        X.row(static_cast<Eigen::Index>(r)) =
            Eigen::Map<const Eigen::RowVectorXd>(samples.at(idx[r]).features.data(), d);
    return X;
}

std::vector<int> labels_of(const std::vector<Sample>& samples) {
    std::vector<int> y;
    y.reserve(samples.size());
    for (const auto& s : samples) y.push_back(s.label);
    return y;
}

std::vector<int> labels_of(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    y.reserve(idx.size());
    for (auto i : idx) y.push_back(samples.at(i).label);
    return y;
}

}  // namespace driftkd
