#include "driftkd/serialize.hpp"

#include <charconv>
#include <istream>
#include <ostream>

#include "driftkd/errors.hpp"

namespace driftkd::serial {

namespace {

std::string next_token(std::istream& in, const std::string& context) {
    std::string tok;
    if (!(in >> tok)) throw DataError("unexpected end of model file while reading " + context);
    return tok;
}

double parse_double(const std::string& tok) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) throw DataError("bad number '" + tok + "'");
    return v;
}

void expect(std::istream& in, const std::string& word) {
    const auto tok = next_token(in, word);
    if (tok != word) throw DataError("expected '" + word + "', found '" + tok + "'");
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

void write_header(std::ostream& out, const std::string& kind) {
    out << "driftkd-" << kind << ' ' << kFormatVersion << '\n';
}

void read_header(std::istream& in, const std::string& kind) {
    expect(in, "driftkd-" + kind);
    const auto version = next_token(in, "version");
    if (version != std::to_string(kFormatVersion))
        throw DataError("unsupported " + kind + " format version " + version);
}

void write_scalar(std::ostream& out, const std::string& key, double v) {
    out << key << ' ' << format_double(v) << '\n';
}

double read_scalar(std::istream& in, const std::string& key) {
    expect(in, key);
    return parse_double(next_token(in, key));
}

void write_matrix(std::ostream& out, const std::string& name, const Mat& m) {
    out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
        out << '\n';
    }
}

Mat read_matrix(std::istream& in, const std::string& name) {
    expect(in, "matrix");
    expect(in, name);
    const long rows = static_cast<long>(parse_double(next_token(in, name)));
    const long cols = static_cast<long>(parse_double(next_token(in, name)));
    if (rows < 0 || cols < 0) throw DataError("negative matrix shape for " + name);
    Mat m(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) m(i, j) = parse_double(next_token(in, name));
    return m;
}

}  // namespace driftkd::serial
