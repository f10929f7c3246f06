#include "treelets/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

namespace treelets {

namespace {

std::vector<std::string> default_names(std::size_t p) {
    std::vector<std::string> names;
    names.reserve(p);
    for (std::size_t j = 0; j < p; ++j) names.push_back("V" + std::to_string(j + 1));
    return names;
}

void validate_matrix(const Matrix& values, const std::vector<std::string>& names) {
    const auto n = values.rows();
    const auto p = values.cols();
    if (n < 2) throw InputError("need at least 2 samples, got " + std::to_string(n));
    if (p < 2) throw InputError("need at least 2 variables, got " + std::to_string(p));
    if (static_cast<Eigen::Index>(names.size()) != p) {
        throw InputError("expected " + std::to_string(p) + " variable names, got " +
                         std::to_string(names.size()));
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!std::isfinite(values(i, j))) {
                throw InputError("non-finite value at row " + std::to_string(i + 1) + ", column '" +
                                 names[static_cast<std::size_t>(j)] + "'");
            }
        }
        const double mean = values.col(j).mean();
        const double var = (values.col(j).array() - mean).square().sum() / static_cast<double>(n - 1);
        if (!(var > kMinVariance)) {
            throw InputError("zero-variance column '" + names[static_cast<std::size_t>(j)] + "'");
        }
    }
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return std::string(s.substr(first, last - first + 1));
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string cell = trim(raw);
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = cell.data() + cell.size();
    if (begin != end && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (cell.empty() || ec != std::errc() || ptr != end) {
        throw InputError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                         ", column '" + column + "'");
    }
    return value;
}

}  // namespace

DataMatrix::DataMatrix(Matrix values, std::vector<std::string> names)
    : values_(std::move(values)), names_(std::move(names)) {
    validate_matrix(values_, names_);
}

DataMatrix::DataMatrix(Matrix values)
    : DataMatrix(values, default_names(static_cast<std::size_t>(values.cols()))) {}

DataMatrix DataMatrix::resample_rows(const std::vector<std::size_t>& rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = values_.row(static_cast<Eigen::Index>(rows[r]));
    }
    return DataMatrix(std::move(out), names_);
}

ResponseVector::ResponseVector(Vector values) : values_(std::move(values)) {
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_(i))) {
            throw InputError("non-finite response at row " + std::to_string(i + 1));
        }
    }
}

ResponseVector ResponseVector::resample(const std::vector<std::size_t>& rows) const {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out(static_cast<Eigen::Index>(r)) = values_(static_cast<Eigen::Index>(rows[r]));
    }
    return ResponseVector(std::move(out));
}

SimilarityMatrix::SimilarityMatrix(Matrix s) : s_(std::move(s)) {
    if (s_.rows() != s_.cols()) throw InputError("similarity matrix must be square");
    for (Eigen::Index i = 0; i < s_.rows(); ++i) {
        if (s_(i, i) != 1.0) throw InputError("similarity diagonal must be 1");
        for (Eigen::Index j = 0; j < s_.cols(); ++j) {
            if (!(s_(i, j) >= 0.0 && s_(i, j) <= 1.0)) throw InputError("similarity outside [0, 1]");
            if (s_(i, j) != s_(j, i)) throw InputError("similarity matrix must be symmetric");
        }
    }
}

std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c = 0;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"': in_quotes = true; break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                break;
            case '\r': break;
            case '\n':
                record.push_back(std::move(field));
                field.clear();
                if (!(record.size() == 1 && record.front().empty())) records.push_back(std::move(record));
                record.clear();
                any = false;
                break;
            default: field.push_back(c);
        }
    }
    if (in_quotes) throw InputError("unterminated quoted field");
    if (any) {
        record.push_back(std::move(field));
        if (!(record.size() == 1 && record.front().empty())) records.push_back(std::move(record));
    }
    return records;
}

DataMatrix parse_csv(std::istream& in, bool has_header) {
    auto records = read_csv_records(in);
    if (records.empty()) throw InputError("empty CSV");
    // Strip a UTF-8 byte-order mark.
    if (auto& first = records.front().front(); first.rfind("\xEF\xBB\xBF", 0) == 0) first.erase(0, 3);

    const std::size_t p = records.front().size();
    std::vector<std::string> names;
    std::size_t start = 0;
    if (has_header) {
        for (const auto& name : records.front()) names.push_back(trim(name));
        start = 1;
    } else {
        names = default_names(p);
    }
    const std::size_t n = records.size() - start;
    Matrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t r = start; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != p) {
            throw InputError("ragged CSV: row " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) +
                             " fields, expected " + std::to_string(p));
        }
        for (std::size_t j = 0; j < p; ++j) {
            values(static_cast<Eigen::Index>(r - start), static_cast<Eigen::Index>(j)) =
                parse_cell(rec[j], r + 1, names[j]);
        }
    }
    return DataMatrix(std::move(values), std::move(names));
}

DataMatrix ingest_csv(const std::filesystem::path& path, bool has_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return parse_csv(in, has_header);
}

ResponseVector ingest_response_csv(const std::filesystem::path& path, bool has_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    const auto records = read_csv_records(in);
    const std::size_t start = has_header ? 1 : 0;
    if (records.size() <= start) throw InputError("response CSV has no data rows");
    const std::string column = has_header ? trim(records.front().front()) : std::string("y");
    Vector y(static_cast<Eigen::Index>(records.size() - start));
    for (std::size_t r = start; r < records.size(); ++r) {
        if (records[r].size() != 1) {
            throw InputError("response CSV row " + std::to_string(r + 1) + " must have exactly one field");
        }
        y(static_cast<Eigen::Index>(r - start)) = parse_cell(records[r].front(), r + 1, column);
    }
    return ResponseVector(std::move(y));
}

Matrix centered(const Matrix& x) {
    return x.rowwise() - x.colwise().mean();
}

Matrix covariance(const Matrix& x) {
    const Matrix xc = centered(x);
    Matrix c = (xc.transpose() * xc) / static_cast<double>(x.rows() - 1);
    // Mirror the upper triangle so the result is exactly symmetric.
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < c.cols(); ++j) c(j, i) = c(i, j);
    }
    return c;
}

Matrix covariance_matrix(const DataMatrix& x) {
    return covariance(x.values());
}

SimilarityMatrix correlation_similarity(const DataMatrix& x) {
    const Matrix c = covariance_matrix(x);
    const auto p = c.rows();
    Matrix s = Matrix::Identity(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double r = std::abs(c(i, j)) / std::sqrt(c(i, i) * c(j, j));
            s(i, j) = s(j, i) = std::clamp(r, 0.0, 1.0);
        }
    }
    return SimilarityMatrix(std::move(s));
}

}  // namespace treelets
