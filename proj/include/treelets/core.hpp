#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

namespace treelets {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bad input data or parameters. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine failed to converge. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kMinVariance = 1e-12;

/// n x p sample matrix (rows = samples, columns = variables).
///
/// Construction validates: n >= 2, p >= 2, every entry finite, every column
/// with sample variance above kMinVariance. Immutable afterwards.
class DataMatrix {
public:
    DataMatrix(Matrix values, std::vector<std::string> names);
    explicit DataMatrix(Matrix values);

    const Matrix& values() const noexcept { return values_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t n() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(values_.cols()); }

    /// Copy built from the given sample rows (duplicates allowed). Throws
    /// InputError if the resample violates the invariants.
    DataMatrix resample_rows(const std::vector<std::size_t>& rows) const;

private:
    Matrix values_;
    std::vector<std::string> names_;
};

/// Length-n response. All entries finite.
class ResponseVector {
public:
    explicit ResponseVector(Vector values);

    const Vector& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }

    ResponseVector resample(const std::vector<std::size_t>& rows) const;

private:
    Vector values_;
};

/// Symmetric p x p similarity with unit diagonal and entries in [0, 1].
class SimilarityMatrix {
public:
    explicit SimilarityMatrix(Matrix s);

    const Matrix& values() const noexcept { return s_; }
    double operator()(std::size_t i, std::size_t j) const { return s_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(s_.rows()); }

private:
    Matrix s_;
};

/// Parses rectangular numeric CSV. Rows are samples, columns variables.
/// Without a header, names are generated as V1..Vp.
DataMatrix parse_csv(std::istream& in, bool has_header);
DataMatrix ingest_csv(const std::filesystem::path& path, bool has_header);

/// Reads a single-column CSV as a response vector.
ResponseVector ingest_response_csv(const std::filesystem::path& path, bool has_header);

/// Splits CSV text into records of fields (RFC-4180 quoting, CRLF or LF).
std::vector<std::vector<std::string>> read_csv_records(std::istream& in);

/// Unbiased sample covariance (divisor n - 1) of the columns of `x`.
Matrix covariance(const Matrix& x);
Matrix covariance_matrix(const DataMatrix& x);

/// |Pearson correlation| between every pair of columns, clamped to [0, 1].
SimilarityMatrix correlation_similarity(const DataMatrix& x);

/// Columns of `x` minus their means.
Matrix centered(const Matrix& x);

}  // namespace treelets
