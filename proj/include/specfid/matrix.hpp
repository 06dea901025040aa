#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace specfid {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

/// Dense real matrix stored row-major.
///
/// Holds X, W, G, the gradient, the error matrix E and covariances alike.
/// Immutable after construction: every entry is finite and both dimensions
/// are at least one, so a DenseMatrix can be shared freely across threads.
class DenseMatrix {
public:
    /// Takes ownership of `entries`; throws ShapeError if the length does not
    /// equal rows*cols or a dimension is zero, DataError on non-finite values.
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

    /// Copies an Eigen expression result. Same validation as above.
    explicit DenseMatrix(const Eigen::MatrixXd& m);
    explicit DenseMatrix(const RowMajorMatrix& m);

    static DenseMatrix zeros(std::size_t rows, std::size_t cols);
    static DenseMatrix identity(std::size_t n);
    static DenseMatrix diagonal(std::span<const double> diag);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const noexcept {
        return entries_[i * cols_ + j];
    }
    double at(std::size_t i, std::size_t j) const;

    [[nodiscard]] std::span<const double> entries() const noexcept { return entries_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
        return std::span<const double>(entries_).subspan(i * cols_, cols_);
    }

    /// Zero-copy read-only Eigen view.
    [[nodiscard]] ConstMatrixMap view() const noexcept {
        return ConstMatrixMap(entries_.data(), static_cast<Eigen::Index>(rows_),
                              static_cast<Eigen::Index>(cols_));
    }

    [[nodiscard]] DenseMatrix transposed() const;
    [[nodiscard]] double frobenius_sq() const noexcept;
    [[nodiscard]] double max_abs() const noexcept;
    [[nodiscard]] bool all_zero() const noexcept;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> entries_;
};

/// Exact product lhs * rhs; ShapeError when inner dimensions differ.
DenseMatrix multiply(const DenseMatrix& lhs, const DenseMatrix& rhs);

/// lhs - rhs elementwise; ShapeError on mismatch.
DenseMatrix subtract(const DenseMatrix& lhs, const DenseMatrix& rhs);

DenseMatrix scale(const DenseMatrix& m, double factor);

}  // namespace specfid
