#include "specfid/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specfid/errors.hpp"

namespace specfid {

namespace {

std::string dims(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (rows_ == 0 || cols_ == 0) {
        throw ShapeError("matrix dimensions must be positive, got " + dims(rows_, cols_));
    }
    if (entries_.size() != rows_ * cols_) {
        throw ShapeError("matrix " + dims(rows_, cols_) + " needs " +
                         std::to_string(rows_ * cols_) + " entries, got " +
                         std::to_string(entries_.size()));
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!std::isfinite(entries_[i])) {
            throw DataError("non-finite entry at (" + std::to_string(i / cols_) + ", " +
                            std::to_string(i % cols_) + ")");
        }
    }
}

DenseMatrix::DenseMatrix(const Eigen::MatrixXd& m)
    : DenseMatrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), [&] {
          std::vector<double> out(static_cast<std::size_t>(m.size()));
          Eigen::Map<RowMajorMatrix>(out.data(), m.rows(), m.cols()) = m;
          return out;
      }()) {}

DenseMatrix::DenseMatrix(const RowMajorMatrix& m)
    : DenseMatrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                  std::vector<double>(m.data(), m.data() + m.size())) {}

DenseMatrix DenseMatrix::zeros(std::size_t rows, std::size_t cols) {
    return DenseMatrix(rows, cols, std::vector<double>(rows * cols, 0.0));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    std::vector<double> e(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) e[i * n + i] = 1.0;
    return DenseMatrix(n, n, std::move(e));
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
    const std::size_t n = diag.size();
    std::vector<double> e(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) e[i * n + i] = diag[i];
    return DenseMatrix(n, n, std::move(e));
}

double DenseMatrix::at(std::size_t i, std::size_t j) const {
    if (i >= rows_ || j >= cols_) {
        throw IndexError("index (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") outside " + dims(rows_, cols_));
    }
    return (*this)(i, j);
}

DenseMatrix DenseMatrix::transposed() const {
    RowMajorMatrix t = view().transpose();
    return DenseMatrix(t);
}

double DenseMatrix::frobenius_sq() const noexcept {
    double acc = 0.0;
    for (double v : entries_) acc += v * v;
    return acc;
}

double DenseMatrix::max_abs() const noexcept {
    double m = 0.0;
    for (double v : entries_) m = std::max(m, std::abs(v));
    return m;
}

bool DenseMatrix::all_zero() const noexcept {
    return std::all_of(entries_.begin(), entries_.end(), [](double v) { return v == 0.0; });
}

DenseMatrix multiply(const DenseMatrix& lhs, const DenseMatrix& rhs) {
    if (lhs.cols() != rhs.rows()) {
        throw ShapeError("cannot multiply " + dims(lhs.rows(), lhs.cols()) + " by " +
                         dims(rhs.rows(), rhs.cols()));
    }
    RowMajorMatrix p = lhs.view() * rhs.view();
    return DenseMatrix(p);
}

DenseMatrix subtract(const DenseMatrix& lhs, const DenseMatrix& rhs) {
    if (lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols()) {
        throw ShapeError("shape mismatch: " + dims(lhs.rows(), lhs.cols()) + " vs " +
                         dims(rhs.rows(), rhs.cols()));
    }
    std::vector<double> out(lhs.size());
    auto a = lhs.entries();
    auto b = rhs.entries();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return DenseMatrix(lhs.rows(), lhs.cols(), std::move(out));
}

DenseMatrix scale(const DenseMatrix& m, double factor) {
    std::vector<double> out(m.entries().begin(), m.entries().end());
    for (double& v : out) v *= factor;
    return DenseMatrix(m.rows(), m.cols(), std::move(out));
}

}  // namespace specfid
