#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specfid/matrix.hpp"

namespace specfid {

/// Inclusive 1-based index interval [lo, hi].
struct IndexRange {
    std::size_t lo = 1;
    std::size_t hi = 1;
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// Least-squares fit of ln(sigma_k) = ln(mu) - decay * ln(k).
struct PowerFit {
    double mu = 0.0;
    double decay = 0.0;
    double r_squared = 0.0;
    IndexRange range;
    /// Target had zero variance; r_squared is reported as 1 by convention.
    bool degenerate = false;
};

struct SpectralSummary {
    std::vector<double> sigma;  // descending
    double frob_sq = 0.0;
    double spec_sq = 0.0;
    double stable_rank = 0.0;
    std::optional<PowerFit> power_fit;
};

/// All min(m, n) singular values, descending. Backed by Eigen's
/// divide-and-conquer bidiagonal SVD (values only).
std::vector<double> singular_values(const DenseMatrix& a);
std::vector<double> singular_values(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// Largest singular value, from the top eigenvalue of the smaller Gram matrix.
/// Cheaper than a full SVD when only ||A||_2 is needed.
double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& a);
double spectral_norm(const DenseMatrix& a);

/// ||A||_F^2 / ||A||_2^2 = sum sigma_k^2 / sigma_1^2. DomainError when sigma_1 = 0.
double stable_rank(std::span<const double> sigma);

/// F_A(k) = H_k / (H_k + T_k), head energy of the top k values over the total.
/// k is 1-based; IndexError outside [1, len]; DomainError on zero energy.
double energy_concentration(std::span<const double> sigma, std::size_t k);

/// OLS of ln sigma_k on ln k over range (1-based, inclusive). Needs at least
/// three points and strictly positive sigma on the range.
PowerFit fit_power_law(std::span<const double> sigma, IndexRange range);

/// Head range [1, ceil(0.1 * count)], widened to three points when possible.
IndexRange default_fit_range(std::size_t count);

/// max_k |sigma_tilde_k - sigma_k|. ShapeError on length mismatch.
double weyl_gap(std::span<const double> sigma, std::span<const double> sigma_tilde);

struct RelativeError {
    std::size_t k;  // 1-based
    double eps;
};

struct RelativeErrors {
    std::vector<RelativeError> values;
    std::vector<std::size_t> excluded;  // indices with sigma_k <= floor * sigma_1
};

inline constexpr double kDefaultRelativeFloor = 1e-10;

/// eps_k = |sigma_tilde_k - sigma_k| / sigma_k for sigma_k > floor * sigma_1.
RelativeErrors relative_errors(std::span<const double> sigma, std::span<const double> sigma_tilde,
                               double floor = kDefaultRelativeFloor);

/// Singular values plus derived metrics; fits the power law on `fit` when
/// given, otherwise on default_fit_range when it has enough positive values.
SpectralSummary summarize(const DenseMatrix& a, std::optional<IndexRange> fit = std::nullopt);
SpectralSummary summarize(std::vector<double> sigma, std::optional<IndexRange> fit = std::nullopt);

/// CSV with header "k,sigma,cum_energy_frac" (shortest round-trip decimals).
std::string spectrum_csv(const SpectralSummary& s);

/// Scalars as a JSON object (stable_rank, frob_sq, spec_sq, power_fit).
std::string spectrum_json(const SpectralSummary& s);

}  // namespace specfid
