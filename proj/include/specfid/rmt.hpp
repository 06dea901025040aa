#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace specfid {

using Complex = std::complex<double>;

/// Population spectrum tau_k = L_scale * k^-alpha in dimension d, with head
/// rank r and aspect ratio c = d / N.
struct SpikedModel {
    double L_scale = 1.0;
    double alpha = 2.0;
    std::size_t r = 10;
    std::size_t d = 1000;
    double c = 0.5;

    /// DomainError unless L_scale > 0, alpha > 1, 1 <= r < d and c > 0.
    void validate() const;
};

/// Parameters of the matrix Bernstein bound for an m x n error matrix whose
/// entries have variance B and magnitude at most R.
struct TailBoundParams {
    std::size_t m = 1;
    std::size_t n = 1;
    double B = 0.0;
    double R = 1.0;

    /// delta^2 = max(m, n) * B.
    [[nodiscard]] double delta_sq() const;
};

/// Rounding-noise model for step s: B = s^2 / 12, R = s / 2.
TailBoundParams rounding_tail_params(std::size_t m, std::size_t n, double step);

/// tau_k = L_scale * k^-alpha; IndexError unless 1 <= k <= d.
double tau(const SpikedModel& model, std::size_t k);

/// nu^2(d) = L / (d - r) * sum_{j=r+1}^{d} j^-alpha by direct summation.
double noise_level(const SpikedModel& model);

/// Right edge of the Marchenko-Pastur bulk, nu2 * (1 + sqrt(c))^2.
double mp_bulk_edge(double nu2, double c);

/// Outlier location rho(tau) = tau * (1 + c * nu2 / (tau - nu2)). DomainError
/// when tau <= nu2.
double bbp_map(double tau, double nu2, double c);

/// Detection threshold nu2 * (1 + sqrt(c)).
double bbp_threshold(double nu2, double c);

struct SpectrumClasses {
    std::vector<std::size_t> supercritical;  // 1-based, in input order
    std::vector<std::size_t> subcritical;
};

/// Index k is supercritical iff tau_k > nu2 (1 + sqrt c); the boundary itself
/// is subcritical. DataError if taus is not non-increasing.
SpectrumClasses classify_spectrum(std::span<const double> taus, double nu2, double c);

/// (1/len) sum_j 1 / (e_j - z). DomainError unless Im z > 0.
Complex stieltjes_discrete(std::span<const double> eigs, Complex z);

/// 1 / (nu2 - z). DomainError unless Im z > 0.
Complex stieltjes_white(double nu2, Complex z);

/// |m_noise(z) - m_white(z)| where m_noise averages over tau_{r+1..d}.
double stieltjes_gap(const SpikedModel& model, Complex z);

/// min(1, (m + n) exp(-(t^2/2) / (delta^2 + R t / 3))). DomainError for t < 0.
double bernstein_tail_bound(const TailBoundParams& p, double t);

/// Positive root t of t^2/2 = log_ratio * (delta^2 + R t / 3). Continuous in
/// log_ratio with root 0 at log_ratio = 0.
double bernstein_root(const TailBoundParams& p, double log_ratio);

/// Unique t >= 0 with (m + n) exp(...) = theta. DomainError unless 0 < theta < 1.
double invert_tail_bound(const TailBoundParams& p, double theta);

/// invert_tail_bound(p, theta) / sigma_k. DomainError unless sigma_k > 0.
double epsilon_budget(const TailBoundParams& p, double theta, double sigma_k);

struct FailureProfileInput {
    double mu = 1.0;      // spectral magnitude constant
    double alpha = 2.0;   // decay rate
    std::size_t r = 10;   // head rank
    double eta = 0.05;    // relative error tolerance
    double step = 0.0;    // quantization step s
    std::size_t m = 1;
    std::size_t n = 1;
};

/// Per-index bound on P(relative error of sigma_k > eta) for k = 1..min(m, n),
/// with sigma_k = mu * xi_k^(1/2), xi_k = k^-alpha (k <= r) or r^-alpha, and
/// the exact Bernstein form with B = s^2/12, R = s/2.
std::vector<double> failure_profile(const FailureProfileInput& in);

}  // namespace specfid
