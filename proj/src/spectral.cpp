#include "specfid/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "specfid/errors.hpp"
#include "specfid/format.hpp"

namespace specfid {

std::vector<double> singular_values(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    if (!a.allFinite()) throw DataError("singular_values: non-finite input");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
    const Eigen::VectorXd& s = svd.singularValues();
    std::vector<double> out(s.data(), s.data() + s.size());
    // Eigen already sorts descending; enforce it against ties in the last ulp.
    std::sort(out.begin(), out.end(), std::greater<>());
    for (double& v : out) v = std::max(v, 0.0);
    return out;
}

std::vector<double> singular_values(const DenseMatrix& a) {
    return singular_values(Eigen::MatrixXd(a.view()));
}

double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    Eigen::MatrixXd gram = a.rows() <= a.cols() ? Eigen::MatrixXd(a * a.transpose())
                                                : Eigen::MatrixXd(a.transpose() * a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
}

double spectral_norm(const DenseMatrix& a) { return spectral_norm(Eigen::MatrixXd(a.view())); }

double stable_rank(std::span<const double> sigma) {
    if (sigma.empty() || !(sigma.front() > 0.0)) {
        throw DomainError("stable rank is undefined for a zero spectrum");
    }
    double total = 0.0;
    for (double s : sigma) total += s * s;
    return total / (sigma.front() * sigma.front());
}

double energy_concentration(std::span<const double> sigma, std::size_t k) {
    if (k < 1 || k > sigma.size()) {
        throw IndexError("energy_concentration: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(sigma.size()) + "]");
    }
    double head = 0.0;
    double tail = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        (i < k ? head : tail) += sigma[i] * sigma[i];
    }
    if (!(head + tail > 0.0)) throw DomainError("energy_concentration: zero total energy");
    return head / (head + tail);
}

PowerFit fit_power_law(std::span<const double> sigma, IndexRange range) {
    if (range.lo < 1 || range.hi <= range.lo) {
        throw DomainError("fit_power_law: need 1 <= k_lo < k_hi");
    }
    if (range.hi > sigma.size()) {
        throw IndexError("fit_power_law: k_hi=" + std::to_string(range.hi) + " exceeds " +
                         std::to_string(sigma.size()));
    }
    const std::size_t n = range.hi - range.lo + 1;
    if (n < 3) throw DomainError("fit_power_law: fewer than 3 points");

    std::vector<double> x(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = range.lo + i;
        const double s = sigma[k - 1];
        if (!(s > 0.0)) {
            throw DomainError("fit_power_law: sigma_" + std::to_string(k) + " is zero");
        }
        x[i] = std::log(static_cast<double>(k));
        y[i] = std::log(s);
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;

    PowerFit fit;
    fit.range = range;
    fit.decay = -slope;
    fit.mu = std::exp(intercept);
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (intercept + slope * x[i]);
        ss_res += r * r;
    }
    // Relative test: a constant spectrum leaves rounding-level variance in ln(sigma).
    if (syy <= 1e-24 * std::max(1.0, my * my) * static_cast<double>(n)) {
        fit.degenerate = true;
        fit.decay = 0.0;
        fit.mu = std::exp(my);
        fit.r_squared = 1.0;
    } else {
        fit.r_squared = 1.0 - ss_res / syy;
    }
    return fit;
}

IndexRange default_fit_range(std::size_t count) {
    const auto head = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(count)));
    return IndexRange{1, std::min(count, std::max<std::size_t>(head, 3))};
}

double weyl_gap(std::span<const double> sigma, std::span<const double> sigma_tilde) {
    if (sigma.size() != sigma_tilde.size()) {
        throw ShapeError("weyl_gap: spectra have different lengths");
    }
    double gap = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        gap = std::max(gap, std::abs(sigma_tilde[i] - sigma[i]));
    }
    return gap;
}

RelativeErrors relative_errors(std::span<const double> sigma, std::span<const double> sigma_tilde,
                               double floor) {
    if (sigma.size() != sigma_tilde.size()) {
        throw ShapeError("relative_errors: spectra have different lengths");
    }
    if (floor < 0.0) throw DomainError("relative_errors: floor must be >= 0");
    RelativeErrors out;
    const double cutoff = sigma.empty() ? 0.0 : floor * sigma.front();
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        if (sigma[i] > cutoff && sigma[i] > 0.0) {
            out.values.push_back({i + 1, std::abs(sigma_tilde[i] - sigma[i]) / sigma[i]});
        } else {
            out.excluded.push_back(i + 1);
        }
    }
    return out;
}

SpectralSummary summarize(std::vector<double> sigma, std::optional<IndexRange> fit) {
    SpectralSummary s;
    s.sigma = std::move(sigma);
    for (double v : s.sigma) s.frob_sq += v * v;
    s.spec_sq = s.sigma.empty() ? 0.0 : s.sigma.front() * s.sigma.front();
    s.stable_rank = s.spec_sq > 0.0 ? s.frob_sq / s.spec_sq : 0.0;

    const IndexRange range = fit.value_or(default_fit_range(s.sigma.size()));
    const bool usable = range.hi <= s.sigma.size() && range.hi >= range.lo + 2 &&
                        std::all_of(s.sigma.begin() + static_cast<std::ptrdiff_t>(range.lo - 1),
                                    s.sigma.begin() + static_cast<std::ptrdiff_t>(range.hi),
                                    [](double v) { return v > 0.0; });
    if (fit) {
        s.power_fit = fit_power_law(s.sigma, *fit);
    } else if (usable) {
        s.power_fit = fit_power_law(s.sigma, range);
    }
    return s;
}

SpectralSummary summarize(const DenseMatrix& a, std::optional<IndexRange> fit) {
    return summarize(singular_values(a), fit);
}

std::string spectrum_csv(const SpectralSummary& s) {
    std::string out = "k,sigma,cum_energy_frac\n";
    double cum = 0.0;
    for (std::size_t i = 0; i < s.sigma.size(); ++i) {
        cum += s.sigma[i] * s.sigma[i];
        const double frac = s.frob_sq > 0.0 ? cum / s.frob_sq : 0.0;
        out += std::to_string(i + 1) + "," + format_real(s.sigma[i]) + "," + format_real(frac) +
               "\n";
    }
    return out;
}

std::string spectrum_json(const SpectralSummary& s) {
    nlohmann::ordered_json j;
    j["rank_count"] = s.sigma.size();
    j["frob_sq"] = s.frob_sq;
    j["spec_sq"] = s.spec_sq;
    j["stable_rank"] = s.stable_rank;
    if (s.power_fit) {
        j["power_fit"] = {{"mu", s.power_fit->mu},
                          {"decay", s.power_fit->decay},
                          {"r_squared", s.power_fit->r_squared},
                          {"k_lo", s.power_fit->range.lo},
                          {"k_hi", s.power_fit->range.hi},
                          {"degenerate", s.power_fit->degenerate}};
    } else {
        j["power_fit"] = nullptr;
    }
    return j.dump(2) + "\n";
}

}  // namespace specfid
