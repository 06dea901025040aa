#include "specfid/rmt.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specfid/errors.hpp"

namespace specfid {

namespace {

void require_upper_half_plane(Complex z) {
    if (!(z.imag() > 0.0)) {
        throw DomainError("Stieltjes transform needs Im z > 0");
    }
}

}  // namespace

void SpikedModel::validate() const {
    if (!(L_scale > 0.0)) throw DomainError("SpikedModel: L_scale must be > 0");
    if (!(alpha > 1.0)) throw DomainError("SpikedModel: alpha must exceed 1");
    if (r < 1 || r >= d) throw DomainError("SpikedModel: need 1 <= r < d");
    if (!(c > 0.0)) throw DomainError("SpikedModel: aspect ratio c must be > 0");
}

double TailBoundParams::delta_sq() const {
    return static_cast<double>(std::max(m, n)) * B;
}

TailBoundParams rounding_tail_params(std::size_t m, std::size_t n, double step) {
    return TailBoundParams{m, n, step * step / 12.0, step / 2.0};
}

double tau(const SpikedModel& model, std::size_t k) {
    if (k < 1 || k > model.d) {
        throw IndexError("tau: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(model.d) + "]");
    }
    return model.L_scale * std::pow(static_cast<double>(k), -model.alpha);
}

double noise_level(const SpikedModel& model) {
    if (model.r >= model.d) throw DomainError("noise_level: need r < d");
    double sum = 0.0;
    // Smallest terms first.
    for (std::size_t j = model.d; j > model.r; --j) {
        sum += std::pow(static_cast<double>(j), -model.alpha);
    }
    return model.L_scale * sum / static_cast<double>(model.d - model.r);
}

double mp_bulk_edge(double nu2, double c) {
    if (nu2 < 0.0 || c < 0.0) throw DomainError("mp_bulk_edge: nu2 and c must be >= 0");
    const double g = 1.0 + std::sqrt(c);
    return nu2 * g * g;
}

double bbp_map(double tau_value, double nu2, double c) {
    if (!(tau_value > nu2)) {
        throw DomainError("bbp_map: tau must exceed nu2 (sub-critical; use mp_bulk_edge)");
    }
    return tau_value * (1.0 + c * nu2 / (tau_value - nu2));
}

double bbp_threshold(double nu2, double c) { return nu2 * (1.0 + std::sqrt(c)); }

SpectrumClasses classify_spectrum(std::span<const double> taus, double nu2, double c) {
    for (std::size_t i = 1; i < taus.size(); ++i) {
        if (taus[i] > taus[i - 1]) {
            throw DataError("classify_spectrum: taus must be sorted descending");
        }
    }
    const double threshold = bbp_threshold(nu2, c);
    SpectrumClasses out;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        (taus[i] > threshold ? out.supercritical : out.subcritical).push_back(i + 1);
    }
    return out;
}

Complex stieltjes_discrete(std::span<const double> eigs, Complex z) {
    require_upper_half_plane(z);
    if (eigs.empty()) throw DomainError("stieltjes_discrete: empty spectrum");
    Complex acc{0.0, 0.0};
    for (double e : eigs) acc += 1.0 / (e - z);
    return acc / static_cast<double>(eigs.size());
}

Complex stieltjes_white(double nu2, Complex z) {
    require_upper_half_plane(z);
    return 1.0 / (nu2 - z);
}

double stieltjes_gap(const SpikedModel& model, Complex z) {
    require_upper_half_plane(z);
    const double nu2 = noise_level(model);
    // Summed in the same smallest-first order as noise_level.
    Complex acc{0.0, 0.0};
    for (std::size_t j = model.d; j > model.r; --j) {
        acc += 1.0 / (tau(model, j) - z);
    }
    const Complex m_noise = acc / static_cast<double>(model.d - model.r);
    return std::abs(m_noise - stieltjes_white(nu2, z));
}

double bernstein_tail_bound(const TailBoundParams& p, double t) {
    if (!(t >= 0.0)) throw DomainError("bernstein_tail_bound: t must be >= 0");
    const double dims = static_cast<double>(p.m + p.n);
    const double denom = p.delta_sq() + p.R * t / 3.0;
    if (denom <= 0.0) return t > 0.0 ? 0.0 : 1.0;
    const double value = dims * std::exp(-(t * t / 2.0) / denom);
    return std::clamp(value, 0.0, 1.0);
}

double bernstein_root(const TailBoundParams& p, double log_ratio) {
    // t^2 - (2 l R / 3) t - 2 l delta^2 = 0, positive root.
    const double half_b = log_ratio * p.R / 3.0;
    return half_b + std::sqrt(half_b * half_b + 2.0 * log_ratio * p.delta_sq());
}

double invert_tail_bound(const TailBoundParams& p, double theta) {
    if (!(theta > 0.0 && theta < 1.0)) {
        throw DomainError("invert_tail_bound: theta must lie in (0, 1)");
    }
    return bernstein_root(p, std::log(static_cast<double>(p.m + p.n) / theta));
}

double epsilon_budget(const TailBoundParams& p, double theta, double sigma_k) {
    if (!(sigma_k > 0.0)) throw DomainError("epsilon_budget: sigma_k must be > 0");
    return invert_tail_bound(p, theta) / sigma_k;
}

std::vector<double> failure_profile(const FailureProfileInput& in) {
    if (!(in.eta > 0.0)) throw DomainError("failure_profile: eta must be > 0");
    if (!(in.step > 0.0)) throw DomainError("failure_profile: step must be > 0");
    if (in.r < 1) throw DomainError("failure_profile: head rank must be >= 1");
    const TailBoundParams p = rounding_tail_params(in.m, in.n, in.step);
    const std::size_t count = std::min(in.m, in.n);
    std::vector<double> out(count);
    for (std::size_t k = 1; k <= count; ++k) {
        const double xi = std::pow(static_cast<double>(std::min(k, in.r)), -in.alpha);
        const double sigma_k = in.mu * std::sqrt(xi);
        out[k - 1] = bernstein_tail_bound(p, in.eta * sigma_k);
    }
    return out;
}

}  // namespace specfid
