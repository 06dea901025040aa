#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "specfid/quant.hpp"
#include "specfid/spectral.hpp"
#include "specfid/synth.hpp"

namespace specfid {

enum class Protocol { unbias, regress, srank, bbp, bernstein, gradbound, failprof };

/// Suite order. A protocol's seed is the base seed plus its position here.
inline constexpr std::array<Protocol, 7> kAllProtocols = {
    Protocol::unbias,    Protocol::regress,   Protocol::srank,   Protocol::bbp,
    Protocol::bernstein, Protocol::gradbound, Protocol::failprof,
};

std::string_view to_string(Protocol p);
/// ConfigError for an unknown name.
Protocol protocol_from_string(std::string_view name);

struct UnbiasSettings {
    std::size_t trials = 20;
    std::size_t rows = 512;
    std::size_t cols = 512;
    double input_scale = 1.0;  // entries are input_scale * N(0, 1); 0 gives zero matrices
    double mean_sigmas = 4.0;
    double var_lo = 0.6;
    double var_hi = 1.4;
};

struct RegressSettings {
    std::size_t trials = 10;
    std::size_t d = 512;
    std::vector<double> alphas = {1.5, 2.0};
    double mu = 1.0;
    double min_r2 = 0.9;
    double intercept_frac = 0.1;
};

struct StableRankSettings {
    std::size_t trials = 100;
    std::size_t d = 512;
    std::size_t N = 512;
    double alpha_lo = 1.2;
    double alpha_hi = 3.0;
    double mu = 1.0;
    double min_rate = 0.95;
};

struct BbpSettings {
    std::size_t trials = 10;
    std::size_t d = 1000;
    double c = 0.5;
    double nu2 = 1.0;
    std::vector<double> spikes = {10.0};
    double spike_tol = 0.05;
    double edge_tol = 0.10;
};

struct BernsteinSettings {
    std::size_t trials = 500;
    std::size_t n = 256;
    std::size_t grid_points = 10;
    std::size_t scale_n = 1024;
    std::size_t scale_trials = 20;
    double ratio_lo = 1.7;
    double ratio_hi = 2.3;
};

struct GradientSettings {
    std::size_t trials = 10;
    std::size_t p = 256;
    double M = 1.0;
    double slack = 1e-10;
    double decay_slack = 0.15;
};

struct FailureSettings {
    std::size_t trials = 60;
    std::size_t d = 512;
    double alpha = 2.0;
    std::size_t r = 64;
    double mu = 1.0;
    std::vector<int> levels = {3, 7, 15};
};

struct ExperimentConfig {
    ZipfEnsemble ensemble;
    QuantScheme scheme = QuantScheme::nvfp4();
    /// When set, replaces every protocol's own trial count.
    std::optional<std::size_t> trials;
    double eta = 0.05;
    double theta = 0.05;
    std::optional<IndexRange> fit_range;
    std::uint64_t seed = 42;

    UnbiasSettings unbias;
    RegressSettings regress;
    StableRankSettings srank;
    BbpSettings bbp;
    BernsteinSettings bernstein;
    GradientSettings gradbound;
    FailureSettings failprof;

    /// ConfigError on any inconsistent field.
    void validate() const;
    [[nodiscard]] std::size_t trials_for(std::size_t protocol_default) const {
        return trials.value_or(protocol_default);
    }
    [[nodiscard]] std::uint64_t seed_for(Protocol p) const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys and type mismatches raise
/// ConfigError.
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add(std::vector<double> row);
    [[nodiscard]] std::string to_csv() const;
};

struct VerificationReport {
    std::string protocol;
    bool pass = false;
    std::vector<std::pair<std::string, double>> statistics;
    Table table;
    std::vector<std::string> notes;

    void set(std::string name, double value);
    /// IndexError when the statistic is missing.
    [[nodiscard]] double statistic(std::string_view name) const;
    [[nodiscard]] bool has(std::string_view name) const;
    /// {protocol, pass, statistics, notes}
    [[nodiscard]] std::string summary_json() const;
};

VerificationReport run_unbiasedness(const ExperimentConfig& cfg);
VerificationReport run_relative_error_regression(const ExperimentConfig& cfg);
VerificationReport run_stable_rank_sweep(const ExperimentConfig& cfg);
VerificationReport run_bbp_check(const ExperimentConfig& cfg);
VerificationReport run_bernstein_check(const ExperimentConfig& cfg);
VerificationReport run_gradient_bound_check(const ExperimentConfig& cfg);
VerificationReport run_failure_profile(const ExperimentConfig& cfg);

VerificationReport run_protocol(Protocol p, const ExperimentConfig& cfg);

/// Runs the given protocols in suite order. ConfigError propagates; any other
/// failure inside a protocol becomes a failing report with a note.
std::vector<VerificationReport> run_suite(const ExperimentConfig& cfg,
                                          const std::vector<Protocol>& which);
std::vector<VerificationReport> run_full_suite(const ExperimentConfig& cfg);

/// Writes <protocol>.csv and <protocol>_summary.json; returns both paths.
std::vector<std::filesystem::path> write_report(const VerificationReport& r,
                                                const std::filesystem::path& dir);

// Small statistics shared with the tests.
double median(std::vector<double> v);
/// Spearman rank correlation with average ranks for ties; 0 when either side
/// is constant or fewer than two points are given.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Ordinary least squares y = intercept + slope * x. DomainError with fewer
/// than two points or constant x. r_squared is 1 when y is constant.
LinearFit ols(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace specfid
