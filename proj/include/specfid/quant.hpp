#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "specfid/matrix.hpp"

namespace specfid {

enum class QuantFamily {
    uniform_step,  // fixed step s for the whole matrix
    int_levels,    // step = block_max / L, integer levels in [-L, L]
    e2m1_grid,     // FP4 E2M1 values scaled by block_max / 6
    identity,      // no-op control scheme
};

enum class Rounding { half_even, half_away };
enum class ScaleMode { exact, pow2 };

/// A quantizer configuration. Blocks are contiguous 1-D runs of `block_size`
/// elements along each row (the last run of a row may be short); an unset
/// block_size means one block spanning the whole matrix.
struct QuantScheme {
    QuantFamily family = QuantFamily::e2m1_grid;
    int levels = 7;           // L, int_levels only
    double step = 0.0;        // s, uniform_step only
    std::optional<std::size_t> block_size = 16;
    Rounding rounding = Rounding::half_even;
    ScaleMode scale_mode = ScaleMode::exact;

    /// Throws ConfigError when the fields are inconsistent.
    void validate() const;

    static QuantScheme int4();
    static QuantScheme nvfp4();
    static QuantScheme mxfp4();
    static QuantScheme uniform(double step);
    static QuantScheme int_levels_global(int levels);
    static QuantScheme none();

    friend bool operator==(const QuantScheme&, const QuantScheme&) = default;
};

/// CLI preset: int4 | nvfp4 | mxfp4 | step. For "step" the `levels_or_step`
/// value is the step size; for the others it overrides L when given.
QuantScheme scheme_preset(std::string_view name, std::optional<std::size_t> block = std::nullopt,
                          std::optional<double> levels_or_step = std::nullopt);

void to_json(nlohmann::json& j, const QuantScheme& s);
void from_json(const nlohmann::json& j, QuantScheme& s);

struct QuantResult {
    DenseMatrix values;
    /// Scale applied to each block, in row-major block order. For e2m1_grid
    /// this is block_max/6 (or its power-of-two ceiling), i.e. the spacing of
    /// the grid between 2 and 4 in scaled units.
    std::vector<double> scales;
    /// Input was all zero; the output is the input unchanged.
    bool degenerate = false;

    /// Mean of the per-block steps (s-bar).
    [[nodiscard]] double mean_step() const;
    [[nodiscard]] double max_step() const;
};

/// s * round(a / s) with the given tie rule. DomainError unless s > 0.
double quantize_scalar(double a, double s, Rounding rounding = Rounding::half_even);

/// Global symmetric quantization with s = max|A| / L. An all-zero matrix is
/// returned unchanged with s = 0 and the degenerate flag set.
QuantResult quantize_uniform(const DenseMatrix& a, int levels,
                             Rounding rounding = Rounding::half_even);

/// The FP4 E2M1 value set, ascending: 0, +-0.5, +-1, +-1.5, +-2, +-3, +-4, +-6.
std::span<const double> e2m1_grid();

/// Nearest E2M1 value to x (in scaled units, |x| <= 6 expected; larger
/// magnitudes saturate at 6). Ties go to the even mantissa under half_even,
/// away from zero under half_away.
double round_to_e2m1(double x, Rounding rounding = Rounding::half_even);

QuantResult quantize_blockwise(const DenseMatrix& a, const QuantScheme& scheme);

/// E = quantized - original.
DenseMatrix error_matrix(const DenseMatrix& original, const DenseMatrix& quantized);

/// Largest |e| a round-to-nearest quantizer of this family can produce for a
/// block with the given scale.
double max_error_for_scale(const QuantScheme& scheme, double scale);

struct Histogram {
    std::vector<double> edges;  // bins + 1 entries
    std::vector<std::size_t> counts;
};

struct ErrorStats {
    double mean = 0.0;
    double variance = 0.0;  // unbiased (n - 1) estimator; 0 for a single element
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
    double step_used = 0.0;
    Histogram histogram;
};

inline constexpr std::size_t kHistogramBins = 50;

ErrorStats error_stats(const DenseMatrix& e, double step, std::size_t bins = kHistogramBins);

void to_json(nlohmann::json& j, const ErrorStats& s);

std::string_view to_string(QuantFamily f);
std::string_view to_string(Rounding r);
std::string_view to_string(ScaleMode m);

}  // namespace specfid
