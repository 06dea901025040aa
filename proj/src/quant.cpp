#include "specfid/quant.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "specfid/errors.hpp"

namespace specfid {

namespace {

// Non-negative E2M1 magnitudes indexed by their 3-bit exponent/mantissa code;
// the low bit of the code is the mantissa bit.
constexpr std::array<double, 8> kE2M1Magnitudes = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0};
constexpr double kE2M1Max = 6.0;

constexpr std::array<double, 15> kE2M1Grid = {-6.0, -4.0, -3.0, -2.0, -1.5, -1.0, -0.5, 0.0,
                                              0.5,  1.0,  1.5,  2.0,  3.0,  4.0,  6.0};

double round_integer(double x, Rounding rounding) {
    // nearbyint follows the default round-to-nearest-even mode.
    return rounding == Rounding::half_even ? std::nearbyint(x) : std::round(x);
}

double pow2_ceil(double scale) {
    int exp = 0;
    const double mant = std::frexp(scale, &exp);  // scale = mant * 2^exp, mant in [0.5, 1)
    return mant == 0.5 ? scale : std::ldexp(1.0, exp);
}

struct BlockLayout {
    std::size_t rows;
    std::size_t cols;
    std::size_t width;  // elements per block along a row; 0 = whole matrix
    [[nodiscard]] std::size_t per_row() const { return (cols + width - 1) / width; }
    [[nodiscard]] std::size_t count() const { return width == 0 ? 1 : rows * per_row(); }
};

BlockLayout layout_for(const DenseMatrix& a, const QuantScheme& scheme) {
    if (scheme.family == QuantFamily::uniform_step || !scheme.block_size) {
        return {a.rows(), a.cols(), 0};
    }
    return {a.rows(), a.cols(), *scheme.block_size};
}

// Calls fn(block_index, span) for every block; spans alias `data`.
template <typename Fn>
void for_each_block(std::span<double> data, const BlockLayout& layout, Fn&& fn) {
    if (layout.width == 0) {
        fn(std::size_t{0}, data);
        return;
    }
    const std::size_t per_row = layout.per_row();
    for (std::size_t i = 0; i < layout.rows; ++i) {
        for (std::size_t b = 0; b < per_row; ++b) {
            const std::size_t start = b * layout.width;
            const std::size_t len = std::min(layout.width, layout.cols - start);
            fn(i * per_row + b, data.subspan(i * layout.cols + start, len));
        }
    }
}

double block_max(std::span<const double> block) {
    double m = 0.0;
    for (double v : block) m = std::max(m, std::abs(v));
    return m;
}

// Quantizes one block in place and returns the scale used.
double quantize_block(std::span<double> block, const QuantScheme& scheme) {
    switch (scheme.family) {
        case QuantFamily::identity:
            return 0.0;
        case QuantFamily::uniform_step:
            for (double& v : block) v = quantize_scalar(v, scheme.step, scheme.rounding);
            return scheme.step;
        case QuantFamily::int_levels:
        case QuantFamily::e2m1_grid: {
            const double bmax = block_max(block);
            if (bmax == 0.0) return 0.0;
            const bool fp4 = scheme.family == QuantFamily::e2m1_grid;
            const double top = fp4 ? kE2M1Max : static_cast<double>(scheme.levels);
            double scale = bmax / top;
            if (scheme.scale_mode == ScaleMode::pow2) scale = pow2_ceil(scale);
            const bool pin_top = scheme.scale_mode == ScaleMode::exact;
            for (double& v : block) {
                const double x = v / scale;
                double level = fp4 ? round_to_e2m1(x, scheme.rounding)
                                   : std::clamp(round_integer(x, scheme.rounding), -top, top);
                // The top level reproduces the block maximum exactly rather than
                // top * (bmax / top), which can be off by one ulp.
                if (pin_top && std::abs(level) == top) {
                    v = std::copysign(bmax, level);
                } else {
                    v = level * scale;
                }
            }
            return scale;
        }
    }
    return 0.0;
}

}  // namespace

void QuantScheme::validate() const {
    if (family == QuantFamily::int_levels && levels < 1) {
        throw ConfigError("int_levels scheme needs L >= 1");
    }
    if (family == QuantFamily::uniform_step && !(step > 0.0 && std::isfinite(step))) {
        throw ConfigError("uniform_step scheme needs a finite step > 0");
    }
    if (block_size && *block_size < 1) {
        throw ConfigError("block_size must be >= 1 or global");
    }
}

QuantScheme QuantScheme::int4() { return int_levels_global(7); }

QuantScheme QuantScheme::nvfp4() {
    return QuantScheme{QuantFamily::e2m1_grid, 7, 0.0, 16, Rounding::half_even, ScaleMode::exact};
}

QuantScheme QuantScheme::mxfp4() {
    return QuantScheme{QuantFamily::e2m1_grid, 7, 0.0, 32, Rounding::half_even, ScaleMode::pow2};
}

QuantScheme QuantScheme::uniform(double step) {
    return QuantScheme{QuantFamily::uniform_step, 7,        step,
                       std::nullopt,              Rounding::half_even, ScaleMode::exact};
}

QuantScheme QuantScheme::int_levels_global(int levels) {
    return QuantScheme{QuantFamily::int_levels, levels,   0.0,
                       std::nullopt,            Rounding::half_even, ScaleMode::exact};
}

QuantScheme QuantScheme::none() {
    return QuantScheme{QuantFamily::identity, 7,        0.0,
                       std::nullopt,          Rounding::half_even, ScaleMode::exact};
}

QuantScheme scheme_preset(std::string_view name, std::optional<std::size_t> block,
                          std::optional<double> levels_or_step) {
    QuantScheme s;
    if (name == "int4") {
        s = QuantScheme::int4();
        if (levels_or_step) {
            const double l = *levels_or_step;
            if (!(l >= 1.0) || l != std::floor(l) || l > 1e9) {
                throw ConfigError("--l must be a positive integer for int4");
            }
            s.levels = static_cast<int>(l);
        }
    } else if (name == "nvfp4" || name == "mxfp4") {
        s = name == "nvfp4" ? QuantScheme::nvfp4() : QuantScheme::mxfp4();
        if (levels_or_step) throw ConfigError("--l does not apply to the e2m1 presets");
    } else if (name == "step") {
        if (!levels_or_step) throw ConfigError("scheme 'step' needs --l <step>");
        s = QuantScheme::uniform(*levels_or_step);
    } else {
        throw ConfigError("unknown scheme '" + std::string(name) +
                          "' (expected int4, nvfp4, mxfp4 or step)");
    }
    if (block) {
        if (*block == 0) throw ConfigError("--block must be >= 1");
        s.block_size = *block;
    }
    s.validate();
    return s;
}

double QuantResult::mean_step() const {
    if (scales.empty()) return 0.0;
    return std::accumulate(scales.begin(), scales.end(), 0.0) / static_cast<double>(scales.size());
}

double QuantResult::max_step() const {
    return scales.empty() ? 0.0 : *std::max_element(scales.begin(), scales.end());
}

double quantize_scalar(double a, double s, Rounding rounding) {
    if (!(s > 0.0)) throw DomainError("quantization step must be > 0");
    return s * round_integer(a / s, rounding);
}

QuantResult quantize_uniform(const DenseMatrix& a, int levels, Rounding rounding) {
    QuantScheme scheme = QuantScheme::int_levels_global(levels);
    scheme.rounding = rounding;
    return quantize_blockwise(a, scheme);
}

std::span<const double> e2m1_grid() { return kE2M1Grid; }

double round_to_e2m1(double x, Rounding rounding) {
    const double r = std::min(std::abs(x), kE2M1Max);
    std::size_t hi = 1;
    while (hi < kE2M1Magnitudes.size() - 1 && kE2M1Magnitudes[hi] < r) ++hi;
    const std::size_t lo = hi - 1;
    const double d_lo = r - kE2M1Magnitudes[lo];
    const double d_hi = kE2M1Magnitudes[hi] - r;
    std::size_t pick = 0;
    if (d_lo < d_hi) {
        pick = lo;
    } else if (d_hi < d_lo) {
        pick = hi;
    } else if (rounding == Rounding::half_away) {
        pick = hi;
    } else {
        pick = (lo % 2 == 0) ? lo : hi;
    }
    return std::copysign(kE2M1Magnitudes[pick], x);
}

QuantResult quantize_blockwise(const DenseMatrix& a, const QuantScheme& scheme) {
    scheme.validate();
    const BlockLayout layout = layout_for(a, scheme);
    std::vector<double> data(a.entries().begin(), a.entries().end());
    std::vector<double> scales(layout.count(), 0.0);
    const bool degenerate = a.all_zero();
    if (!degenerate) {
        for_each_block(std::span<double>(data), layout, [&](std::size_t idx, std::span<double> blk) {
            scales[idx] = quantize_block(blk, scheme);
        });
    } else if (scheme.family == QuantFamily::uniform_step) {
        std::fill(scales.begin(), scales.end(), scheme.step);
    }
    return QuantResult{DenseMatrix(a.rows(), a.cols(), std::move(data)), std::move(scales),
                       degenerate};
}

DenseMatrix error_matrix(const DenseMatrix& original, const DenseMatrix& quantized) {
    return subtract(quantized, original);
}

double max_error_for_scale(const QuantScheme& scheme, double scale) {
    switch (scheme.family) {
        case QuantFamily::identity:
            return 0.0;
        case QuantFamily::uniform_step:
        case QuantFamily::int_levels:
            return scale / 2.0;
        case QuantFamily::e2m1_grid:
            return scale * (kE2M1Magnitudes[7] - kE2M1Magnitudes[6]) / 2.0;
    }
    return 0.0;
}

ErrorStats error_stats(const DenseMatrix& e, double step, std::size_t bins) {
    ErrorStats st;
    const auto v = e.entries();
    st.count = v.size();
    st.step_used = step;
    long double sum = 0.0L;
    for (double x : v) sum += x;
    st.mean = static_cast<double>(sum / static_cast<long double>(v.size()));
    long double ss = 0.0L;
    for (double x : v) {
        const long double d = x - static_cast<long double>(st.mean);
        ss += d * d;
    }
    st.variance = v.size() > 1 ? static_cast<double>(ss / static_cast<long double>(v.size() - 1))
                               : 0.0;
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    st.min = *mn;
    st.max = *mx;

    bins = std::max<std::size_t>(bins, 1);
    st.histogram.edges.resize(bins + 1);
    st.histogram.counts.assign(bins, 0);
    const double width = (st.max - st.min) / static_cast<double>(bins);
    for (std::size_t b = 0; b <= bins; ++b) {
        st.histogram.edges[b] = st.min + width * static_cast<double>(b);
    }
    st.histogram.edges[bins] = st.max;
    for (double x : v) {
        std::size_t b = 0;
        if (width > 0.0) {
            b = static_cast<std::size_t>((x - st.min) / width);
            b = std::min(b, bins - 1);
        }
        ++st.histogram.counts[b];
    }
    return st;
}

std::string_view to_string(QuantFamily f) {
    switch (f) {
        case QuantFamily::uniform_step: return "uniform_step";
        case QuantFamily::int_levels: return "int_levels";
        case QuantFamily::e2m1_grid: return "e2m1_grid";
        case QuantFamily::identity: return "identity";
    }
    return "?";
}

std::string_view to_string(Rounding r) {
    return r == Rounding::half_even ? "half_even" : "half_away";
}

std::string_view to_string(ScaleMode m) { return m == ScaleMode::exact ? "exact" : "pow2"; }

void to_json(nlohmann::json& j, const QuantScheme& s) {
    j = nlohmann::json::object();
    j["family"] = to_string(s.family);
    if (s.block_size) {
        j["block_size"] = *s.block_size;
    } else {
        j["block_size"] = "global";
    }
    j["rounding"] = to_string(s.rounding);
    j["scale_mode"] = to_string(s.scale_mode);
    if (s.family == QuantFamily::int_levels) j["L"] = s.levels;
    if (s.family == QuantFamily::uniform_step) j["step"] = s.step;
}

void from_json(const nlohmann::json& j, QuantScheme& s) {
    if (!j.is_object()) throw ConfigError("scheme must be a JSON object");
    for (const auto& item : j.items()) {
        static const std::array<std::string_view, 7> known = {"preset", "family",     "block_size", "rounding",
                                                              "scale_mode", "L", "step"};
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
            throw ConfigError("unknown key '" + item.key() + "' in scheme");
        }
    }
    QuantScheme out;
    if (j.contains("preset")) {
        out = scheme_preset(j.at("preset").get<std::string>());
    }
    if (j.contains("family")) {
        const auto f = j.at("family").get<std::string>();
        if (f == "uniform_step") out.family = QuantFamily::uniform_step;
        else if (f == "int_levels") out.family = QuantFamily::int_levels;
        else if (f == "e2m1_grid") out.family = QuantFamily::e2m1_grid;
        else if (f == "identity") out.family = QuantFamily::identity;
        else throw ConfigError("unknown scheme family '" + f + "'");
        if (out.family == QuantFamily::uniform_step || out.family == QuantFamily::identity) {
            out.block_size.reset();
        }
    }
    if (j.contains("block_size")) {
        const auto& b = j.at("block_size");
        if (b.is_string() && b.get<std::string>() == "global") {
            out.block_size.reset();
        } else if (b.is_number_unsigned() || (b.is_number_integer() && b.get<long long>() > 0)) {
            out.block_size = b.get<std::size_t>();
        } else {
            throw ConfigError("block_size must be a positive integer or \"global\"");
        }
    }
    if (j.contains("rounding")) {
        const auto r = j.at("rounding").get<std::string>();
        if (r == "half_even") out.rounding = Rounding::half_even;
        else if (r == "half_away") out.rounding = Rounding::half_away;
        else throw ConfigError("unknown rounding '" + r + "'");
    }
    if (j.contains("scale_mode")) {
        const auto m = j.at("scale_mode").get<std::string>();
        if (m == "exact") out.scale_mode = ScaleMode::exact;
        else if (m == "pow2") out.scale_mode = ScaleMode::pow2;
        else throw ConfigError("unknown scale_mode '" + m + "'");
    }
    if (j.contains("L")) out.levels = j.at("L").get<int>();
    if (j.contains("step")) out.step = j.at("step").get<double>();
    out.validate();
    s = out;
}

void to_json(nlohmann::json& j, const ErrorStats& s) {
    j = nlohmann::json{{"mean", s.mean},         {"variance", s.variance}, {"min", s.min},
                       {"max", s.max},           {"count", s.count},       {"step_used", s.step_used},
                       {"histogram_edges", s.histogram.edges},
                       {"histogram_counts", s.histogram.counts}};
}

}  // namespace specfid
