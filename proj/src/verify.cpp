#include "specfid/verify.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "specfid/errors.hpp"
#include "specfid/format.hpp"
#include "specfid/rmt.hpp"
#include "specfid/tensor_io.hpp"

namespace specfid {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 7> kProtocolNames = {
    "unbias", "regress", "srank", "bbp", "bernstein", "gradbound", "failprof",
};

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (const auto& item : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            throw ConfigError("unknown key '" + item.key() + "' in " + std::string(where));
        }
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) {
            throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
        }
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
    }
    out = v.get<T>();
}

void need(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, RandomStream& rng) {
    std::vector<double> v(rows * cols);
    rng.fill_normal(v);
    for (double& x : v) x *= scale;
    return DenseMatrix(rows, cols, std::move(v));
}

double sum_sq(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

std::string alpha_tag(double alpha) { return "alpha_" + format_real(alpha); }

}  // namespace

std::string_view to_string(Protocol p) { return kProtocolNames[static_cast<std::size_t>(p)]; }

Protocol protocol_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kProtocolNames.size(); ++i) {
        if (kProtocolNames[i] == name) return kAllProtocols[i];
    }
    throw ConfigError("unknown protocol '" + std::string(name) + "'");
}

std::uint64_t ExperimentConfig::seed_for(Protocol p) const {
    return seed + static_cast<std::uint64_t>(p);
}

void ExperimentConfig::validate() const {
    try {
        ensemble.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("ensemble: ") + e.what());
    }
    scheme.validate();
    need(!trials || *trials >= 1, "trials must be >= 1");
    need(eta > 0.0 && std::isfinite(eta), "eta must be > 0");
    need(theta > 0.0 && theta < 1.0, "theta must lie in (0, 1)");
    if (fit_range) {
        need(fit_range->lo >= 1 && fit_range->hi >= fit_range->lo + 2,
             "fit_range needs 1 <= lo and at least three points");
    }

    need(unbias.trials >= 1 && unbias.rows >= 1 && unbias.cols >= 1,
         "unbias: trials, rows and cols must be >= 1");
    need(unbias.input_scale >= 0.0 && std::isfinite(unbias.input_scale),
         "unbias: input_scale must be finite and >= 0");
    need(unbias.mean_sigmas > 0.0, "unbias: mean_sigmas must be > 0");
    need(unbias.var_lo >= 0.0 && unbias.var_lo < unbias.var_hi,
         "unbias: need 0 <= var_lo < var_hi");

    need(regress.trials >= 1 && regress.d >= 3, "regress: need trials >= 1 and d >= 3");
    need(!regress.alphas.empty(), "regress: alphas must not be empty");
    for (double a : regress.alphas) need(a > 0.0, "regress: every alpha must be > 0");
    need(regress.mu > 0.0, "regress: mu must be > 0");
    need(regress.min_r2 >= 0.0 && regress.min_r2 <= 1.0, "regress: min_r2 must lie in [0, 1]");
    need(regress.intercept_frac >= 0.0, "regress: intercept_frac must be >= 0");

    need(srank.trials >= 1 && srank.d >= 2 && srank.N >= 2,
         "srank: need trials >= 1, d >= 2 and N >= 2");
    need(srank.alpha_lo > 0.0 && srank.alpha_lo <= srank.alpha_hi,
         "srank: need 0 < alpha_lo <= alpha_hi");
    need(srank.mu > 0.0, "srank: mu must be > 0");
    need(srank.min_rate >= 0.0 && srank.min_rate <= 1.0, "srank: min_rate must lie in [0, 1]");

    need(bbp.trials >= 1 && bbp.d >= 2, "bbp: need trials >= 1 and d >= 2");
    need(bbp.c > 0.0 && std::isfinite(bbp.c), "bbp: c must be > 0");
    need(bbp.nu2 > 0.0, "bbp: nu2 must be > 0");
    need(bbp.spikes.size() < bbp.d, "bbp: more spikes than dimensions");
    need(bbp.spike_tol > 0.0 && bbp.edge_tol > 0.0, "bbp: tolerances must be > 0");
    const auto n_samples = static_cast<std::size_t>(std::llround(static_cast<double>(bbp.d) / bbp.c));
    need(n_samples >= 1, "bbp: d / c rounds to zero samples");
    const double c_eff = static_cast<double>(bbp.d) / static_cast<double>(n_samples);
    const double threshold = bbp_threshold(bbp.nu2, c_eff);
    for (double s : bbp.spikes) {
        need(s > threshold, "bbp: spike " + format_real(s) + " is sub-critical (threshold " +
                                format_real(threshold) +
                                "); it merges into the bulk, whose edge is given by mp_bulk_edge");
    }

    need(bernstein.trials >= 1 && bernstein.n >= 1 && bernstein.scale_n >= 1 &&
             bernstein.scale_trials >= 1,
         "bernstein: trials and sizes must be >= 1");
    need(bernstein.grid_points >= 2, "bernstein: grid_points must be >= 2");
    need(bernstein.ratio_lo < bernstein.ratio_hi, "bernstein: need ratio_lo < ratio_hi");

    need(gradbound.trials >= 1 && gradbound.p >= 1, "gradbound: need trials >= 1 and p >= 1");
    need(gradbound.M > 0.0 && std::isfinite(gradbound.M), "gradbound: M must be > 0");
    need(gradbound.slack >= 0.0 && gradbound.decay_slack >= 0.0,
         "gradbound: slacks must be >= 0");
    if (fit_range) {
        need(fit_range->hi <= std::min({ensemble.d, ensemble.N, gradbound.p}),
             "fit_range exceeds the gradient spectrum length");
    }

    need(failprof.trials >= 1 && failprof.d >= 2, "failprof: need trials >= 1 and d >= 2");
    need(failprof.alpha > 0.0, "failprof: alpha must be > 0");
    need(failprof.r >= 1 && failprof.r <= failprof.d, "failprof: need 1 <= r <= d");
    need(failprof.mu > 0.0, "failprof: mu must be > 0");
    for (int L : failprof.levels) need(L >= 1, "failprof: every level must be >= 1");
}

void to_json(json& j, const ExperimentConfig& cfg) {
    j = json::object();
    j["seed"] = cfg.seed;
    if (cfg.trials) j["trials"] = *cfg.trials;
    j["eta"] = cfg.eta;
    j["theta"] = cfg.theta;
    if (cfg.fit_range) j["fit_range"] = {cfg.fit_range->lo, cfg.fit_range->hi};
    j["ensemble"] = cfg.ensemble;
    j["scheme"] = cfg.scheme;
    const auto& u = cfg.unbias;
    const auto& g = cfg.regress;
    const auto& s = cfg.srank;
    const auto& b = cfg.bbp;
    const auto& n = cfg.bernstein;
    const auto& w = cfg.gradbound;
    const auto& f = cfg.failprof;
    j["protocols"] = {
        {"unbias",
         {{"trials", u.trials}, {"rows", u.rows}, {"cols", u.cols},
          {"input_scale", u.input_scale}, {"mean_sigmas", u.mean_sigmas},
          {"var_lo", u.var_lo}, {"var_hi", u.var_hi}}},
        {"regress",
         {{"trials", g.trials}, {"d", g.d}, {"alphas", g.alphas}, {"mu", g.mu},
          {"min_r2", g.min_r2}, {"intercept_frac", g.intercept_frac}}},
        {"srank",
         {{"trials", s.trials}, {"d", s.d}, {"N", s.N}, {"alpha_lo", s.alpha_lo},
          {"alpha_hi", s.alpha_hi}, {"mu", s.mu}, {"min_rate", s.min_rate}}},
        {"bbp",
         {{"trials", b.trials}, {"d", b.d}, {"c", b.c}, {"nu2", b.nu2}, {"spikes", b.spikes},
          {"spike_tol", b.spike_tol}, {"edge_tol", b.edge_tol}}},
        {"bernstein",
         {{"trials", n.trials}, {"n", n.n}, {"grid_points", n.grid_points},
          {"scale_n", n.scale_n}, {"scale_trials", n.scale_trials}, {"ratio_lo", n.ratio_lo},
          {"ratio_hi", n.ratio_hi}}},
        {"gradbound",
         {{"trials", w.trials}, {"p", w.p}, {"M", w.M}, {"slack", w.slack},
          {"decay_slack", w.decay_slack}}},
        {"failprof",
         {{"trials", f.trials}, {"d", f.d}, {"alpha", f.alpha}, {"r", f.r}, {"mu", f.mu},
          {"levels", f.levels}}},
    };
}

void from_json(const json& j, ExperimentConfig& cfg) {
    ExperimentConfig out;
    try {
        check_keys(j, {"seed", "trials", "eta", "theta", "fit_range", "ensemble", "scheme", "protocols"},
                   "config");
        read(j, "seed", out.seed);
        if (j.contains("trials") && !j.at("trials").is_null()) {
            std::size_t t = 0;
            read(j, "trials", t);
            out.trials = t;
        }
        read(j, "eta", out.eta);
        read(j, "theta", out.theta);
        if (j.contains("fit_range") && !j.at("fit_range").is_null()) {
            const json& r = j.at("fit_range");
            if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() ||
                !r[1].is_number_unsigned()) {
                throw ConfigError("fit_range must be [lo, hi] with non-negative integers");
            }
            out.fit_range = IndexRange{r[0].get<std::size_t>(), r[1].get<std::size_t>()};
        }
        if (j.contains("ensemble")) {
            check_keys(j.at("ensemble"), {"V", "alpha", "d", "N", "seed"}, "ensemble");
            try {
                out.ensemble = j.at("ensemble").get<ZipfEnsemble>();
            } catch (const DomainError& e) {
                throw ConfigError(std::string("ensemble: ") + e.what());
            }
        }
        if (j.contains("scheme")) {
            const json& s = j.at("scheme");
            out.scheme = s.is_string() ? scheme_preset(s.get<std::string>()) : s.get<QuantScheme>();
        }
        if (j.contains("protocols")) {
            const json& p = j.at("protocols");
            check_keys(p, {"unbias", "regress", "srank", "bbp", "bernstein", "gradbound", "failprof"},
                       "protocols");
            if (p.contains("unbias")) {
                const json& q = p.at("unbias");
                check_keys(q, {"trials", "rows", "cols", "input_scale", "mean_sigmas", "var_lo", "var_hi"},
                           "protocols.unbias");
                auto& u = out.unbias;
                read(q, "trials", u.trials);
                read(q, "rows", u.rows);
                read(q, "cols", u.cols);
                read(q, "input_scale", u.input_scale);
                read(q, "mean_sigmas", u.mean_sigmas);
                read(q, "var_lo", u.var_lo);
                read(q, "var_hi", u.var_hi);
            }
            if (p.contains("regress")) {
                const json& q = p.at("regress");
                check_keys(q, {"trials", "d", "alphas", "mu", "min_r2", "intercept_frac"},
                           "protocols.regress");
                auto& g = out.regress;
                read(q, "trials", g.trials);
                read(q, "d", g.d);
                read(q, "alphas", g.alphas);
                read(q, "mu", g.mu);
                read(q, "min_r2", g.min_r2);
                read(q, "intercept_frac", g.intercept_frac);
            }
            if (p.contains("srank")) {
                const json& q = p.at("srank");
                check_keys(q, {"trials", "d", "N", "alpha_lo", "alpha_hi", "mu", "min_rate"},
                           "protocols.srank");
                auto& s = out.srank;
                read(q, "trials", s.trials);
                read(q, "d", s.d);
                read(q, "N", s.N);
                read(q, "alpha_lo", s.alpha_lo);
                read(q, "alpha_hi", s.alpha_hi);
                read(q, "mu", s.mu);
                read(q, "min_rate", s.min_rate);
            }
            if (p.contains("bbp")) {
                const json& q = p.at("bbp");
                check_keys(q, {"trials", "d", "c", "nu2", "spikes", "spike_tol", "edge_tol"},
                           "protocols.bbp");
                auto& b = out.bbp;
                read(q, "trials", b.trials);
                read(q, "d", b.d);
                read(q, "c", b.c);
                read(q, "nu2", b.nu2);
                read(q, "spikes", b.spikes);
                read(q, "spike_tol", b.spike_tol);
                read(q, "edge_tol", b.edge_tol);
            }
            if (p.contains("bernstein")) {
                const json& q = p.at("bernstein");
                check_keys(q, {"trials", "n", "grid_points", "scale_n", "scale_trials", "ratio_lo",
                               "ratio_hi"},
                           "protocols.bernstein");
                auto& n = out.bernstein;
                read(q, "trials", n.trials);
                read(q, "n", n.n);
                read(q, "grid_points", n.grid_points);
                read(q, "scale_n", n.scale_n);
                read(q, "scale_trials", n.scale_trials);
                read(q, "ratio_lo", n.ratio_lo);
                read(q, "ratio_hi", n.ratio_hi);
            }
            if (p.contains("gradbound")) {
                const json& q = p.at("gradbound");
                check_keys(q, {"trials", "p", "M", "slack", "decay_slack"}, "protocols.gradbound");
                auto& w = out.gradbound;
                read(q, "trials", w.trials);
                read(q, "p", w.p);
                read(q, "M", w.M);
                read(q, "slack", w.slack);
                read(q, "decay_slack", w.decay_slack);
            }
            if (p.contains("failprof")) {
                const json& q = p.at("failprof");
                check_keys(q, {"trials", "d", "alpha", "r", "mu", "levels"}, "protocols.failprof");
                auto& f = out.failprof;
                read(q, "trials", f.trials);
                read(q, "d", f.d);
                read(q, "alpha", f.alpha);
                read(q, "r", f.r);
                read(q, "mu", f.mu);
                read(q, "levels", f.levels);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    out.validate();
    cfg = std::move(out);
}

ExperimentConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed config JSON: ") + e.what());
    }
    return j.get<ExperimentConfig>();
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path));
}

void Table::add(std::vector<double> row) {
    if (row.size() != columns.size()) {
        throw ShapeError("table row has " + std::to_string(row.size()) + " cells, expected " +
                         std::to_string(columns.size()));
    }
    rows.push_back(std::move(row));
}

std::string Table::to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) out += ',';
        out += columns[i];
    }
    out += '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_real(row[i]);
        }
        out += '\n';
    }
    return out;
}

void VerificationReport::set(std::string name, double value) {
    for (auto& [k, v] : statistics) {
        if (k == name) {
            v = value;
            return;
        }
    }
    statistics.emplace_back(std::move(name), value);
}

double VerificationReport::statistic(std::string_view name) const {
    for (const auto& [k, v] : statistics) {
        if (k == name) return v;
    }
    throw IndexError("report '" + protocol + "' has no statistic '" + std::string(name) + "'");
}

bool VerificationReport::has(std::string_view name) const {
    return std::any_of(statistics.begin(), statistics.end(),
                       [&](const auto& kv) { return kv.first == name; });
}

std::string VerificationReport::summary_json() const {
    nlohmann::ordered_json j;
    j["protocol"] = protocol;
    j["pass"] = pass;
    nlohmann::ordered_json stats = nlohmann::ordered_json::object();
    for (const auto& [k, v] : statistics) stats[k] = v;
    j["statistics"] = stats;
    j["notes"] = notes;
    return j.dump(2) + "\n";
}

double median(std::vector<double> v) {
    if (v.empty()) throw DomainError("median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = r;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ShapeError("spearman: samples differ in length");
    if (x.size() < 2) return 0.0;
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ShapeError("ols: samples differ in length");
    if (x.size() < 2) throw DomainError("ols: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw DomainError("ols: x is constant");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

VerificationReport run_unbiasedness(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& s = cfg.unbias;
    const std::uint64_t seed = cfg.seed_for(Protocol::unbias);
    const std::size_t trials = cfg.trials_for(s.trials);
    const double mn = static_cast<double>(s.rows) * static_cast<double>(s.cols);

    VerificationReport rep;
    rep.protocol = "unbias";
    rep.table.columns = {"trial", "mean", "variance", "step", "mean_bound", "variance_ratio"};

    std::size_t mean_violations = 0;
    double max_abs_mean = 0.0;
    double max_mean_frac = 0.0;
    double var_sum = 0.0;
    double ref_sum = 0.0;
    double step_sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        RandomStream rng(seed, t);
        const DenseMatrix a = gaussian_matrix(s.rows, s.cols, s.input_scale, rng);
        const QuantResult q = quantize_blockwise(a, cfg.scheme);
        const double step = q.mean_step();
        const ErrorStats st = error_stats(error_matrix(a, q.values), step);
        const double bound = s.mean_sigmas * step / std::sqrt(12.0 * mn);
        const double ref = step * step / 12.0;
        if (!(std::abs(st.mean) <= bound)) ++mean_violations;
        max_abs_mean = std::max(max_abs_mean, std::abs(st.mean));
        if (bound > 0.0) max_mean_frac = std::max(max_mean_frac, std::abs(st.mean) / bound);
        var_sum += st.variance;
        ref_sum += ref;
        step_sum += step;
        rep.table.add({static_cast<double>(t), st.mean, st.variance, step, bound,
                       ref > 0.0 ? st.variance / ref : 0.0});
    }

    bool variance_ok = false;
    if (ref_sum > 0.0) {
        const double ratio = var_sum / ref_sum;
        rep.set("pooled_variance_ratio", ratio);
        variance_ok = ratio >= s.var_lo && ratio <= s.var_hi;
    } else {
        variance_ok = var_sum == 0.0;
        rep.set("pooled_variance_ratio", variance_ok ? 1.0 : 0.0);
        rep.notes.push_back("zero quantization step in every trial; error is identically zero");
    }
    rep.set("trials", static_cast<double>(trials));
    rep.set("mean_step", step_sum / static_cast<double>(trials));
    rep.set("pooled_variance", var_sum / static_cast<double>(trials));
    rep.set("pooled_reference", ref_sum / static_cast<double>(trials));
    rep.set("max_abs_mean", max_abs_mean);
    rep.set("max_mean_over_bound", max_mean_frac);
    rep.set("mean_violations", static_cast<double>(mean_violations));
    rep.set("var_lo", s.var_lo);
    rep.set("var_hi", s.var_hi);
    rep.pass = mean_violations == 0 && variance_ok;
    return rep;
}

VerificationReport run_relative_error_regression(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& s = cfg.regress;
    const std::uint64_t seed = cfg.seed_for(Protocol::regress);
    const std::size_t trials = cfg.trials_for(s.trials);

    VerificationReport rep;
    rep.protocol = "regress";
    rep.table.columns = {"alpha", "trial", "k", "sigma", "sigma_tilde", "ratio", "eps", "in_fit"};
    rep.notes.push_back(
        "fit uses indices with sigma_k above the noise floor ||E||_2, where the relative error "
        "bound ||E||_2 / sigma_k is below one");

    bool all_pass = true;
    std::size_t zero_error_trials = 0;
    std::size_t stream = 0;
    for (double alpha : s.alphas) {
        const std::vector<double> sigma = power_law_spectrum(s.d, s.mu, alpha, s.d);
        std::vector<double> r2;
        std::vector<double> icpt;
        std::vector<double> max_eps;
        std::vector<double> slopes;
        for (std::size_t t = 0; t < trials; ++t, ++stream) {
            RandomStream rng(seed, stream);
            const DenseMatrix a = prescribed_spectrum_matrix(s.d, s.d, sigma, rng);
            const QuantResult q = quantize_blockwise(a, cfg.scheme);
            const DenseMatrix e = error_matrix(a, q.values);
            const bool zero_error = e.all_zero();
            const std::vector<double> st = zero_error ? sigma : singular_values(q.values);
            const double floor = zero_error ? 0.0 : spectral_norm(e);

            std::vector<double> x;
            std::vector<double> y;
            for (std::size_t k = 0; k < s.d; ++k) {
                const double eps = std::abs(st[k] - sigma[k]) / sigma[k];
                const bool in_fit = !zero_error && sigma[k] > floor;
                if (in_fit) {
                    x.push_back(1.0 / sigma[k]);
                    y.push_back(eps);
                }
                rep.table.add({alpha, static_cast<double>(t), static_cast<double>(k + 1), sigma[k],
                               st[k], st[k] / sigma[k], eps, in_fit ? 1.0 : 0.0});
            }
            if (zero_error) {
                ++zero_error_trials;
                continue;
            }
            if (x.size() < 3) {
                throw ConfigError("regress: fewer than three singular values exceed the noise "
                                  "floor ||E||_2 = " + format_real(floor) +
                                  "; the spectrum is degenerate for this scheme");
            }
            const LinearFit fit = ols(x, y);
            r2.push_back(fit.r_squared);
            icpt.push_back(fit.intercept);
            slopes.push_back(fit.slope);
            max_eps.push_back(*std::max_element(y.begin(), y.end()));
            rep.set("r2_" + alpha_tag(alpha) + "_trial_" + std::to_string(t), fit.r_squared);
        }
        if (r2.empty()) continue;
        const double med_r2 = median(r2);
        const double med_icpt = median(icpt);
        const double med_max = median(max_eps);
        rep.set("median_r2_" + alpha_tag(alpha), med_r2);
        rep.set("median_slope_" + alpha_tag(alpha), median(slopes));
        rep.set("median_intercept_" + alpha_tag(alpha), med_icpt);
        rep.set("median_max_eps_" + alpha_tag(alpha), med_max);
        const bool ok = med_r2 >= s.min_r2 && med_icpt <= s.intercept_frac * med_max;
        rep.set("pass_" + alpha_tag(alpha), ok ? 1.0 : 0.0);
        all_pass = all_pass && ok;
    }
    rep.set("zero_error_trials", static_cast<double>(zero_error_trials));
    rep.set("min_r2", s.min_r2);
    if (zero_error_trials == trials * s.alphas.size()) {
        rep.notes.push_back("no quantization error in any trial; regression skipped");
    }
    rep.pass = all_pass;
    return rep;
}

VerificationReport run_stable_rank_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& s = cfg.srank;
    const std::uint64_t seed = cfg.seed_for(Protocol::srank);
    const std::size_t trials = cfg.trials_for(s.trials);
    const std::size_t count = std::min(s.d, s.N);

    VerificationReport rep;
    rep.protocol = "srank";
    rep.table.columns = {"trial",          "alpha",          "sr_before", "sr_after", "delta",
                         "head_inflation", "tail_inflation", "excluded"};

    std::size_t included = 0;
    std::size_t increased = 0;
    std::size_t inflation_failures = 0;
    std::vector<double> deltas;
    for (std::size_t t = 0; t < trials; ++t) {
        RandomStream rng(seed, t);
        const double alpha = s.alpha_lo + (s.alpha_hi - s.alpha_lo) * rng.uniform();
        const std::vector<double> sigma = power_law_spectrum(count, s.mu, alpha, count);
        const DenseMatrix a = prescribed_spectrum_matrix(s.d, s.N, sigma, rng);
        const QuantResult q = quantize_blockwise(a, cfg.scheme);
        const double before = stable_rank(sigma);
        const bool excluded = q.values == a;
        double after = before;
        double head = 1.0;
        double tail = 1.0;
        if (!excluded) {
            const std::vector<double> st = singular_values(q.values);
            after = stable_rank(st);
            const double h0 = sigma[0] * sigma[0];
            const double h1 = st[0] * st[0];
            head = h1 / h0;
            tail = (sum_sq(st) - h1) / (sum_sq(sigma) - h0);
            ++included;
            if (after > before) {
                ++increased;
                if (!(tail > head)) ++inflation_failures;
            }
            deltas.push_back(after - before);
        }
        rep.table.add({static_cast<double>(t), alpha, before, after, after - before, head, tail,
                       excluded ? 1.0 : 0.0});
    }
    const double rate =
        included ? static_cast<double>(increased) / static_cast<double>(included) : 1.0;
    rep.set("trials", static_cast<double>(trials));
    rep.set("included_trials", static_cast<double>(included));
    rep.set("increased_trials", static_cast<double>(increased));
    rep.set("increase_rate", rate);
    rep.set("min_rate", s.min_rate);
    rep.set("inflation_failures", static_cast<double>(inflation_failures));
    if (!deltas.empty()) rep.set("median_delta", median(deltas));
    if (included == 0) {
        rep.notes.push_back("every trial was unchanged by quantization; nothing to test");
    }
    rep.pass = rate >= s.min_rate && inflation_failures == 0;
    return rep;
}

VerificationReport run_bbp_check(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& s = cfg.bbp;
    const std::uint64_t seed = cfg.seed_for(Protocol::bbp);
    const std::size_t trials = cfg.trials_for(s.trials);
    const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(s.d) / s.c));
    const double c = static_cast<double>(s.d) / static_cast<double>(n);

    std::vector<double> spikes = s.spikes;
    std::sort(spikes.begin(), spikes.end(), std::greater<>());
    const std::size_t m = spikes.size();
    std::vector<double> predicted(m + 1);
    for (std::size_t i = 0; i < m; ++i) predicted[i] = bbp_map(spikes[i], s.nu2, c);
    predicted[m] = mp_bulk_edge(s.nu2, c);

    Eigen::VectorXd root_tau = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(s.d),
                                                         std::sqrt(s.nu2));
    for (std::size_t i = 0; i < m; ++i) root_tau(static_cast<Eigen::Index>(i)) = std::sqrt(spikes[i]);

    VerificationReport rep;
    rep.protocol = "bbp";
    rep.table.columns = {"trial", "index", "empirical", "predicted", "rel_dev"};
    rep.notes.push_back("index " + std::to_string(m + 1) +
                        " is the largest bulk eigenvalue, compared with the bulk edge");

    std::vector<double> mean_emp(m + 1, 0.0);
    const auto rows = static_cast<Eigen::Index>(s.d);
    const auto cols = static_cast<Eigen::Index>(n);
    for (std::size_t t = 0; t < trials; ++t) {
        RandomStream rng(seed, t);
        std::vector<double> z(s.d * n);
        rng.fill_normal(z);
        Eigen::Map<const RowMajorMatrix> zm(z.data(), rows, cols);
        const Eigen::MatrixXd x = root_tau.asDiagonal() * zm;
        Eigen::MatrixXd sample = Eigen::MatrixXd::Zero(rows, rows);
        sample.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / static_cast<double>(n));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sample, Eigen::EigenvaluesOnly);
        const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
        for (std::size_t i = 0; i <= m; ++i) {
            const double lam = ev(rows - 1 - static_cast<Eigen::Index>(i));
            mean_emp[i] += lam / static_cast<double>(trials);
            rep.table.add({static_cast<double>(t), static_cast<double>(i + 1), lam, predicted[i],
                           (lam - predicted[i]) / predicted[i]});
        }
    }

    bool ok = true;
    for (std::size_t i = 0; i < m; ++i) {
        const double dev = std::abs(mean_emp[i] - predicted[i]) / predicted[i];
        const std::string tag = "spike_" + std::to_string(i + 1);
        rep.set(tag + "_tau", spikes[i]);
        rep.set(tag + "_predicted", predicted[i]);
        rep.set(tag + "_mean_empirical", mean_emp[i]);
        rep.set(tag + "_rel_dev", dev);
        ok = ok && dev <= s.spike_tol;
    }
    const double edge_dev = std::abs(mean_emp[m] - predicted[m]) / predicted[m];
    rep.set("bulk_edge_predicted", predicted[m]);
    rep.set("bulk_max_mean_empirical", mean_emp[m]);
    rep.set("bulk_rel_dev", edge_dev);
    rep.set("c", c);
    rep.set("nu2", s.nu2);
    rep.set("spike_tol", s.spike_tol);
    rep.set("edge_tol", s.edge_tol);
    rep.pass = ok && edge_dev <= s.edge_tol;
    return rep;
}

VerificationReport run_bernstein_check(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& s = cfg.bernstein;
    const std::uint64_t seed = cfg.seed_for(Protocol::bernstein);
    const std::size_t trials = cfg.trials_for(s.trials);
    const std::size_t scale_trials = cfg.trials_for(s.scale_trials);

    struct Sample {
        double norm;
        double step;
        double max_step;
    };
    auto draw = [&](std::size_t n, std::uint64_t stream) {
        RandomStream rng(seed, stream);
        const DenseMatrix a = gaussian_matrix(n, n, 1.0, rng);
        const QuantResult q = quantize_blockwise(a, cfg.scheme);
        const DenseMatrix e = error_matrix(a, q.values);
        return Sample{spectral_norm(e), q.mean_step(), q.max_step()};
    };

    std::vector<double> norms;
    std::vector<double> consts;
    double step_max = 0.0;
    double scale_max = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Sample smp = draw(s.n, t);
        norms.push_back(smp.norm);
        step_max = std::max(step_max, smp.step);
        scale_max = std::max(scale_max, smp.max_step);
        if (smp.step > 0.0) {
            consts.push_back(smp.norm / (smp.step * std::sqrt(static_cast<double>(s.n))));
        }
    }
    std::vector<double> big;
    for (std::size_t t = 0; t < scale_trials; ++t) big.push_back(draw(s.scale_n, trials + t).norm);

    const TailBoundParams params{s.n, s.n, step_max * step_max / 12.0,
                                 max_error_for_scale(cfg.scheme, scale_max)};
    const double t_theta = invert_tail_bound(params, cfg.theta);
    const double lo = *std::min_element(norms.begin(), norms.end());
    const double hi = std::max(*std::max_element(norms.begin(), norms.end()), t_theta);

    VerificationReport rep;
    rep.protocol = "bernstein";
    rep.table.columns = {"t", "empirical_exceedance", "bound"};
    std::size_t violations = 0;
    auto exceed = [&](double t) {
        const auto hits = std::count_if(norms.begin(), norms.end(), [&](double v) { return v >= t; });
        return static_cast<double>(hits) / static_cast<double>(norms.size());
    };
    for (std::size_t g = 0; g < s.grid_points; ++g) {
        const double t = lo + (hi - lo) * static_cast<double>(g) /
                                  static_cast<double>(s.grid_points - 1);
        const double freq = exceed(t);
        const double bound = bernstein_tail_bound(params, t);
        if (freq > bound) ++violations;
        rep.table.add({t, freq, bound});
    }

    const double med = median(norms);
    const double med_big = median(big);
    const double expected = std::sqrt(static_cast<double>(s.scale_n) / static_cast<double>(s.n));
    bool scale_ok = true;
    if (med > 0.0) {
        const double ratio = med_big / med;
        rep.set("scale_ratio", ratio);
        scale_ok = ratio >= s.ratio_lo && ratio <= s.ratio_hi;
    } else {
        rep.set("scale_ratio", 0.0);
        rep.notes.push_back("error is identically zero; scaling check skipped");
    }
    rep.set("trials", static_cast<double>(trials));
    rep.set("n", static_cast<double>(s.n));
    rep.set("B", params.B);
    rep.set("R", params.R);
    rep.set("delta_sq", params.delta_sq());
    rep.set("median_norm", med);
    rep.set("scale_n", static_cast<double>(s.scale_n));
    rep.set("scale_median_norm", med_big);
    rep.set("expected_ratio", expected);
    rep.set("ratio_lo", s.ratio_lo);
    rep.set("ratio_hi", s.ratio_hi);
    rep.set("scaling_constant", consts.empty() ? 0.0 : median(consts));
    rep.set("t_theta", t_theta);
    rep.set("exceedance_at_t_theta", exceed(t_theta));
    rep.set("violations", static_cast<double>(violations));
    rep.pass = violations == 0 && scale_ok;
    return rep;
}

VerificationReport run_gradient_bound_check(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& s = cfg.gradbound;
    const std::uint64_t seed = cfg.seed_for(Protocol::gradbound);
    const std::size_t trials = cfg.trials_for(s.trials);

    VerificationReport rep;
    rep.protocol = "gradbound";
    rep.table.columns = {"trial", "k", "sigma_x", "sigma_grad", "bound", "resolved"};
    rep.notes.push_back(
        "indices where sigma_x is below the numerical rank tolerance max(d, N) * eps * sigma_1 "
        "are compared with that tolerance added to the bound");

    std::size_t violations = 0;
    std::size_t unresolved = 0;
    std::size_t decay_failures = 0;
    double max_ratio = 0.0;
    std::vector<double> decay_x;
    std::vector<double> decay_g;
    for (std::size_t t = 0; t < trials; ++t) {
        RandomStream rng(seed, t);
        ZipfEnsemble ens = cfg.ensemble;
        ens.seed = rng.next_u64();
        const DenseMatrix x = build_embedding_matrix(ens);
        const DenseMatrix g = synthetic_output_gradient(ens.N, s.p, s.M, rng);
        const DenseMatrix w = weight_gradient(x, g);
        const std::vector<double> sx = singular_values(x);
        const std::vector<double> sw = singular_values(w);
        const double tol = static_cast<double>(std::max(ens.d, ens.N)) * DBL_EPSILON * s.M * sx[0];
        const std::size_t count = std::min(sx.size(), sw.size());
        for (std::size_t k = 0; k < count; ++k) {
            const double bound = s.M * sx[k] * (1.0 + s.slack);
            const bool resolved = s.M * sx[k] > tol;
            const double limit = resolved ? bound : bound + tol;
            if (sw[k] > limit) ++violations;
            if (!resolved) ++unresolved;
            if (resolved) max_ratio = std::max(max_ratio, sw[k] / (s.M * sx[k]));
            rep.table.add({static_cast<double>(t), static_cast<double>(k + 1), sx[k], sw[k], bound,
                           resolved ? 1.0 : 0.0});
        }
        const IndexRange range = cfg.fit_range.value_or(default_fit_range(count));
        const PowerFit fx = fit_power_law(sx, range);
        const PowerFit fw = fit_power_law(sw, range);
        decay_x.push_back(fx.decay);
        decay_g.push_back(fw.decay);
        if (!(fw.decay >= fx.decay - s.decay_slack)) ++decay_failures;
    }
    rep.set("trials", static_cast<double>(trials));
    rep.set("violations", static_cast<double>(violations));
    rep.set("unresolved_indices", static_cast<double>(unresolved));
    rep.set("max_ratio", max_ratio);
    rep.set("median_decay_x", median(decay_x));
    rep.set("median_decay_grad", median(decay_g));
    rep.set("decay_failures", static_cast<double>(decay_failures));
    rep.set("decay_slack", s.decay_slack);
    rep.pass = violations == 0 && decay_failures == 0;
    return rep;
}

VerificationReport run_failure_profile(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& s = cfg.failprof;
    const std::uint64_t seed = cfg.seed_for(Protocol::failprof);
    const std::size_t trials = cfg.trials_for(s.trials);
    const std::size_t d = s.d;
    const std::size_t head = std::min(s.r, d);

    std::vector<int> levels = s.levels;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    const std::vector<double> sigma = power_law_spectrum(d, s.mu, s.alpha, s.r);
    std::vector<std::size_t> fails(d, 0);
    std::vector<std::vector<std::size_t>> level_fails(levels.size(), std::vector<std::size_t>(d, 0));
    std::vector<double> level_step(levels.size(), 0.0);
    double step_max = 0.0;
    double scale_max = 0.0;

    auto count_failures = [&](const DenseMatrix& a, const DenseMatrix& q,
                              std::vector<std::size_t>& out) {
        if (q == a) return;
        const std::vector<double> st = singular_values(q);
        for (std::size_t k = 0; k < d; ++k) {
            if (std::abs(st[k] - sigma[k]) / sigma[k] > cfg.eta) ++out[k];
        }
    };

    for (std::size_t t = 0; t < trials; ++t) {
        RandomStream rng(seed, t);
        const DenseMatrix a = prescribed_spectrum_matrix(d, d, sigma, rng);
        const QuantResult q = quantize_blockwise(a, cfg.scheme);
        step_max = std::max(step_max, q.mean_step());
        scale_max = std::max(scale_max, q.max_step());
        count_failures(a, q.values, fails);
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const QuantResult ql = quantize_blockwise(a, QuantScheme::int_levels_global(levels[i]));
            level_step[i] = std::max(level_step[i], ql.mean_step());
            count_failures(a, ql.values, level_fails[i]);
        }
    }

    const TailBoundParams params{d, d, step_max * step_max / 12.0,
                                 max_error_for_scale(cfg.scheme, scale_max)};
    std::vector<std::vector<double>> level_bound(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        level_bound[i] = failure_profile(
            FailureProfileInput{s.mu, s.alpha, s.r, cfg.eta, level_step[i] > 0.0 ? level_step[i] : 1.0,
                                d, d});
        if (level_step[i] == 0.0) std::fill(level_bound[i].begin(), level_bound[i].end(), 0.0);
    }

    VerificationReport rep;
    rep.protocol = "failprof";
    rep.table.columns = {"k", "sigma", "theta_hat", "bound", "eps_budget"};
    for (int L : levels) {
        rep.table.columns.push_back("theta_hat_L" + std::to_string(L));
        rep.table.columns.push_back("bound_L" + std::to_string(L));
    }

    const double n_trials = static_cast<double>(trials);
    std::size_t violations = 0;
    std::vector<double> theta_hat(d);
    for (std::size_t k = 0; k < d; ++k) {
        theta_hat[k] = static_cast<double>(fails[k]) / n_trials;
        const double bound = bernstein_tail_bound(params, cfg.eta * sigma[k]);
        if (theta_hat[k] > bound) ++violations;
        std::vector<double> row = {static_cast<double>(k + 1), sigma[k], theta_hat[k], bound,
                                   epsilon_budget(params, cfg.theta, sigma[k])};
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const double th = static_cast<double>(level_fails[i][k]) / n_trials;
            if (th > level_bound[i][k]) ++violations;
            row.push_back(th);
            row.push_back(level_bound[i][k]);
        }
        rep.table.add(std::move(row));
    }

    // Rank correlation of theta_hat with k over unsaturated head indices.
    std::vector<double> ks;
    std::vector<double> th;
    for (std::size_t k = 0; k < head; ++k) {
        if (theta_hat[k] > 0.0 && theta_hat[k] < 1.0) {
            ks.push_back(static_cast<double>(k + 1));
            th.push_back(theta_hat[k]);
        }
    }
    const double rho = spearman(ks, th);
    if (ks.size() < 2) rep.notes.push_back("fewer than two unsaturated head indices; rho set to 0");

    auto mean_over = [&](const std::vector<std::size_t>& f, std::size_t lo, std::size_t hi) {
        if (hi <= lo) return 0.0;
        double acc = 0.0;
        for (std::size_t k = lo; k < hi; ++k) acc += static_cast<double>(f[k]) / n_trials;
        return acc / static_cast<double>(hi - lo);
    };

    bool levels_ok = true;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const double h = mean_over(level_fails[i], 0, head);
        rep.set("head_rate_L" + std::to_string(levels[i]), h);
        rep.set("tail_rate_L" + std::to_string(levels[i]), mean_over(level_fails[i], head, d));
        // Strictly lower than the coarser level, unless both already never fail.
        const double coarser = i > 0 ? rep.statistic("head_rate_L" + std::to_string(levels[i - 1])) : 1.0;
        if (i > 0 && !(h < coarser || (h == 0.0 && coarser == 0.0))) levels_ok = false;
    }
    const double head_rate = mean_over(fails, 0, head);
    const double tail_rate = mean_over(fails, head, d);
    rep.set("trials", static_cast<double>(trials));
    rep.set("eta", cfg.eta);
    rep.set("head_rate", head_rate);
    rep.set("tail_rate", tail_rate);
    rep.set("spearman_head", rho);
    rep.set("unsaturated_head_indices", static_cast<double>(ks.size()));
    rep.set("bound_violations", static_cast<double>(violations));
    rep.set("levels_decreasing", levels_ok ? 1.0 : 0.0);
    rep.pass = violations == 0 && rho >= 0.0 && levels_ok;
    return rep;
}

VerificationReport run_protocol(Protocol p, const ExperimentConfig& cfg) {
    switch (p) {
        case Protocol::unbias: return run_unbiasedness(cfg);
        case Protocol::regress: return run_relative_error_regression(cfg);
        case Protocol::srank: return run_stable_rank_sweep(cfg);
        case Protocol::bbp: return run_bbp_check(cfg);
        case Protocol::bernstein: return run_bernstein_check(cfg);
        case Protocol::gradbound: return run_gradient_bound_check(cfg);
        case Protocol::failprof: return run_failure_profile(cfg);
    }
    throw ConfigError("unknown protocol");
}

std::vector<VerificationReport> run_suite(const ExperimentConfig& cfg,
                                          const std::vector<Protocol>& which) {
    cfg.validate();
    const std::set<Protocol> wanted(which.begin(), which.end());
    std::vector<VerificationReport> out;
    for (Protocol p : kAllProtocols) {
        if (!wanted.count(p)) continue;
        try {
            out.push_back(run_protocol(p, cfg));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            VerificationReport r;
            r.protocol = std::string(to_string(p));
            r.pass = false;
            r.notes.push_back(std::string("protocol aborted: ") + e.what());
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<VerificationReport> run_full_suite(const ExperimentConfig& cfg) {
    return run_suite(cfg, std::vector<Protocol>(kAllProtocols.begin(), kAllProtocols.end()));
}

std::vector<std::filesystem::path> write_report(const VerificationReport& r,
                                                const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto csv = dir / (r.protocol + ".csv");
    const auto summary = dir / (r.protocol + "_summary.json");
    write_file(csv, r.table.to_csv());
    write_file(summary, r.summary_json());
    return {csv, summary};
}

}  // namespace specfid
