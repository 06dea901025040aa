#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "specfid/errors.hpp"
#include "specfid/verify.hpp"

using namespace specfid;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.ensemble = ZipfEnsemble{300, 1.5, 32, 128, 42};
    cfg.unbias.trials = 4;
    cfg.unbias.rows = 64;
    cfg.unbias.cols = 64;
    cfg.regress.trials = 3;
    cfg.regress.d = 64;
    cfg.regress.alphas = {1.5};
    cfg.srank.trials = 6;
    cfg.srank.d = 48;
    cfg.srank.N = 48;
    cfg.bbp.trials = 2;
    cfg.bbp.d = 100;
    cfg.bernstein.trials = 30;
    cfg.bernstein.n = 32;
    cfg.bernstein.scale_n = 128;
    cfg.bernstein.scale_trials = 5;
    cfg.gradbound.trials = 2;
    cfg.gradbound.p = 32;
    cfg.failprof.trials = 6;
    cfg.failprof.d = 48;
    cfg.failprof.r = 8;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("median, spearman and ols on hand data") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK_THROWS_AS(median({}), DomainError);

    CHECK(spearman({1, 2, 3, 4}, {10, 20, 25, 100}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    // Ranks y = (1.5, 1.5, 3); Pearson of (1,2,3) with them is sqrt(3)/2.
    CHECK(spearman({1, 2, 3}, {5, 5, 7}) == doctest::Approx(std::sqrt(3.0) / 2));
    CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
    CHECK(spearman({1}, {2}) == 0.0);

    const LinearFit f = ols({0, 1, 2, 3}, {1, 3, 5, 7});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r_squared == doctest::Approx(1.0));
    // y = (0, 1, 0, 1): slope 0.2, intercept 0.2, r^2 = 0.2.
    const LinearFit g = ols({0, 1, 2, 3}, {0, 1, 0, 1});
    CHECK(g.slope == doctest::Approx(0.2));
    CHECK(g.intercept == doctest::Approx(0.2));
    CHECK(g.r_squared == doctest::Approx(0.2));
    CHECK_THROWS_AS(ols({1, 1}, {1, 2}), DomainError);
    CHECK_THROWS_AS(ols({1}, {1}), DomainError);
}

TEST_CASE("protocol names") {
    for (Protocol p : kAllProtocols) CHECK(protocol_from_string(to_string(p)) == p);
    CHECK(to_string(Protocol::bbp) == "bbp");
    CHECK_THROWS_AS(protocol_from_string("nope"), ConfigError);
}

TEST_CASE("config defaults, seeds and JSON") {
    const ExperimentConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.seed_for(Protocol::unbias) == 42);
    CHECK(cfg.seed_for(Protocol::failprof) == 48);
    CHECK(cfg.trials_for(7) == 7);

    nlohmann::json j = small_config();
    const ExperimentConfig back = parse_config(j.dump());
    CHECK(nlohmann::json(back) == j);

    const ExperimentConfig preset = parse_config(R"({"scheme": "mxfp4", "trials": 3, "fit_range": [1, 5]})");
    CHECK(preset.scheme == QuantScheme::mxfp4());
    CHECK(preset.trials_for(100) == 3);
    REQUIRE(preset.fit_range.has_value());
    CHECK(preset.fit_range->hi == 5);

    const ExperimentConfig nulls = parse_config(R"({"trials": null, "fit_range": null})");
    CHECK_FALSE(nulls.trials.has_value());
    CHECK_FALSE(nulls.fit_range.has_value());

    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config("[]"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"sed": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"protocols": {"bbp": {"dd": 3}}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"eta": "big"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"trials": 0})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"eta": 0})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"theta": 1.0})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"fit_range": [2, 3]})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"ensemble": {"alpha": 1.0}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"scheme": "fp8"})"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("unbiasedness: zero input passes with exact zero means") {
    ExperimentConfig cfg = small_config();
    cfg.unbias.input_scale = 0.0;
    const VerificationReport r = run_unbiasedness(cfg);
    CHECK(r.pass);
    CHECK(r.statistic("max_abs_mean") == 0.0);
    CHECK(r.statistic("pooled_variance") == 0.0);
    for (const auto& row : r.table.rows) CHECK(row[1] == 0.0);
}

TEST_CASE("unbiasedness on Gaussian input") {
    const VerificationReport r = run_unbiasedness(small_config());
    CHECK(r.pass);
    CHECK(r.table.rows.size() == 4);
    CHECK(r.statistic("mean_violations") == 0.0);
}

TEST_CASE("regression: identity scheme is skipped and passes with a flag") {
    ExperimentConfig cfg = small_config();
    cfg.scheme = QuantScheme::none();
    const VerificationReport r = run_relative_error_regression(cfg);
    CHECK(r.pass);
    CHECK(r.statistic("zero_error_trials") == 3.0);
    for (const auto& row : r.table.rows) CHECK(row[6] == 0.0);
    CHECK(!r.notes.empty());
}

TEST_CASE("regression: all singular values under the noise floor is a config error") {
    ExperimentConfig cfg = small_config();
    cfg.scheme = QuantScheme::uniform(100.0);
    CHECK_THROWS_AS(run_relative_error_regression(cfg), ConfigError);
}

TEST_CASE("regression reports fit statistics") {
    const VerificationReport r = run_relative_error_regression(small_config());
    CHECK(r.has("median_r2_alpha_1.5"));
    CHECK(r.has("median_intercept_alpha_1.5"));
    CHECK(r.table.rows.size() == 3 * 64);
}

TEST_CASE("stable rank: identity control excludes every trial") {
    ExperimentConfig cfg = small_config();
    cfg.scheme = QuantScheme::none();
    const VerificationReport r = run_stable_rank_sweep(cfg);
    CHECK(r.pass);
    CHECK(r.statistic("included_trials") == 0.0);
    for (const auto& row : r.table.rows) {
        CHECK(row[2] == row[3]);
        CHECK(row[7] == 1.0);
    }
}

TEST_CASE("stable rank grows under int4 quantization") {
    ExperimentConfig cfg = small_config();
    cfg.scheme = QuantScheme::int4();
    const VerificationReport r = run_stable_rank_sweep(cfg);
    CHECK(r.statistic("included_trials") == 6.0);
    for (const auto& row : r.table.rows) {
        CHECK(row[1] >= 1.2);
        CHECK(row[1] <= 3.0);
    }
    CHECK(r.pass);
}

TEST_CASE("bbp: sub-critical spike is rejected") {
    ExperimentConfig cfg = small_config();
    cfg.bbp.spikes = {1.5};
    CHECK_THROWS_AS(run_bbp_check(cfg), ConfigError);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("bbp: small aspect ratio puts the outlier at the population value") {
    ExperimentConfig cfg = small_config();
    cfg.bbp.d = 200;
    cfg.bbp.c = 0.01;
    cfg.bbp.trials = 2;
    const VerificationReport r = run_bbp_check(cfg);
    CHECK(std::abs(r.statistic("spike_1_mean_empirical") - 10.0) / 10.0 <= 0.02);
}

TEST_CASE("bbp: without spikes the bulk maximum tracks the edge") {
    ExperimentConfig cfg = small_config();
    cfg.bbp.spikes = {};
    cfg.bbp.d = 300;
    cfg.bbp.trials = 3;
    const VerificationReport r = run_bbp_check(cfg);
    CHECK(r.statistic("bulk_rel_dev") <= 0.10);
    CHECK(r.statistic("bulk_edge_predicted") == doctest::Approx(std::pow(1.0 + std::sqrt(0.5), 2)));
    CHECK(r.pass);
}

TEST_CASE("bernstein: never violated, and halving the step halves the norm") {
    ExperimentConfig cfg = small_config();
    cfg.scheme = QuantScheme::uniform(0.1);
    const VerificationReport coarse = run_bernstein_check(cfg);
    cfg.scheme = QuantScheme::uniform(0.05);
    const VerificationReport fine = run_bernstein_check(cfg);
    CHECK(coarse.statistic("violations") == 0.0);
    CHECK(fine.statistic("violations") == 0.0);
    const double ratio = coarse.statistic("median_norm") / fine.statistic("median_norm");
    CHECK(std::abs(ratio - 2.0) <= 0.15 * 2.0);
    CHECK(coarse.table.rows.size() == 10);
    for (const auto& row : coarse.table.rows) CHECK(row[1] <= row[2]);
}

TEST_CASE("gradient bound: doubling M doubles the bound exactly") {
    ExperimentConfig cfg = small_config();
    const VerificationReport one = run_gradient_bound_check(cfg);
    cfg.gradbound.M = 2.0;
    const VerificationReport two = run_gradient_bound_check(cfg);
    CHECK(one.statistic("violations") == 0.0);
    CHECK(two.statistic("violations") == 0.0);
    REQUIRE(one.table.rows.size() == two.table.rows.size());
    for (std::size_t i = 0; i < one.table.rows.size(); ++i) {
        CHECK(two.table.rows[i][4] == 2.0 * one.table.rows[i][4]);
        CHECK(two.table.rows[i][3] == doctest::Approx(2.0 * one.table.rows[i][3]).epsilon(1e-10).scale(1e-12));
    }
}

TEST_CASE("failure profile: a huge tolerance never fails") {
    ExperimentConfig cfg = small_config();
    cfg.eta = 1e3;
    const VerificationReport r = run_failure_profile(cfg);
    CHECK(r.pass);
    for (const auto& row : r.table.rows) CHECK(row[2] == 0.0);
    CHECK(r.statistic("head_rate") == 0.0);
}

TEST_CASE("failure profile reports every level") {
    const VerificationReport r = run_failure_profile(small_config());
    for (const char* k : {"head_rate_L3", "head_rate_L7", "head_rate_L15", "spearman_head", "bound_violations"}) {
        CHECK(r.has(k));
    }
    CHECK(r.statistic("bound_violations") == 0.0);
    CHECK(r.table.columns.size() == 11);
    CHECK(r.table.rows.size() == 48);
}

TEST_CASE("suite order, determinism and isolation") {
    ExperimentConfig cfg = small_config();
    const auto a = run_full_suite(cfg);
    const auto b = run_full_suite(cfg);
    REQUIRE(a.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(a[i].protocol == to_string(kAllProtocols[i]));
        CHECK(a[i].table.to_csv() == b[i].table.to_csv());
        CHECK(a[i].summary_json() == b[i].summary_json());
    }

    cfg.seed = 43;
    CHECK(run_protocol(Protocol::unbias, cfg).table.to_csv() != a[0].table.to_csv());

    cfg = small_config();
    cfg.unbias.var_lo = 10.0;
    cfg.unbias.var_hi = 11.0;
    const auto c = run_suite(cfg, {Protocol::srank, Protocol::unbias});
    REQUIRE(c.size() == 2);
    CHECK(c[0].protocol == "unbias");
    CHECK_FALSE(c[0].pass);
    CHECK(c[1].protocol == "srank");
    CHECK(c[1].table.to_csv() == a[2].table.to_csv());
}

TEST_CASE("a protocol's output depends only on its own settings") {
    ExperimentConfig cfg = small_config();
    const std::string before = run_protocol(Protocol::srank, cfg).table.to_csv();
    cfg.unbias.trials = 9;
    cfg.bbp.d = 120;
    CHECK(run_protocol(Protocol::srank, cfg).table.to_csv() == before);
}

TEST_CASE("reports are written as CSV plus summary JSON") {
    const fs::path dir = fs::temp_directory_path() / "specfid_verify_report_test";
    fs::remove_all(dir);
    const VerificationReport r = run_unbiasedness(small_config());
    const auto paths = write_report(r, dir);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].filename() == "unbias.csv");
    CHECK(paths[1].filename() == "unbias_summary.json");
    CHECK(slurp(paths[0]) == r.table.to_csv());
    const auto j = nlohmann::json::parse(slurp(paths[1]));
    CHECK(j.at("protocol") == "unbias");
    CHECK(j.at("pass").get<bool>() == r.pass);
    CHECK(j.at("statistics").contains("pooled_variance_ratio"));
    fs::remove_all(dir);
}

TEST_CASE("table rows must match the header") {
    Table t;
    t.columns = {"a", "b"};
    t.add({1.0, 0.5});
    CHECK_THROWS_AS(t.add({1.0}), ShapeError);
    CHECK(t.to_csv() == "a,b\n1,0.5\n");
    VerificationReport r;
    CHECK_THROWS_AS((void)r.statistic("x"), IndexError);
}
