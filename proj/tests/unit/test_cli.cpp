#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "specfid/cli.hpp"
#include "specfid/errors.hpp"
#include "specfid/spectral.hpp"
#include "specfid/tensor_io.hpp"

using namespace specfid;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "specfid");
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    [[nodiscard]] std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

}  // namespace

TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("usage errors exit with 2") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({"synth"}).code == kExitUsage);
    CHECK(cli({"synth", "--out", "x.spqt", "--bogus", "1"}).code == kExitUsage);
    CHECK(cli({"synth", "--out", "x.spqt", "--d", "many"}).code == kExitUsage);
    const Run v = cli({"--version"});
    CHECK(v.code == kExitOk);
    CHECK(v.out.find(std::string(tool_version())) != std::string::npos);
}

TEST_CASE("synth writes X and a manifest; same flags give identical files") {
    TempDir dir("specfid_cli_synth");
    const std::vector<std::string> flags = {"--v", "256", "--alpha", "1.5", "--d", "512",
                                            "--n", "4096", "--seed", "7"};
    auto args = flags;
    args.insert(args.begin(), "synth");
    auto first = args;
    first.insert(first.end(), {"--out", dir / "x1.spqt"});
    auto second = args;
    second.insert(second.end(), {"--out", dir / "x2.spqt"});
    REQUIRE(cli(first).code == kExitOk);
    REQUIRE(cli(second).code == kExitOk);
    const DenseMatrix x = load_tensor(dir / "x1.spqt");
    CHECK(x.rows() == 512);
    CHECK(x.cols() == 4096);
    CHECK(slurp(dir / "x1.spqt") == slurp(dir / "x2.spqt"));

    const auto m = nlohmann::json::parse(slurp(dir / "x1.spqt.manifest.json"));
    CHECK(m.at("seed") == 7);
    CHECK(m.at("version") == std::string(tool_version()));
    CHECK(m.at("config_sha256").get<std::string>().size() == 64);
    CHECK(m.at("outputs") == nlohmann::json::array({fs::path(dir / "x1.spqt").generic_string()}));
    CHECK(m.at("cmd").get<std::string>().find("synth") != std::string::npos);
    const auto m2 = nlohmann::json::parse(slurp(dir / "x2.spqt.manifest.json"));
    CHECK(m.at("config_sha256") != m2.at("config_sha256"));  // the output path is part of the config
}

TEST_CASE("synth rejects alpha <= 1 with exit 2") {
    TempDir dir("specfid_cli_alpha");
    const Run r = cli({"synth", "--alpha", "1.0", "--out", dir / "x.spqt"});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("alpha") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "x.spqt"));
}

TEST_CASE("synth to CSV") {
    TempDir dir("specfid_cli_csv");
    REQUIRE(cli({"synth", "--v", "4", "--d", "3", "--n", "5", "--out", dir / "x.csv"}).code == kExitOk);
    const DenseMatrix x = load_matrix(dir / "x.csv");
    CHECK(x.rows() == 3);
    CHECK(x.cols() == 5);
}

TEST_CASE("quantize prints stats and writes outputs") {
    TempDir dir("specfid_cli_quant");
    spit(dir / "a.csv", "7,-3.5\n0,1\n");
    const Run r = cli({"quantize", "--in", dir / "a.csv", "--scheme", "int4", "--out", dir / "q.csv",
                       "--err-out", dir / "e.csv"});
    REQUIRE(r.code == kExitOk);
    CHECK(load_matrix(dir / "q.csv") == DenseMatrix(2, 2, {7, -4, 0, 1}));
    CHECK(load_matrix(dir / "e.csv") == DenseMatrix(2, 2, {0, -0.5, 0, 0}));
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("count") == 4);
    CHECK(j.at("step_used") == 1.0);
    CHECK(j.at("min") == -0.5);
    CHECK(j.at("scheme") == "int4");
    const auto m = nlohmann::json::parse(slurp(dir / "q.csv.manifest.json"));
    CHECK(m.at("outputs").size() == 2);
}

TEST_CASE("quantize all-zero input is a no-op") {
    TempDir dir("specfid_cli_zero");
    spit(dir / "z.csv", "0,0,0\n0,0,0\n");
    const Run r = cli({"quantize", "--in", dir / "z.csv", "--scheme", "nvfp4", "--out", dir / "q.spqt"});
    REQUIRE(r.code == kExitOk);
    CHECK(load_matrix(dir / "q.spqt").all_zero());
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("mean") == 0.0);
    CHECK(j.at("variance") == 0.0);
    CHECK(j.at("degenerate") == true);
}

TEST_CASE("quantize errors") {
    TempDir dir("specfid_cli_qerr");
    spit(dir / "a.csv", "1,2\n");
    CHECK(cli({"quantize", "--in", dir / "a.csv", "--scheme", "fp8"}).code == kExitUsage);
    CHECK(cli({"quantize", "--in", dir / "a.csv", "--scheme", "step"}).code == kExitUsage);
    CHECK(cli({"quantize", "--in", dir / "missing.csv", "--scheme", "int4"}).code == kExitFailure);
    spit(dir / "bad.csv", "1,2\n3\n");
    CHECK(cli({"quantize", "--in", dir / "bad.csv", "--scheme", "int4"}).code == kExitFailure);
    CHECK(cli({"quantize", "--in", dir / "a.csv", "--scheme", "step", "--l", "0.5"}).code == kExitOk);
}

TEST_CASE("spectrum of diag(3,1) and the identity") {
    TempDir dir("specfid_cli_spec");
    spit(dir / "d.csv", "3,0\n0,1\n");
    REQUIRE(cli({"spectrum", "--in", dir / "d.csv", "--csv", dir / "s1.csv"}).code == kExitOk);
    REQUIRE(cli({"spectrum", "--in", dir / "d.csv", "--csv", dir / "s2.csv"}).code == kExitOk);
    CHECK(slurp(dir / "s1.csv") == "k,sigma,cum_energy_frac\n1,3,0.9\n2,1,1\n");
    CHECK(slurp(dir / "s1.csv") == slurp(dir / "s2.csv"));
    CHECK(fs::exists(dir / "s1.csv.manifest.json"));

    save_tensor(DenseMatrix::identity(4), dir / "i.spqt");
    const Run r = cli({"spectrum", "--in", dir / "i.spqt", "--json", dir / "i.json"});
    REQUIRE(r.code == kExitOk);
    CHECK(nlohmann::json::parse(r.out).at("stable_rank").get<double>() == doctest::Approx(4.0));
    CHECK(nlohmann::json::parse(slurp(dir / "i.json")) == nlohmann::json::parse(r.out));

    CHECK(cli({"spectrum", "--in", dir / "nothing.spqt"}).code == kExitFailure);
    CHECK(cli({"spectrum", "--in", dir / "i.spqt", "--fit-lo", "1"}).code == kExitUsage);
    CHECK(cli({"spectrum", "--in", dir / "i.spqt", "--fit-lo", "1", "--fit-hi", "9"}).code == kExitUsage);
}

TEST_CASE("compare identical and quantized inputs") {
    TempDir dir("specfid_cli_cmp");
    REQUIRE(cli({"synth", "--v", "300", "--d", "64", "--n", "256", "--out", dir / "x.spqt"}).code == kExitOk);
    REQUIRE(cli({"quantize", "--in", dir / "x.spqt", "--scheme", "nvfp4", "--out", dir / "q.spqt"}).code ==
            kExitOk);

    const Run same = cli({"compare", "--a", dir / "x.spqt", "--b", dir / "x.spqt", "--csv", dir / "same.csv"});
    REQUIRE(same.code == kExitOk);
    std::istringstream rows(slurp(dir / "same.csv"));
    std::string line;
    std::getline(rows, line);
    CHECK(line == "k,sigma_a,sigma_b,ratio_b_over_a,rel_err");
    while (std::getline(rows, line)) {
        // Rank-deficient X has exact zero singular values; their ratio is undefined.
        const bool zero = line.find(",0,0,nan,nan") != std::string::npos;
        CHECK((zero || line.substr(line.size() - 4) == ",1,0"));
    }
    const auto js = nlohmann::json::parse(same.out);
    CHECK(js.at("weyl_gap") == 0.0);
    CHECK(js.at("weyl_holds") == true);

    const Run q = cli({"compare", "--a", dir / "x.spqt", "--b", dir / "q.spqt"});
    REQUIRE(q.code == kExitOk);
    const auto jq = nlohmann::json::parse(q.out);
    CHECK(jq.at("weyl_holds") == true);
    CHECK(jq.at("weyl_gap").get<double>() <= jq.at("error_spectral_norm").get<double>() * (1 + 1e-12));

    save_tensor(DenseMatrix::identity(3), dir / "i3.spqt");
    CHECK(cli({"compare", "--a", dir / "x.spqt", "--b", dir / "i3.spqt"}).code == kExitFailure);
}

TEST_CASE("verify: config errors exit 2, reports and manifest on success") {
    TempDir dir("specfid_cli_verify");
    spit(dir / "bad.json", "{ not json");
    CHECK(cli({"verify", "--config", dir / "bad.json", "--report-dir", dir / "r"}).code == kExitUsage);
    spit(dir / "unknown.json", R"({"colour": 1})");
    CHECK(cli({"verify", "--config", dir / "unknown.json", "--report-dir", dir / "r"}).code == kExitUsage);
    CHECK(cli({"verify", "--protocol", "nope", "--report-dir", dir / "r"}).code == kExitUsage);
    spit(dir / "sub.json", R"({"protocols": {"bbp": {"spikes": [1.2]}}})");
    CHECK(cli({"verify", "--config", dir / "sub.json", "--protocol", "bbp", "--report-dir", dir / "r"}).code ==
          kExitUsage);

    spit(dir / "small.json", R"({
      "ensemble": {"V": 300, "alpha": 1.5, "d": 32, "N": 128, "seed": 42},
      "protocols": {
        "unbias": {"trials": 3, "rows": 64, "cols": 64},
        "regress": {"trials": 2, "d": 64, "alphas": [1.5]},
        "srank": {"trials": 4, "d": 48, "N": 48},
        "bbp": {"trials": 2, "d": 100},
        "bernstein": {"trials": 30, "n": 32, "scale_n": 128, "scale_trials": 5},
        "gradbound": {"trials": 2, "p": 32},
        "failprof": {"trials": 4, "d": 48, "r": 8}
      }})");
    const Run all = cli({"verify", "--config", dir / "small.json", "--report-dir", dir / "all"});
    CHECK((all.code == kExitOk || all.code == kExitFailure));
    std::size_t csvs = 0;
    std::size_t summaries = 0;
    for (const auto& e : fs::directory_iterator(dir.path / "all")) {
        const std::string name = e.path().filename().string();
        if (name.ends_with("_summary.json")) ++summaries;
        else if (name.ends_with(".csv")) ++csvs;
    }
    CHECK(csvs == 7);
    CHECK(summaries == 7);
    const auto m = nlohmann::json::parse(slurp(dir.path / "all" / "manifest.json"));
    CHECK(m.at("outputs").size() == 14);
    CHECK(m.at("seed") == 42);
    bool any_fail = false;
    for (const auto& e : fs::directory_iterator(dir.path / "all")) {
        if (e.path().filename().string().ends_with("_summary.json")) {
            any_fail = any_fail || !nlohmann::json::parse(slurp(e.path())).at("pass").get<bool>();
        }
    }
    CHECK(all.code == (any_fail ? kExitFailure : kExitOk));

    const Run again = cli({"verify", "--config", dir / "small.json", "--report-dir", dir / "again"});
    CHECK(again.code == all.code);
    for (const auto& e : fs::directory_iterator(dir.path / "all")) {
        const auto name = e.path().filename();
        if (name == "manifest.json") continue;
        CHECK(slurp(e.path()) == slurp(dir.path / "again" / name));
    }
}

TEST_CASE("verify: forced failure exits 1") {
    TempDir dir("specfid_cli_vfail");
    spit(dir / "fail.json",
         R"({"protocols": {"unbias": {"trials": 2, "rows": 32, "cols": 32, "var_lo": 10, "var_hi": 11}}})");
    const Run r = cli({"verify", "--config", dir / "fail.json", "--protocol", "unbias", "--report-dir", dir / "r"});
    CHECK(r.code == kExitFailure);
    CHECK(r.out.find("unbias: FAIL") != std::string::npos);
}

TEST_CASE("verify: stable-rank protocol with the default config") {
    TempDir dir("specfid_cli_srank");
    const Run r = cli({"verify", "--protocol", "srank", "--report-dir", dir / "r"});
    CHECK(r.code == kExitOk);
    const auto s = nlohmann::json::parse(slurp(dir.path / "r" / "srank_summary.json"));
    CHECK(s.at("statistics").at("increase_rate").get<double>() >= 0.95);
}
