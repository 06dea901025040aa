#include "specfid/cli.hpp"

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "specfid/errors.hpp"
#include "specfid/format.hpp"
#include "specfid/quant.hpp"
#include "specfid/spectral.hpp"
#include "specfid/synth.hpp"
#include "specfid/tensor_io.hpp"
#include "specfid/verify.hpp"

#ifndef SPECFID_VERSION
#define SPECFID_VERSION "0.0.0"
#endif

namespace specfid {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view tool_version() { return SPECFID_VERSION; }

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
    return os.str();
}

namespace {

std::string shell_quote(const std::string& arg) {
    if (!arg.empty() && arg.find_first_of(" \t\n'\"\\$`*?;&|<>()") == std::string::npos) return arg;
    std::string out = "'";
    for (char c : arg) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

std::string command_line(const std::vector<std::string>& argv) {
    std::string out;
    for (std::size_t i = 0; i < argv.size(); ++i) {
        if (i) out += ' ';
        out += shell_quote(argv[i]);
    }
    return out;
}

bool is_csv(const fs::path& p) { return p.extension() == ".csv"; }

void save_matrix(const DenseMatrix& m, const fs::path& p) {
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
    if (is_csv(p)) {
        save_csv(m, p);
    } else {
        save_tensor(m, p);
    }
}

void write_text(const fs::path& p, std::string_view text) {
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
    write_file(p, text);
}

/// Writes the manifest and returns its path.
fs::path write_manifest(const fs::path& where, const std::vector<std::string>& argv,
                        const nlohmann::json& resolved, std::uint64_t seed,
                        const std::vector<fs::path>& outputs) {
    ojson m;
    m["cmd"] = command_line(argv);
    m["config_sha256"] = sha256_hex(resolved.dump());
    m["version"] = tool_version();
    m["seed"] = seed;
    ojson outs = ojson::array();
    for (const auto& p : outputs) outs.push_back(p.generic_string());
    m["outputs"] = outs;
    write_text(where, m.dump(2) + "\n");
    return where;
}

fs::path manifest_for(const fs::path& primary) {
    fs::path p = primary;
    p += ".manifest.json";
    return p;
}

ojson stats_line(const ErrorStats& st) {
    ojson j;
    j["mean"] = st.mean;
    j["variance"] = st.variance;
    j["min"] = st.min;
    j["max"] = st.max;
    j["count"] = st.count;
    j["step_used"] = st.step_used;
    return j;
}

struct SynthArgs {
    std::size_t V = 1024;
    double alpha = 1.5;
    std::size_t d = 256;
    std::size_t N = 2048;
    std::uint64_t seed = 42;
    std::string out;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    ZipfEnsemble ens{a.V, a.alpha, a.d, a.N, a.seed};
    try {
        ens.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string(e.what()) +
                          "; token frequencies k^-alpha need alpha > 1 to stay normalisable");
    }
    const DenseMatrix x = build_embedding_matrix(ens);
    const fs::path path = a.out;
    save_matrix(x, path);
    nlohmann::json resolved = {{"command", "synth"}, {"ensemble", ens}, {"out", path.generic_string()}};
    write_manifest(manifest_for(path), argv, resolved, a.seed, {path});
    ojson info;
    info["rows"] = x.rows();
    info["cols"] = x.cols();
    info["out"] = path.generic_string();
    out << info.dump() << "\n";
    return kExitOk;
}

struct QuantArgs {
    std::string in;
    std::string scheme;
    std::optional<std::size_t> block;
    std::optional<double> levels;
    std::string out;
    std::string err_out;
};

int cmd_quantize(const QuantArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const QuantScheme scheme = scheme_preset(a.scheme, a.block, a.levels);
    const DenseMatrix m = load_matrix(a.in);
    const QuantResult q = quantize_blockwise(m, scheme);
    const DenseMatrix e = error_matrix(m, q.values);
    const ErrorStats st = error_stats(e, q.mean_step());

    std::vector<fs::path> outputs;
    if (!a.out.empty()) {
        save_matrix(q.values, a.out);
        outputs.emplace_back(a.out);
    }
    if (!a.err_out.empty()) {
        save_matrix(e, a.err_out);
        outputs.emplace_back(a.err_out);
    }
    if (!outputs.empty()) {
        nlohmann::json resolved = {{"command", "quantize"},
                                   {"in", fs::path(a.in).generic_string()},
                                   {"input_sha256", sha256_hex(encode_tensor(m))},
                                   {"scheme", scheme}};
        write_manifest(manifest_for(outputs.front()), argv, resolved, 0, outputs);
    }
    ojson line = stats_line(st);
    line["scheme"] = a.scheme;
    line["degenerate"] = q.degenerate;
    out << line.dump() << "\n";
    return kExitOk;
}

struct SpectrumArgs {
    std::string in;
    std::string csv;
    std::string json;
    std::optional<std::size_t> fit_lo;
    std::optional<std::size_t> fit_hi;
};

int cmd_spectrum(const SpectrumArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    if (a.fit_lo.has_value() != a.fit_hi.has_value()) {
        throw ConfigError("--fit-lo and --fit-hi must be given together");
    }
    std::optional<IndexRange> fit;
    if (a.fit_lo) fit = IndexRange{*a.fit_lo, *a.fit_hi};
    const DenseMatrix m = load_matrix(a.in);
    SpectralSummary s;
    try {
        s = summarize(m, fit);
    } catch (const DomainError& e) {
        if (fit) throw ConfigError(std::string("fit range: ") + e.what());
        throw;
    } catch (const IndexError& e) {
        throw ConfigError(std::string("fit range: ") + e.what());
    }
    const std::string summary = spectrum_json(s);
    std::vector<fs::path> outputs;
    if (!a.csv.empty()) {
        write_text(a.csv, spectrum_csv(s));
        outputs.emplace_back(a.csv);
    }
    if (!a.json.empty()) {
        write_text(a.json, summary);
        outputs.emplace_back(a.json);
    }
    if (!outputs.empty()) {
        nlohmann::json resolved = {{"command", "spectrum"},
                                   {"in", fs::path(a.in).generic_string()},
                                   {"input_sha256", sha256_hex(encode_tensor(m))},
                                   {"fit", fit ? nlohmann::json{fit->lo, fit->hi} : nlohmann::json()}};
        write_manifest(manifest_for(outputs.front()), argv, resolved, 0, outputs);
    }
    out << summary;
    return kExitOk;
}

struct VerifyArgs {
    std::string config;
    std::string protocol = "all";
    std::string report_dir;
};

int cmd_verify(const VerifyArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
    cfg.validate();
    std::vector<Protocol> which;
    if (a.protocol == "all") {
        which.assign(kAllProtocols.begin(), kAllProtocols.end());
    } else {
        which.push_back(protocol_from_string(a.protocol));
    }
    const std::vector<VerificationReport> reports = run_suite(cfg, which);
    const fs::path dir = a.report_dir;
    std::vector<fs::path> outputs;
    bool all_pass = true;
    for (const auto& r : reports) {
        for (auto& p : write_report(r, dir)) outputs.push_back(std::move(p));
        all_pass = all_pass && r.pass;
        out << r.protocol << ": " << (r.pass ? "PASS" : "FAIL") << "\n";
    }
    nlohmann::json resolved = cfg;
    resolved["protocol"] = a.protocol;
    write_manifest(dir / "manifest.json", argv, resolved, cfg.seed, outputs);
    return all_pass ? kExitOk : kExitFailure;
}

struct CompareArgs {
    std::string a;
    std::string b;
    std::string csv;
};

int cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const DenseMatrix ma = load_matrix(a.a);
    const DenseMatrix mb = load_matrix(a.b);
    if (ma.rows() != mb.rows() || ma.cols() != mb.cols()) {
        throw ShapeError("compare: shapes differ (" + std::to_string(ma.rows()) + "x" +
                         std::to_string(ma.cols()) + " vs " + std::to_string(mb.rows()) + "x" +
                         std::to_string(mb.cols()) + ")");
    }
    const std::vector<double> sa = singular_values(ma);
    const std::vector<double> sb = singular_values(mb);
    const double gap = weyl_gap(sa, sb);
    const double err_norm = singular_values(subtract(mb, ma)).front();
    // Both sides carry SVD rounding of order eps * sigma_1.
    const double tol = 64.0 * std::numeric_limits<double>::epsilon() *
                       std::max(sa.front(), sb.front());

    if (!a.csv.empty()) {
        std::string csv = "k,sigma_a,sigma_b,ratio_b_over_a,rel_err\n";
        for (std::size_t k = 0; k < sa.size(); ++k) {
            const double ratio = sa[k] > 0.0 ? sb[k] / sa[k] : std::numeric_limits<double>::quiet_NaN();
            const double rel = sa[k] > 0.0 ? std::abs(sb[k] - sa[k]) / sa[k]
                                           : std::numeric_limits<double>::quiet_NaN();
            csv += std::to_string(k + 1) + "," + format_real(sa[k]) + "," + format_real(sb[k]) + "," +
                   format_real(ratio) + "," + format_real(rel) + "\n";
        }
        write_text(a.csv, csv);
        nlohmann::json resolved = {{"command", "compare"},
                                   {"a", fs::path(a.a).generic_string()},
                                   {"b", fs::path(a.b).generic_string()},
                                   {"a_sha256", sha256_hex(encode_tensor(ma))},
                                   {"b_sha256", sha256_hex(encode_tensor(mb))}};
        write_manifest(manifest_for(a.csv), argv, resolved, 0, {fs::path(a.csv)});
    }
    ojson j;
    j["stable_rank_a"] = sa.front() > 0.0 ? stable_rank(sa) : 0.0;
    j["stable_rank_b"] = sb.front() > 0.0 ? stable_rank(sb) : 0.0;
    j["weyl_gap"] = gap;
    j["error_spectral_norm"] = err_norm;
    j["weyl_holds"] = gap <= err_norm + tol;
    out << j.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spectral fidelity of low-bit quantization: synthetic data, quantizers, "
                 "spectra and verification protocols",
                 "specfid"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", std::string(tool_version()));

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Sample a Zipf embedding matrix X (d x N)");
    synth->add_option("--v", sa.V, "vocabulary size")->capture_default_str();
    synth->add_option("--alpha", sa.alpha, "Zipf exponent, > 1")->capture_default_str();
    synth->add_option("--d", sa.d, "embedding dimension")->capture_default_str();
    synth->add_option("--n", sa.N, "number of sampled tokens")->capture_default_str();
    synth->add_option("--seed", sa.seed, "random seed")->capture_default_str();
    synth->add_option("--out", sa.out, "output path (.csv for CSV, otherwise SPQT)")->required();

    QuantArgs qa;
    auto* quant = app.add_subcommand("quantize", "Quantize a matrix with a preset scheme");
    quant->add_option("--in", qa.in, "input matrix (SPQT or CSV)")->required();
    quant->add_option("--scheme", qa.scheme, "int4 | nvfp4 | mxfp4 | step")->required();
    quant->add_option("--block", qa.block, "block size override");
    quant->add_option("--l", qa.levels, "levels L (int4) or the step size (step)");
    quant->add_option("--out", qa.out, "quantized matrix output");
    quant->add_option("--err-out", qa.err_out, "error matrix output");

    SpectrumArgs pa;
    auto* spec = app.add_subcommand("spectrum", "Singular values, stable rank and power-law fit");
    spec->add_option("--in", pa.in, "input matrix (SPQT or CSV)")->required();
    spec->add_option("--csv", pa.csv, "write k,sigma,cum_energy_frac here");
    spec->add_option("--json", pa.json, "also write the summary JSON here");
    spec->add_option("--fit-lo", pa.fit_lo, "first index of the power-law fit (1-based)");
    spec->add_option("--fit-hi", pa.fit_hi, "last index of the power-law fit (inclusive)");

    VerifyArgs va;
    auto* ver = app.add_subcommand("verify", "Run verification protocols");
    ver->add_option("--config", va.config, "experiment config JSON (defaults when omitted)");
    ver->add_option("--protocol", va.protocol,
                    "all | unbias | regress | srank | bbp | bernstein | gradbound | failprof")
        ->capture_default_str();
    ver->add_option("--report-dir", va.report_dir, "directory for CSV and summary JSON")->required();

    CompareArgs ca;
    auto* cmp = app.add_subcommand("compare", "Compare the spectra of two equally shaped matrices");
    cmp->add_option("--a", ca.a, "reference matrix")->required();
    cmp->add_option("--b", ca.b, "perturbed matrix")->required();
    cmp->add_option("--csv", ca.csv, "write k,sigma_a,sigma_b,ratio_b_over_a,rel_err here");

    std::vector<const char*> cargv;
    cargv.reserve(argv.size());
    for (const auto& s : argv) cargv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(sa, argv, out);
        if (quant->parsed()) return cmd_quantize(qa, argv, out);
        if (spec->parsed()) return cmd_spectrum(pa, argv, out);
        if (ver->parsed()) return cmd_verify(va, argv, out);
        if (cmp->parsed()) return cmd_compare(ca, argv, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace specfid
