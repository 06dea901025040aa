#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "specfid/errors.hpp"
#include "specfid/quant.hpp"
#include "specfid/rmt.hpp"
#include "specfid/spectral.hpp"
#include "specfid/synth.hpp"
#include "specfid/tensor_io.hpp"
#include "specfid/verify.hpp"

namespace py = pybind11;
using namespace specfid;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return DenseMatrix(rows, cols, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const DenseMatrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.entries().begin(), m.entries().end(), out.mutable_data());
    return out;
}

QuantScheme scheme_from(const py::object& scheme) {
    if (py::isinstance<py::str>(scheme)) return scheme_preset(scheme.cast<std::string>());
    const std::string text = py::module_::import("json").attr("dumps")(scheme).cast<std::string>();
    try {
        return nlohmann::json::parse(text).get<QuantScheme>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scheme: ") + e.what());
    }
}

ExperimentConfig config_from(const py::object& config) {
    if (config.is_none()) return ExperimentConfig{};
    if (py::isinstance<py::str>(config)) return parse_config(config.cast<std::string>());
    return parse_config(py::module_::import("json").attr("dumps")(config).cast<std::string>());
}

py::dict report_dict(const VerificationReport& r) {
    py::dict stats;
    for (const auto& [k, v] : r.statistics) stats[py::str(k)] = v;
    py::dict d;
    d["protocol"] = r.protocol;
    d["pass"] = r.pass;
    d["statistics"] = stats;
    d["columns"] = r.table.columns;
    d["csv"] = r.table.to_csv();
    d["notes"] = r.notes;
    return d;
}

}  // namespace

PYBIND11_MODULE(_specfid, m) {
    m.doc() = "Quantization spectral fidelity: SPQT I/O, quantizers, spectra, RMT predictions and "
              "verification protocols";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", base.ptr());
    auto format = py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<TruncationError>(m, "TruncationError", format.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<IndexError>(m, "IndexError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

    m.def("load_matrix", [](const std::filesystem::path& p) { return to_array(load_matrix(p)); },
          py::arg("path"), "Read an SPQT or CSV matrix.");
    m.def(
        "save_tensor",
        [](const Array& a, const std::filesystem::path& p, bool f32) {
            save_tensor(to_matrix(a), p, f32 ? Dtype::f32 : Dtype::f64);
        },
        py::arg("matrix"), py::arg("path"), py::arg("f32") = false);
    m.def("encode_tensor", [](const Array& a) { return py::bytes(encode_tensor(to_matrix(a))); },
          py::arg("matrix"));
    m.def("decode_tensor", [](const py::bytes& b) { return to_array(decode_tensor(std::string(b))); },
          py::arg("data"));

    m.def("zipf_probabilities", &zipf_probabilities, py::arg("V"), py::arg("alpha"));
    m.def(
        "embedding_matrix",
        [](std::size_t V, double alpha, std::size_t d, std::size_t N, std::uint64_t seed) {
            return to_array(build_embedding_matrix(ZipfEnsemble{V, alpha, d, N, seed}));
        },
        py::arg("V") = 1024, py::arg("alpha") = 1.5, py::arg("d") = 256, py::arg("N") = 2048,
        py::arg("seed") = 42, "Sampled Zipf embedding matrix X (d x N).");
    m.def("power_law_spectrum", &power_law_spectrum, py::arg("count"), py::arg("mu"), py::arg("alpha"),
          py::arg("head_rank"));
    m.def(
        "prescribed_spectrum_matrix",
        [](std::size_t rows, std::size_t cols, const std::vector<double>& sigma, std::uint64_t seed) {
            RandomStream rng(seed, 0);
            return to_array(prescribed_spectrum_matrix(rows, cols, sigma, rng));
        },
        py::arg("rows"), py::arg("cols"), py::arg("sigma"), py::arg("seed") = 42);

    m.def(
        "quantize",
        [](const Array& a, const py::object& scheme) {
            const DenseMatrix in = to_matrix(a);
            const QuantResult q = quantize_blockwise(in, scheme_from(scheme));
            py::dict d;
            d["values"] = to_array(q.values);
            d["error"] = to_array(error_matrix(in, q.values));
            d["scales"] = q.scales;
            d["mean_step"] = q.mean_step();
            d["degenerate"] = q.degenerate;
            return d;
        },
        py::arg("matrix"), py::arg("scheme") = "nvfp4",
        "Quantize with a preset name (int4, nvfp4, mxfp4) or a scheme dict.");
    m.def("quantize_scalar",
          [](double a, double s, bool half_away) {
              return quantize_scalar(a, s, half_away ? Rounding::half_away : Rounding::half_even);
          },
          py::arg("a"), py::arg("step"), py::arg("half_away") = false);
    m.def("e2m1_grid", [] {
        const auto g = e2m1_grid();
        return std::vector<double>(g.begin(), g.end());
    });
    m.def(
        "error_stats",
        [](const Array& e, double step) {
            const ErrorStats s = error_stats(to_matrix(e), step);
            py::dict d;
            d["mean"] = s.mean;
            d["variance"] = s.variance;
            d["min"] = s.min;
            d["max"] = s.max;
            d["count"] = s.count;
            d["step_used"] = s.step_used;
            return d;
        },
        py::arg("error"), py::arg("step"));

    m.def("singular_values", [](const Array& a) { return singular_values(to_matrix(a)); },
          py::arg("matrix"));
    m.def("spectral_norm", [](const Array& a) { return spectral_norm(to_matrix(a)); }, py::arg("matrix"));
    m.def("stable_rank", [](const std::vector<double>& s) { return stable_rank(s); }, py::arg("sigma"));
    m.def("energy_concentration",
          [](const std::vector<double>& s, std::size_t k) { return energy_concentration(s, k); },
          py::arg("sigma"), py::arg("k"));
    m.def(
        "fit_power_law",
        [](const std::vector<double>& s, std::size_t lo, std::size_t hi) {
            const PowerFit f = fit_power_law(s, IndexRange{lo, hi});
            py::dict d;
            d["mu"] = f.mu;
            d["decay"] = f.decay;
            d["r_squared"] = f.r_squared;
            d["degenerate"] = f.degenerate;
            return d;
        },
        py::arg("sigma"), py::arg("lo"), py::arg("hi"));
    m.def("weyl_gap",
          [](const std::vector<double>& a, const std::vector<double>& b) { return weyl_gap(a, b); },
          py::arg("sigma"), py::arg("sigma_tilde"));

    m.def("noise_level",
          [](double L, double alpha, std::size_t r, std::size_t d) {
              return noise_level(SpikedModel{L, alpha, r, d, 1.0});
          },
          py::arg("L_scale"), py::arg("alpha"), py::arg("r"), py::arg("d"));
    m.def("mp_bulk_edge", &mp_bulk_edge, py::arg("nu2"), py::arg("c"));
    m.def("bbp_map", &bbp_map, py::arg("tau"), py::arg("nu2"), py::arg("c"));
    m.def("bbp_threshold", &bbp_threshold, py::arg("nu2"), py::arg("c"));
    m.def("stieltjes_discrete",
          [](const std::vector<double>& e, Complex z) { return stieltjes_discrete(e, z); },
          py::arg("eigs"), py::arg("z"));
    m.def("stieltjes_white", &stieltjes_white, py::arg("nu2"), py::arg("z"));
    m.def("stieltjes_gap",
          [](double L, double alpha, std::size_t r, std::size_t d, Complex z) {
              return stieltjes_gap(SpikedModel{L, alpha, r, d, 1.0}, z);
          },
          py::arg("L_scale"), py::arg("alpha"), py::arg("r"), py::arg("d"), py::arg("z"));
    m.def("bernstein_tail_bound",
          [](std::size_t rows, std::size_t cols, double B, double R, double t) {
              return bernstein_tail_bound(TailBoundParams{rows, cols, B, R}, t);
          },
          py::arg("m"), py::arg("n"), py::arg("B"), py::arg("R"), py::arg("t"));
    m.def("invert_tail_bound",
          [](std::size_t rows, std::size_t cols, double B, double R, double theta) {
              return invert_tail_bound(TailBoundParams{rows, cols, B, R}, theta);
          },
          py::arg("m"), py::arg("n"), py::arg("B"), py::arg("R"), py::arg("theta"));
    m.def("failure_profile",
          [](double mu, double alpha, std::size_t r, double eta, double step, std::size_t rows,
             std::size_t cols) {
              return failure_profile(FailureProfileInput{mu, alpha, r, eta, step, rows, cols});
          },
          py::arg("mu"), py::arg("alpha"), py::arg("r"), py::arg("eta"), py::arg("step"), py::arg("m"),
          py::arg("n"));

    m.def("default_config", [] { return nlohmann::json(ExperimentConfig{}).dump(); },
          "Default experiment config as a JSON string.");
    m.def(
        "run_protocol",
        [](const std::string& name, const py::object& config) {
            const Protocol p = protocol_from_string(name);
            const ExperimentConfig cfg = config_from(config);
            VerificationReport r;
            {
                py::gil_scoped_release release;
                r = run_protocol(p, cfg);
            }
            return report_dict(r);
        },
        py::arg("name"), py::arg("config") = py::none(),
        "Run one protocol; config is None, a JSON string or a dict.");
    m.def(
        "run_full_suite",
        [](const py::object& config) {
            const ExperimentConfig cfg = config_from(config);
            std::vector<VerificationReport> reports;
            {
                py::gil_scoped_release release;
                reports = run_full_suite(cfg);
            }
            py::list out;
            for (const auto& r : reports) out.append(report_dict(r));
            return out;
        },
        py::arg("config") = py::none());
}
