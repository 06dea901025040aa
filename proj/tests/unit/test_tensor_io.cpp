#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include "specfid/cli.hpp"
#include "specfid/errors.hpp"
#include "specfid/random.hpp"
#include "specfid/tensor_io.hpp"

using namespace specfid;
namespace fs = std::filesystem;

namespace {

fs::path fixture(const char* name) { return fs::path(SPECFID_FIXTURE_DIR) / name; }

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "specfid_unit_io";
    fs::create_directories(dir);
    return dir / name;
}

std::string header(std::uint8_t version, std::uint8_t dtype, std::uint8_t ndim, std::uint64_t rows,
                   std::uint64_t cols) {
    std::string h = "SPQT";
    h += static_cast<char>(version);
    h += static_cast<char>(dtype);
    h += static_cast<char>(ndim);
    h += '\0';
    for (std::uint64_t v : {rows, cols}) {
        for (int b = 0; b < 8; ++b) h += static_cast<char>((v >> (8 * b)) & 0xff);
    }
    return h;
}

std::string le_f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    std::string s;
    for (int b = 0; b < 8; ++b) s += static_cast<char>((bits >> (8 * b)) & 0xff);
    return s;
}

}  // namespace

TEST_CASE("golden f64 fixture parses bit-exactly") {
    const fs::path path = fixture("golden_f64_2x3.spqt");
    CHECK(sha256_hex(read_file(path)) ==
          "e8390cdb3739917ec5875b65c279505002877eb04fdeaf39016e2438f58e0c58");
    const DenseMatrix m = load_tensor(path);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 3);
    const double expect[] = {1.5, -2.25, 0.0, 1e-300, std::numbers::pi, 12345.678};
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(std::bit_cast<std::uint64_t>(m.entries()[i]) == std::bit_cast<std::uint64_t>(expect[i]));
    }
    CHECK(encode_tensor(m) == read_file(path));
}

TEST_CASE("golden f32 fixture widens exactly") {
    const fs::path path = fixture("golden_f32_3x1.spqt");
    CHECK(sha256_hex(read_file(path)) ==
          "2029f49c684c9f265440f1f92e4e18a9b1008c0553cc241359692ac0b2a60ce0");
    const DenseMatrix m = load_tensor(path);
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 1);
    CHECK(m(0, 0) == 0.5);
    CHECK(m(1, 0) == -1.0);
    CHECK(m(2, 0) == 3.25);
    CHECK(encode_tensor(m, Dtype::f32) == read_file(path));
}

TEST_CASE("a 1x1 f64 file is 32 bytes with the documented header") {
    const DenseMatrix m(1, 1, {2.0});
    const std::string bytes = encode_tensor(m);
    CHECK(bytes.size() == 32);
    CHECK(bytes == header(1, 0, 2, 1, 1) + le_f64(2.0));
}

TEST_CASE("save then load is the identity for f64") {
    RandomStream rng(5, 0);
    for (std::size_t rows : {1u, 3u, 17u}) {
        for (std::size_t cols : {1u, 4u, 9u}) {
            std::vector<double> v(rows * cols);
            rng.fill_normal(v);
            v[0] = -0.0;
            v.back() = 1e-310;  // subnormal
            const DenseMatrix m(rows, cols, v);
            const fs::path p = scratch("rt_" + std::to_string(rows) + "x" + std::to_string(cols));
            save_tensor(m, p);
            const DenseMatrix back = load_tensor(p);
            CHECK(std::memcmp(back.entries().data(), m.entries().data(), 8 * m.size()) == 0);
            CHECK(back.rows() == rows);
        }
    }
}

TEST_CASE("f32 storage narrows then widens") {
    const DenseMatrix m(1, 2, {0.1, 3.0});
    const DenseMatrix back = decode_tensor(encode_tensor(m, Dtype::f32));
    CHECK(back(0, 0) == static_cast<double>(0.1f));
    CHECK(back(0, 1) == 3.0);
}

TEST_CASE("malformed SPQT headers are rejected") {
    const std::string ok = header(1, 0, 2, 1, 1) + le_f64(1.0);
    CHECK_THROWS_AS(decode_tensor("SPQX" + ok.substr(4)), FormatError);
    CHECK_THROWS_AS(decode_tensor(header(2, 0, 2, 1, 1) + le_f64(1.0)), FormatError);
    CHECK_THROWS_AS(decode_tensor(header(1, 7, 2, 1, 1) + le_f64(1.0)), FormatError);
    CHECK_THROWS_AS(decode_tensor(header(1, 0, 3, 1, 1) + le_f64(1.0)), FormatError);
    CHECK_THROWS_AS(decode_tensor(ok.substr(0, 10)), TruncationError);
    CHECK_THROWS_AS(decode_tensor(ok.substr(0, 31)), TruncationError);
    CHECK_THROWS_AS(decode_tensor(ok + "x"), TruncationError);
    CHECK_THROWS_AS(decode_tensor(header(1, 0, 2, 1, 1) + le_f64(std::nan(""))), DataError);
    CHECK_THROWS_AS(decode_tensor(header(1, 0, 2, 0, 1)), FormatError);
    CHECK_THROWS_AS(load_tensor(scratch("does_not_exist.spqt")), IoError);
}

TEST_CASE("CSV header detection and parsing") {
    const DenseMatrix a = parse_csv("x,y\n1,2\n3,4\n");
    CHECK(a.rows() == 2);
    CHECK(a(1, 0) == 3.0);
    const DenseMatrix b = parse_csv("1,2\n3,4");
    CHECK(b.rows() == 2);
    CHECK(b(1, 1) == 4.0);
    CHECK_THROWS_AS(parse_csv("1,2\n3\n"), FormatError);
    CHECK_THROWS_AS(parse_csv("1,2\n3,abc\n"), DataError);
}

TEST_CASE("CSV output round-trips doubles exactly") {
    RandomStream rng(6, 0);
    std::vector<double> v(12);
    rng.fill_normal(v);
    const DenseMatrix m(3, 4, v);
    const DenseMatrix back = parse_csv(format_csv(m));
    CHECK(back == m);
}

TEST_CASE("load_matrix dispatches on the magic bytes") {
    const DenseMatrix m(2, 2, {1.0, 2.0, 3.0, 4.0});
    const fs::path bin = scratch("sniff.bin");
    const fs::path txt = scratch("sniff.txt");
    save_tensor(m, bin);
    save_csv(m, txt);
    CHECK(load_matrix(bin) == m);
    CHECK(load_matrix(txt) == m);
}
