#include "specfid/tensor_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "specfid/errors.hpp"

namespace specfid {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'Q', 'T'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint8_t kNdim = 0x02;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    }
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

bool parse_real(std::string_view cell, double& out) {
    cell = trim(cell);
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

}  // namespace

std::string encode_tensor(const DenseMatrix& m, Dtype dtype) {
    const std::size_t width = dtype == Dtype::f64 ? 8 : 4;
    std::string out;
    out.reserve(kSpqtHeaderBytes + m.size() * width);
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));
    out.push_back(static_cast<char>(dtype));
    out.push_back(static_cast<char>(kNdim));
    out.push_back('\0');
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    for (double v : m.entries()) {
        if (dtype == Dtype::f64) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        } else {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
        }
    }
    return out;
}

DenseMatrix decode_tensor(std::string_view bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("bad magic: not an SPQT file");
    }
    if (static_cast<std::uint8_t>(bytes[4]) != kVersion) {
        throw FormatError("unsupported SPQT version " +
                          std::to_string(static_cast<unsigned char>(bytes[4])));
    }
    const auto dtype_byte = static_cast<std::uint8_t>(bytes[5]);
    if (dtype_byte != static_cast<std::uint8_t>(Dtype::f64) &&
        dtype_byte != static_cast<std::uint8_t>(Dtype::f32)) {
        throw FormatError("unknown SPQT dtype " + std::to_string(dtype_byte));
    }
    if (static_cast<std::uint8_t>(bytes[6]) != kNdim) {
        throw FormatError("SPQT ndim must be 2");
    }
    if (bytes.size() < kSpqtHeaderBytes) {
        throw TruncationError("SPQT header truncated");
    }
    const std::uint64_t rows = get_u64(bytes, 8);
    const std::uint64_t cols = get_u64(bytes, 16);
    if (rows == 0 || cols == 0) {
        throw FormatError("SPQT dims must be positive");
    }
    const std::size_t width = dtype_byte == 0x00 ? 8 : 4;
    const std::uint64_t count = rows * cols;
    if (count / rows != cols || count > (UINT64_MAX - kSpqtHeaderBytes) / width) {
        throw TruncationError("SPQT dims overflow");
    }
    const std::uint64_t expected = kSpqtHeaderBytes + count * width;
    if (bytes.size() != expected) {
        throw TruncationError("SPQT declares " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " (" + std::to_string(expected) +
                              " bytes) but has " + std::to_string(bytes.size()) + " bytes");
    }
    std::vector<double> entries(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t off = kSpqtHeaderBytes + i * width;
        if (width == 8) {
            entries[i] = std::bit_cast<double>(get_u64(bytes, off));
        } else {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + b]))
                        << (8 * b);
            }
            entries[i] = static_cast<double>(std::bit_cast<float>(bits));
        }
        if (!std::isfinite(entries[i])) {
            throw DataError("non-finite payload value at element " + std::to_string(i));
        }
    }
    return DenseMatrix(rows, cols, std::move(entries));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

void save_tensor(const DenseMatrix& m, const std::filesystem::path& path, Dtype dtype) {
    write_file(path, encode_tensor(m, dtype));
}

DenseMatrix load_tensor(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    try {
        return decode_tensor(bytes);
    } catch (const TruncationError& e) {
        throw TruncationError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

DenseMatrix parse_csv(std::string_view text) {
    std::vector<std::string_view> lines = split(text, '\n');
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw FormatError("empty CSV");

    std::size_t first = 0;
    {
        double dummy = 0.0;
        for (auto cell : split(lines[0], ',')) {
            if (!parse_real(cell, dummy)) {
                first = 1;
                break;
            }
        }
    }
    if (first >= lines.size()) throw FormatError("CSV has a header but no data rows");

    const std::size_t cols = split(lines[first], ',').size();
    std::vector<double> entries;
    entries.reserve((lines.size() - first) * cols);
    for (std::size_t r = first; r < lines.size(); ++r) {
        const auto cells = split(lines[r], ',');
        if (cells.size() != cols) {
            throw FormatError("ragged CSV: row " + std::to_string(r + 1) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(cols));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            if (!parse_real(cells[c], v) || !std::isfinite(v)) {
                throw DataError("cannot parse CSV cell at row " + std::to_string(r + 1) +
                                ", column " + std::to_string(c + 1) + ": '" +
                                std::string(trim(cells[c])) + "'");
            }
            entries.push_back(v);
        }
    }
    return DenseMatrix(lines.size() - first, cols, std::move(entries));
}

DenseMatrix load_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    try {
        return parse_csv(text);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string format_csv(const DenseMatrix& m) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j > 0) out.push_back(',');
            const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j),
                                           std::chars_format::general, 17);
            out.append(buf, res.ptr);
        }
        out.push_back('\n');
    }
    return out;
}

void save_csv(const DenseMatrix& m, const std::filesystem::path& path) {
    write_file(path, format_csv(m));
}

DenseMatrix load_matrix(const std::filesystem::path& path) {
    char head[4] = {};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path.string());
        in.read(head, 4);
    }
    if (std::memcmp(head, kMagic, 4) == 0) return load_tensor(path);
    return load_csv(path);
}

}  // namespace specfid
