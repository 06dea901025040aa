#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "specfid/matrix.hpp"

namespace specfid {

/// Payload element type of an SPQT file.
enum class Dtype : std::uint8_t { f64 = 0x00, f32 = 0x01 };

// SPQT layout, all multi-byte fields little-endian:
//   offset 0   "SPQT"            magic
//   offset 4   0x01              version
//   offset 5   dtype byte        0x00 = f64, 0x01 = f32
//   offset 6   0x02              ndim
//   offset 7   0x00              pad
//   offset 8   u64 rows
//   offset 16  u64 cols
//   offset 24  row-major payload
inline constexpr std::size_t kSpqtHeaderBytes = 24;

/// Writes `m` as SPQT. With Dtype::f32 the entries are narrowed to float.
void save_tensor(const DenseMatrix& m, const std::filesystem::path& path,
                 Dtype dtype = Dtype::f64);

/// Reads an SPQT file; f32 payloads are widened to double.
/// Throws FormatError (magic/version/dtype/ndim), TruncationError (size does
/// not match the declared dims), DataError (non-finite payload), IoError.
DenseMatrix load_tensor(const std::filesystem::path& path);

/// In-memory variants used by load_tensor/save_tensor and the tests.
std::string encode_tensor(const DenseMatrix& m, Dtype dtype = Dtype::f64);
DenseMatrix decode_tensor(std::string_view bytes);

/// Rectangular numeric CSV. A first row containing any non-numeric cell is
/// treated as a header and skipped. Ragged rows raise FormatError; a bad cell
/// raises DataError naming its 1-based row and column.
DenseMatrix parse_csv(std::string_view text);
DenseMatrix load_csv(const std::filesystem::path& path);

/// 17 significant digits, comma separated, '\n' row terminator, no header.
std::string format_csv(const DenseMatrix& m);
void save_csv(const DenseMatrix& m, const std::filesystem::path& path);

/// Loads SPQT or CSV, chosen by sniffing the magic bytes.
DenseMatrix load_matrix(const std::filesystem::path& path);

// Whole-file helpers shared with the report writers.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace specfid
