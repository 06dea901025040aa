#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace specfid {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime error or failed verification
inline constexpr int kExitUsage = 2;    // bad flags or invalid configuration

/// Entry point of the specfid tool. argv[0] is the program name.
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Lower-case hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

std::string_view tool_version();

}  // namespace specfid
