#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace gnio::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `gnio` tool; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Applies `key.path=value` to j. The value is read as JSON when it parses,
/// otherwise as a string. Numeric path components index arrays.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace gnio::cli
