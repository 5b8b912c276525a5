#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace adaptsde {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitRuntime = 3 };

/// Environment variable consulted for the default master seed.
inline constexpr const char* kSeedEnv = "ADAPTSDE_SEED";

/// Decimal or 0x-prefixed hexadecimal 64-bit seed. Throws InvalidArgument.
std::uint64_t parse_seed(std::string_view text);
/// `name` or `name:key=value,...`.
std::pair<std::string, std::map<std::string, double>> parse_model_arg(std::string_view text);
/// Comma-separated numbers.
std::vector<double> parse_number_list(std::string_view text);
/// Flat `key = value` lines; '#' starts a comment. Throws InvalidArgument on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text);

/// Full command line entry point. Summaries go to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace adaptsde
