#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace snps3::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitMissingFile = 2;
inline constexpr int kExitFormat = 3;
inline constexpr int kExitConsistency = 4;

/// --seed if given, else $SNPS3_SEED, else 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag);

/// Runs one invocation. args[0] is the program name. Errors go to `err` as a
/// single JSON line; artifacts written to stdout go to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace snps3::cli
