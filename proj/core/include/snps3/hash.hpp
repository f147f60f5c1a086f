#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace snps3 {

/// Hex SHA-256 digest prefixed with "sha256:".
std::string content_hash(std::string_view bytes);
std::string content_hash(std::span<const std::byte> bytes);

/// Stable 64-bit seed for one record: the first eight digest bytes of
/// SHA-256(little-endian global seed || record id).
std::uint64_t record_seed(std::uint64_t global_seed, std::string_view record_id);

}  // namespace snps3
