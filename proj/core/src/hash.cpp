#include "snps3/hash.hpp"

#include <openssl/evp.h>

#include <array>

#include "snps3/errors.hpp"

namespace snps3 {
namespace {

std::array<unsigned char, 32> sha256(const void* data, std::size_t size) {
    std::array<unsigned char, 32> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != digest.size()) {
        throw Error("SHA-256 digest failed");
    }
    return digest;
}

std::string to_hex(const std::array<unsigned char, 32>& digest) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out = "sha256:";
    out.reserve(7 + 64);
    for (unsigned char b : digest) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xF]);
    }
    return out;
}

}  // namespace

std::string content_hash(std::string_view bytes) { return to_hex(sha256(bytes.data(), bytes.size())); }

std::string content_hash(std::span<const std::byte> bytes) { return to_hex(sha256(bytes.data(), bytes.size())); }

std::uint64_t record_seed(std::uint64_t global_seed, std::string_view record_id) {
    std::string buf(8, '\0');
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((global_seed >> (8 * i)) & 0xFF);
    buf.append(record_id);
    const auto digest = sha256(buf.data(), buf.size());
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i) seed |= static_cast<std::uint64_t>(digest[i]) << (8 * i);
    return seed;
}

}  // namespace snps3
