#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace forge {

// FNV-1a over bytes followed by a splitmix64 finalizer. Stable across
// platforms and releases; used wherever a seed is derived from content.
std::uint64_t stable_hash64(std::string_view bytes);

// Per-record seed: hash of (master seed, record id, purpose tag).
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view record_id,
                          std::string_view purpose);

std::uint64_t mix64(std::uint64_t x);

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::string& path);

}  // namespace forge
