#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cipherids {

// FNV-1a 64 over raw bytes.
std::uint64_t hash_bytes(std::string_view bytes);

// FNV-1a 64 over a file's contents. Throws Error(io_error) if unreadable.
std::uint64_t hash_file(const std::string& path);

// Fixed-width lowercase hex rendering of a 64-bit hash.
std::string hash_hex(std::uint64_t h);

} // namespace cipherids
