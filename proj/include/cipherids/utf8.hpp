#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cipherids::utf8 {

// Strict UTF-8 validation: rejects overlongs, surrogates, > U+10FFFF.
bool is_valid(std::string_view bytes);

// Appends the UTF-8 encoding of a code point. cp must be a scalar value.
void append_codepoint(std::string& out, std::uint32_t cp);

std::string encode_codepoint(std::uint32_t cp);

// Decodes one code point starting at offset `pos`; advances `pos` past it.
// Returns false on invalid input (pos unchanged).
bool next_codepoint(std::string_view bytes, std::size_t& pos, std::uint32_t& cp);

} // namespace cipherids::utf8
