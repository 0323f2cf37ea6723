#include "cipherids/utf8.hpp"

namespace cipherids::utf8 {

bool next_codepoint(std::string_view bytes, std::size_t& pos, std::uint32_t& cp) {
    if (pos >= bytes.size()) return false;
    const unsigned char b0 = static_cast<unsigned char>(bytes[pos]);
    std::size_t len;
    std::uint32_t value;
    if (b0 < 0x80) {
        len = 1;
        value = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        value = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        value = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        value = b0 & 0x07;
    } else {
        return false;
    }
    if (pos + len > bytes.size()) return false;
    for (std::size_t i = 1; i < len; ++i) {
        const unsigned char b = static_cast<unsigned char>(bytes[pos + i]);
        if ((b & 0xC0) != 0x80) return false;
        value = (value << 6) | (b & 0x3F);
    }
    // Overlong / surrogate / out-of-range checks.
    if (len == 2 && value < 0x80) return false;
    if (len == 3 && value < 0x800) return false;
    if (len == 4 && value < 0x10000) return false;
    if (value >= 0xD800 && value <= 0xDFFF) return false;
    if (value > 0x10FFFF) return false;
    pos += len;
    cp = value;
    return true;
}

bool is_valid(std::string_view bytes) {
    std::size_t pos = 0;
    std::uint32_t cp;
    while (pos < bytes.size()) {
        if (!next_codepoint(bytes, pos, cp)) return false;
    }
    return true;
}

void append_codepoint(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode_codepoint(std::uint32_t cp) {
    std::string s;
    append_codepoint(s, cp);
    return s;
}

} // namespace cipherids::utf8
