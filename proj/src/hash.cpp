#include "cipherids/hash.hpp"

#include <fstream>
#include <sstream>

#include "cipherids/error.hpp"
#include "cipherids/rng.hpp"

namespace cipherids {

std::uint64_t hash_bytes(std::string_view bytes) { return fnv1a(bytes); }

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a(buf.str());
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

} // namespace cipherids
