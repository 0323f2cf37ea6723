#include "cipherids/normalize.hpp"

#include <cstdint>

#include "cipherids/error.hpp"
#include "cipherids/utf8.hpp"

namespace cipherids {

// Punctuation table. Dash-family separators map to a space so that dashed
// compounds stay distinct words; every other listed punctuation or symbol
// code point is deleted outright. Covered ranges:
//   ASCII punctuation/symbols   0x21-0x2F, 0x3A-0x40, 0x5B-0x60, 0x7B-0x7E
//   Latin-1 punctuation/symbols U+00A1-U+00BF, U+00D7, U+00F7
//   General punctuation         U+2000-U+206F (dashes U+2010-U+2015 to space)
//   Currency symbols            U+20A0-U+20CF
//   Minus sign                  U+2212 (to space)
// Whitespace (ASCII space/tab/CR/LF/FF/VT, U+00A0, U+2000-U+200A, U+2028,
// U+2029, U+202F, U+205F, U+3000) collapses to single spaces.
PunctAction classify_codepoint(std::uint32_t cp) {
    // whitespace first: some of these sit inside punctuation ranges
    if (cp == 0x20 || (cp >= 0x09 && cp <= 0x0D) || cp == 0xA0 ||
        (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F ||
        cp == 0x205F || cp == 0x3000)
        return PunctAction::to_space;

    if (cp == '-' || (cp >= 0x2010 && cp <= 0x2015) || cp == 0x2212)
        return PunctAction::to_space;

    if ((cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
        (cp >= 0x7B && cp <= 0x7E))
        return PunctAction::remove;
    if ((cp >= 0xA1 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7) return PunctAction::remove;
    if (cp >= 0x2000 && cp <= 0x206F) return PunctAction::remove;
    if (cp >= 0x20A0 && cp <= 0x20CF) return PunctAction::remove;

    return PunctAction::keep;
}

std::string normalize(const std::string& text, const NormalizationConfig& cfg) {
    if (!utf8::is_valid(text)) throw Error(Errc::invalid_utf8, "normalize input is not UTF-8");

    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    std::size_t pos = 0;
    std::uint32_t cp = 0;
    while (utf8::next_codepoint(text, pos, cp)) {
        PunctAction action = PunctAction::keep;
        if (cfg.strip_punctuation) {
            action = classify_codepoint(cp);
        } else if (cp == 0x20 || (cp >= 0x09 && cp <= 0x0D)) {
            action = PunctAction::to_space;
        }
        switch (action) {
        case PunctAction::to_space:
            pending_space = true;
            break;
        case PunctAction::remove:
            break;
        case PunctAction::keep: {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            std::uint32_t folded = cp;
            if (cfg.lowercase && cp >= 'A' && cp <= 'Z') folded = cp + 32; // ASCII fold
            utf8::append_codepoint(out, folded);
            break;
        }
        }
    }

    if (cfg.lemmatize) out = cfg.lemmatize(out);
    if (cfg.stem) out = cfg.stem(out);
    return out;
}

} // namespace cipherids
