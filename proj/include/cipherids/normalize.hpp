#pragma once

#include <functional>
#include <string>

namespace cipherids {

// Normalization config. Lemmatizer/stemmer are plugin slots defaulting to
// identity: cipher words are not natural language, so linguistic reduction
// is a no-op unless a caller installs one.
struct NormalizationConfig {
    bool lowercase = true;
    bool strip_punctuation = true;
    std::function<std::string(const std::string&)> lemmatize; // identity when empty
    std::function<std::string(const std::string&)> stem;      // identity when empty
};

// Lowercases (ASCII fold), applies the punctuation table (dash-family code
// points become spaces, other listed punctuation/symbol code points are
// deleted), preserves whitespace as single spaces with runs collapsed and
// ends trimmed, then runs the plugins. Input must be valid UTF-8.
std::string normalize(const std::string& text, const NormalizationConfig& cfg);

// The punctuation table, exposed for enumeration in tests and docs.
enum class PunctAction { keep, to_space, remove };
PunctAction classify_codepoint(std::uint32_t cp);

} // namespace cipherids
