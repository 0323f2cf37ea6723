#pragma once

#include <string>
#include <vector>

#include "cipherids/schema.hpp"

namespace cipherids {

// Symmetric shift-key pair over the 26-letter alphabet. The scheme is a
// per-digit substitution C = (p + k) mod 26; it obfuscates, it does not
// provide cryptographic security.
struct ShiftKeyPair {
    int public_shift = 0;
    int private_shift = 0;
};

// One record rendered as cipher words, one word per schema column. Words are
// nonempty, even-length, lowercase a-z.
struct CipherSentence {
    std::vector<std::string> words;

    std::string joined() const;
    static CipherSentence from_line(const std::string& line);
};

// k in [0, 26); k = 0 is accepted but degenerate (identity cipher).
ShiftKeyPair keygen(int k);

// C = (p + k) mod 26 for p in [0, 26). k may be any integer.
int shift_digit(int p, int k);

// Each UTF-8 byte b of each canonical value expands to the digit pair
// (b / 26, b % 26); digits are shifted with the public key and rendered as
// letters. One word per column, schema order.
CipherSentence encrypt_record(const FeatureRecord& record, const ShiftKeyPair& key);

// Exact inverse of encrypt_record. The schema supplies the expected word
// count. Throws OddLengthWord / NonLetterSymbol / CorruptCipher /
// InvalidUtf8 on tampered input.
FeatureRecord decrypt_sentence(const CipherSentence& sentence, const ShiftKeyPair& key,
                               const FeatureSchema& schema);

// Key file: JSON with scheme "eq1-shift26", both shifts, and a format version.
void save_key(const ShiftKeyPair& key, const std::string& path);
ShiftKeyPair load_key(const std::string& path);

} // namespace cipherids
