#include "cipherids/cipher.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cipherids/error.hpp"
#include "cipherids/utf8.hpp"

namespace cipherids {

namespace {
constexpr int kAlphabet = 26;
constexpr int kKeyFileVersion = 1;
} // namespace

std::string CipherSentence::joined() const {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

CipherSentence CipherSentence::from_line(const std::string& line) {
    CipherSentence s;
    std::string word;
    for (char c : line) {
        if (c == ' ') {
            if (!word.empty()) s.words.push_back(std::move(word));
            word.clear();
        } else {
            word.push_back(c);
        }
    }
    if (!word.empty()) s.words.push_back(std::move(word));
    return s;
}

ShiftKeyPair keygen(int k) {
    if (k < 0 || k >= kAlphabet)
        throw Error(Errc::key_out_of_range, "k must be in [0, 26), got " + std::to_string(k));
    if (k == 0) std::cerr << "[cipherids] warning: degenerate key k=0 (identity cipher)\n";
    return ShiftKeyPair{k, (kAlphabet - k) % kAlphabet};
}

int shift_digit(int p, int k) {
    if (p < 0 || p >= kAlphabet)
        throw Error(Errc::digit_out_of_range, "digit must be in [0, 26), got " + std::to_string(p));
    int r = (p + k) % kAlphabet;
    if (r < 0) r += kAlphabet;
    return r;
}

CipherSentence encrypt_record(const FeatureRecord& record, const ShiftKeyPair& key) {
    CipherSentence sentence;
    sentence.words.reserve(record.values.size());
    for (const std::string& value : record.values) {
        if (value.empty())
            throw Error(Errc::invalid_argument,
                        "canonical values are never empty; use the empty marker");
        std::string word;
        word.reserve(value.size() * 2);
        for (unsigned char byte : value) {
            const int hi = byte / kAlphabet;
            const int lo = byte % kAlphabet;
            word.push_back(static_cast<char>('a' + shift_digit(hi, key.public_shift)));
            word.push_back(static_cast<char>('a' + shift_digit(lo, key.public_shift)));
        }
        sentence.words.push_back(std::move(word));
    }
    return sentence;
}

FeatureRecord decrypt_sentence(const CipherSentence& sentence, const ShiftKeyPair& key,
                               const FeatureSchema& schema) {
    if (sentence.words.size() != schema.columns.size())
        throw Error(Errc::shape_mismatch,
                    "sentence has " + std::to_string(sentence.words.size()) +
                        " words, schema expects " + std::to_string(schema.columns.size()));

    FeatureRecord record;
    record.values.reserve(sentence.words.size());
    for (const std::string& word : sentence.words) {
        if (word.size() % 2 != 0)
            throw Error(Errc::odd_length_word, "cipher word '" + word + "' has odd length");
        std::string value;
        value.reserve(word.size() / 2);
        for (std::size_t i = 0; i < word.size(); i += 2) {
            int digits[2];
            for (int d = 0; d < 2; ++d) {
                const char c = word[i + static_cast<std::size_t>(d)];
                if (c < 'a' || c > 'z')
                    throw Error(Errc::non_letter_symbol,
                                std::string("unexpected symbol '") + c + "' in cipher word");
                digits[d] = shift_digit(c - 'a', key.private_shift);
            }
            const int byte = digits[0] * kAlphabet + digits[1];
            if (byte > 255)
                throw Error(Errc::corrupt_cipher,
                            "digit pair decodes to " + std::to_string(byte) + " > 255");
            value.push_back(static_cast<char>(byte));
        }
        if (!utf8::is_valid(value))
            throw Error(Errc::invalid_utf8, "decrypted value is not valid UTF-8");
        record.values.push_back(std::move(value));
    }
    return record;
}

void save_key(const ShiftKeyPair& key, const std::string& path) {
    nlohmann::json j{{"scheme", "eq1-shift26"},
                     {"public_shift", key.public_shift},
                     {"private_shift", key.private_shift},
                     {"version", kKeyFileVersion}};
    std::ofstream out(path);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

ShiftKeyPair load_key(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open key file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::io_error, "key file is not valid JSON: " + std::string(e.what()));
    }
    if (j.value("scheme", "") != "eq1-shift26")
        throw Error(Errc::type_error, "unknown key scheme '" + j.value("scheme", "") + "'");
    const int version = j.value("version", -1);
    if (version != kKeyFileVersion)
        throw Error(Errc::version_mismatch, "key file version " + std::to_string(version) +
                                                ", expected " + std::to_string(kKeyFileVersion));
    const int pub = j.at("public_shift").get<int>();
    const int priv = j.at("private_shift").get<int>();
    if (pub < 0 || pub >= kAlphabet || priv != (kAlphabet - pub) % kAlphabet)
        throw Error(Errc::key_out_of_range, "inconsistent key pair in " + path);
    return ShiftKeyPair{pub, priv};
}

} // namespace cipherids
