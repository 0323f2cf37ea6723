#include <doctest.h>

#include <random>

#include "cipherids/cipher.hpp"
#include "cipherids/error.hpp"
#include "testutil.hpp"

using namespace cipherids;

namespace {

// Minimal ad-hoc schemas for codec tests: the codec only needs column count.
FeatureSchema tiny_schema(std::size_t n) {
    FeatureSchema s;
    for (std::size_t i = 0; i < n; ++i)
        s.columns.push_back({"col" + std::to_string(i), ColumnKind::string, false});
    return s;
}

} // namespace

TEST_CASE("keygen pairs public and private shifts") {
    const auto key = keygen(5);
    CHECK(key.public_shift == 5);
    CHECK(key.private_shift == 21);

    const auto zero = keygen(0); // degenerate, warns on stderr
    CHECK(zero.public_shift == 0);
    CHECK(zero.private_shift == 0);

    CHECK_THROWS_AS(keygen(26), Error);
    CHECK_THROWS_AS(keygen(-1), Error);
}

TEST_CASE("shift_digit follows (p + k) mod 26") {
    CHECK(shift_digit(3, 5) == 8);
    CHECK(shift_digit(25, 3) == 2);
    CHECK(shift_digit(7, 0) == 7);
    CHECK_THROWS_AS(shift_digit(26, 0), Error);
    CHECK_THROWS_AS(shift_digit(-1, 0), Error);

    // exact inverse over the whole table
    for (int p = 0; p < 26; ++p)
        for (int k = 0; k < 26; ++k) CHECK(shift_digit(shift_digit(p, k), 26 - k) == p);
}

TEST_CASE("byte expansion of 'A' matches the hand-worked digits") {
    FeatureRecord record;
    record.values = {"A"}; // byte 65 = 2*26 + 13
    const auto sentence_k1 = encrypt_record(record, keygen(1));
    REQUIRE(sentence_k1.words.size() == 1);
    CHECK(sentence_k1.words[0] == "do");

    const auto sentence_k0 = encrypt_record(record, keygen(0));
    CHECK(sentence_k0.words[0] == "cn");

    const auto back = decrypt_sentence(sentence_k1, keygen(1), tiny_schema(1));
    CHECK(back.values[0] == "A");
}

TEST_CASE("tampered first digit above 9 is corrupt") {
    CipherSentence s;
    s.words = {"zo"};
    try {
        decrypt_sentence(s, keygen(1), tiny_schema(1));
        FAIL("expected CorruptCipher");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::corrupt_cipher);
    }
}

TEST_CASE("structurally invalid cipher words are rejected") {
    const auto key = keygen(3);
    {
        CipherSentence s;
        s.words = {"abc"};
        try {
            decrypt_sentence(s, key, tiny_schema(1));
            FAIL("odd length");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::odd_length_word);
        }
    }
    {
        CipherSentence s;
        s.words = {"aB"};
        try {
            decrypt_sentence(s, key, tiny_schema(1));
            FAIL("non-letter");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::non_letter_symbol);
        }
    }
    {
        // 0xC3 alone (digits 7,17 under k=0) is an invalid UTF-8 tail
        CipherSentence s;
        s.words = {"hr"};
        try {
            decrypt_sentence(s, keygen(0), tiny_schema(1));
            FAIL("invalid utf8");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::invalid_utf8);
        }
    }
}

TEST_CASE("cipher output stays inside the letter alphabet with even-length words") {
    std::mt19937_64 rng(11);
    const auto key = keygen(17);
    for (int trial = 0; trial < 200; ++trial) {
        FeatureRecord record;
        const std::size_t cols = 1 + rng() % 8;
        for (std::size_t c = 0; c < cols; ++c) {
            std::string v = testutil::random_utf8(rng, 6);
            if (v.empty()) v = kEmptyMarker;
            record.values.push_back(v);
        }
        const auto sentence = encrypt_record(record, key);
        REQUIRE(sentence.words.size() == cols);
        for (std::size_t c = 0; c < cols; ++c) {
            const auto& word = sentence.words[c];
            CHECK(word.size() == 2 * record.values[c].size());
            CHECK(word.size() % 2 == 0);
            for (char ch : word) {
                CHECK(ch >= 'a');
                CHECK(ch <= 'z');
            }
        }
        // determinism: same (record, key) -> same sentence
        CHECK(encrypt_record(record, key).joined() == sentence.joined());

        const auto back = decrypt_sentence(sentence, key, tiny_schema(cols));
        CHECK(back.values == record.values);
    }
}

TEST_CASE("sentence line form splits back into the same words") {
    CipherSentence s;
    s.words = {"do", "cn", "pq"};
    const auto line = s.joined();
    CHECK(line == "do cn pq");
    CHECK(CipherSentence::from_line(line).words == s.words);
}

TEST_CASE("key file round trip and validation") {
    const auto dir = testutil::temp_dir("keyfile");
    const auto key = keygen(9);
    save_key(key, dir + "/key.json");
    const auto loaded = load_key(dir + "/key.json");
    CHECK(loaded.public_shift == 9);
    CHECK(loaded.private_shift == 17);

    testutil::write_text(dir + "/bad.json",
                         "{\"scheme\":\"eq1-shift26\",\"public_shift\":3,"
                         "\"private_shift\":5,\"version\":1}");
    CHECK_THROWS_AS(load_key(dir + "/bad.json"), Error);
}
