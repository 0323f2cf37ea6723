#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "cipherids/bpe.hpp"
#include "cipherids/error.hpp"
#include "testutil.hpp"

using namespace cipherids;

TEST_CASE("normalize lowercases and strips punctuation") {
    const NormalizationConfig cfg;
    CHECK(normalize("Hello, World!", cfg) == "hello world");
    CHECK(normalize("tcpsyn flood", cfg) == "tcpsyn flood");
    CHECK(normalize("TCP/IP—v2", cfg) == "tcpip v2");
    CHECK(normalize("  spaced   out  ", cfg) == "spaced out");
    CHECK(normalize("", cfg) == "");
}

TEST_CASE("punctuation table: slash deletes, dash family becomes space") {
    CHECK(classify_codepoint('/') == PunctAction::remove);
    CHECK(classify_codepoint('-') == PunctAction::to_space);
    CHECK(classify_codepoint(0x2014) == PunctAction::to_space); // em dash
    CHECK(classify_codepoint(',') == PunctAction::remove);
    CHECK(classify_codepoint(0x00A1) == PunctAction::remove); // inverted bang
    CHECK(classify_codepoint(0x20AC) == PunctAction::remove); // euro sign
    CHECK(classify_codepoint('a') == PunctAction::keep);
    CHECK(classify_codepoint('7') == PunctAction::keep);
    CHECK(classify_codepoint(0x4E2D) == PunctAction::keep); // CJK stays
}

TEST_CASE("normalization plugins run last") {
    NormalizationConfig cfg;
    cfg.stem = [](const std::string& s) { return s.substr(0, 4); };
    CHECK(normalize("Flooding!", cfg) == "floo");
}

TEST_CASE("byte symbol table is a bijection with printable self-mapping") {
    const auto table = byte_symbol_table();
    CHECK(table['a'] == "a");
    CHECK(table['!'] == "!");
    CHECK(table[0x20] == "Ġ"); // space maps above the byte range
    std::set<std::string> unique(table.begin(), table.end());
    CHECK(unique.size() == 256);
}

TEST_CASE("first merge on the worked micro corpus is (a, a)") {
    const auto model = train_bpe({"aa aa ab"}, 300, 2, {});
    REQUIRE(!model.merges.empty());
    CHECK(model.merges[0] == std::pair<std::string, std::string>("a", "a"));
    // (a, b) occurred once, below the frequency floor, so nothing else merged
    CHECK(model.merges.size() == 1);
}

TEST_CASE("frequency floor above every pair count leaves only the byte alphabet") {
    const auto model = train_bpe({"ab cd ef"}, 300, 99, {});
    CHECK(model.merges.empty());
    CHECK(model.vocab_size() == 256 + TokenizerModel::kNumSpecials);
}

TEST_CASE("training is deterministic") {
    const std::vector<std::string> corpus{"dos flood flood", "scan scan dos", "flood dos dos"};
    const auto a = train_bpe(corpus, 280, 2, {});
    const auto b = train_bpe(corpus, 280, 2, {});
    CHECK(a.merges == b.merges);
    CHECK(a.tokens == b.tokens);
}

TEST_CASE("trained merges equal the brute-force oracle, tie-breaks included") {
    const std::vector<std::vector<std::string>> corpora = {
        {"aa aa ab"},
        {"ab ab ba ba"},              // count ties broken lexicographically
        {"xyxy xyxy"},
        {"aaaa aaaa"},                // overlapping occurrences, leftmost-first
        {"cat catcat", "dog catdog"},
    };
    for (const auto& corpus : corpora) {
        const auto model = train_bpe(corpus, 300, 2, {});
        const auto oracle = testutil::oracle_bpe_merges(corpus, 2, 300 - 256);
        CHECK(model.merges == oracle);
    }
}

TEST_CASE("encode applies merges; decode inverts; specials dropped") {
    TokenizerModel model = train_bpe({"aa aa ab"}, 300, 2, {});
    // single merge ("a","a"): "aab" -> ["aa", "b"]
    const auto ids = model.encode("aab");
    REQUIRE(ids.size() == 2);
    CHECK(model.tokens[static_cast<std::size_t>(ids[0])] == "aa");
    CHECK(model.tokens[static_cast<std::size_t>(ids[1])] == "b");

    CHECK(model.encode("").empty());
    CHECK(model.decode({}) == "");
    CHECK(model.decode({TokenizerModel::kPadId, TokenizerModel::kBosId,
                        TokenizerModel::kEosId}) == "");
    CHECK(model.decode(model.encode("do pq")) == "do pq");

    CHECK_THROWS_AS(model.decode({model.vocab_size()}), Error);
    CHECK_THROWS_AS(model.decode({-1}), Error);
}

TEST_CASE("fast encode equals in-order merge replay on random inputs") {
    const auto model =
        train_bpe({"the quick brown fox", "the quick fox", "brown fox fox the"}, 290, 2, {});
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        const int words = static_cast<int>(rng() % 5);
        for (int w = 0; w < words; ++w) {
            if (w) text.push_back(' ');
            const char* pool[] = {"the", "quick", "brown", "fox", "thequick", "ox", "f"};
            text += pool[rng() % 7];
        }
        std::vector<std::string> base;
        for (unsigned char b : text) base.push_back(model.byte_symbols[b]);
        const auto reference = testutil::oracle_apply_merges_in_order(base, model.merges);
        const auto ids = model.encode(text);
        REQUIRE(ids.size() == reference.size());
        for (std::size_t i = 0; i < ids.size(); ++i)
            CHECK(model.tokens[static_cast<std::size_t>(ids[i])] == reference[i]);
    }
}

TEST_CASE("byte-level round trip over random utf8, never an unk") {
    const auto model = train_bpe({"ab ab cd"}, 300, 2, {});
    std::mt19937_64 rng(31337);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::string s = testutil::random_utf8(rng, 24);
        const auto ids = model.encode(s);
        CHECK(ids.size() <= s.size()); // merges only shrink
        for (int id : ids) CHECK(id != TokenizerModel::kUnkId);
        CHECK(model.decode(ids) == s);
    }
}

TEST_CASE("vocabulary limit is honored") {
    std::vector<std::string> corpus;
    for (int i = 0; i < 50; ++i) corpus.push_back("abcdefgh abcdefgh ijklmnop");
    const auto model = train_bpe(corpus, 260, 1, {});
    CHECK(model.vocab_size() <= 260 + TokenizerModel::kNumSpecials);
    CHECK(model.merges.size() <= 4);
    CHECK_THROWS_AS(train_bpe(corpus, 100, 1, {}), Error);
}

TEST_CASE("empty corpus is rejected") {
    try {
        train_bpe({}, 300, 1, {});
        FAIL("expected EmptyCorpus");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::empty_corpus);
    }
    CHECK_THROWS_AS(train_bpe({"...", "!!"}, 300, 1, {}), Error); // normalizes to nothing
}

TEST_CASE("save and load reproduce encodings exactly") {
    const auto dir = testutil::temp_dir("vocab_file");
    const auto model = train_bpe({"flood flood scan", "scan flood dos"}, 290, 2, {});
    save_tokenizer(model, dir + "/vocab.json");
    const auto loaded = load_tokenizer(dir + "/vocab.json");
    CHECK(loaded.merges == model.merges);
    CHECK(loaded.tokens == model.tokens);

    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::string s = testutil::random_utf8(rng, 16);
        CHECK(loaded.encode(s) == model.encode(s));
    }
}

TEST_CASE("vocab file validation") {
    const auto dir = testutil::temp_dir("vocab_bad");
    const auto model = train_bpe({"ab ab"}, 300, 2, {});
    save_tokenizer(model, dir + "/vocab.json");

    SUBCASE("truncated file") {
        std::ifstream in(dir + "/vocab.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        testutil::write_text(dir + "/trunc.json", text.substr(0, text.size() / 2));
        try {
            load_tokenizer(dir + "/trunc.json");
            FAIL("expected MalformedVocabFile");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::malformed_vocab_file);
        }
    }
    SUBCASE("future version names both versions") {
        std::ifstream in(dir + "/vocab.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto pos = text.find("\"format_version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, std::string("\"format_version\": 1").size(), "\"format_version\": 9");
        testutil::write_text(dir + "/future.json", text);
        try {
            load_tokenizer(dir + "/future.json");
            FAIL("expected VersionMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::version_mismatch);
            const std::string what = e.what();
            CHECK(what.find("9") != std::string::npos);
            CHECK(what.find("1") != std::string::npos);
        }
    }
}
