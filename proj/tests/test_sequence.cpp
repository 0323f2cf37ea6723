#include <doctest.h>

#include <random>

#include "cipherids/error.hpp"
#include "cipherids/sequence.hpp"
#include "testutil.hpp"

using namespace cipherids;

namespace {

TokenizedExample make_example(std::int32_t label, std::size_t max_len = 8) {
    return [&] {
        TokenizedExample ex = pad_and_mask({5, 6, 7}, max_len, 0, 1, 2);
        ex.label = label;
        return ex;
    }();
}

} // namespace

TEST_CASE("label encoding assigns ids in sorted-name order") {
    const auto map = encode_labels({"Normal", "DDoS_UDP"});
    CHECK(map.at("DDoS_UDP") == 0);
    CHECK(map.at("Normal") == 1);

    const auto single = encode_labels({"Backdoor"});
    CHECK(single.at("Backdoor") == 0);

    CHECK_THROWS_AS(encode_labels({"X", "X"}), Error);
    CHECK_THROWS_AS(encode_labels({"X", " X "}), Error); // trims before comparing

    // stability: re-encoding the same set yields the same ids
    const auto again = encode_labels({"DDoS_UDP", "Normal"});
    CHECK(again == map);
    CHECK(label_names(map) == std::vector<std::string>{"DDoS_UDP", "Normal"});
}

TEST_CASE("pad_and_mask frames, pads, and truncates") {
    SUBCASE("worked example") {
        const auto ex = pad_and_mask({5, 6}, 6, 0, 1, 2);
        CHECK(ex.input_ids == std::vector<std::int32_t>{1, 5, 6, 2, 0, 0});
        CHECK(ex.attention_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0});
    }
    SUBCASE("exactly full: no padding") {
        const auto ex = pad_and_mask({5, 6, 7, 8}, 6, 0, 1, 2);
        CHECK(ex.input_ids == std::vector<std::int32_t>{1, 5, 6, 7, 8, 2});
        CHECK(ex.attention_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1});
    }
    SUBCASE("overlong input truncates to max_len - 2 real tokens") {
        const auto ex = pad_and_mask({5, 6, 7, 8, 9, 10, 11}, 6, 0, 1, 2);
        CHECK(ex.input_ids == std::vector<std::int32_t>{1, 5, 6, 7, 8, 2});
    }
    SUBCASE("mask is monotone and counts 2 + min(n, L-2) ones") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = rng() % 20;
            std::vector<std::int32_t> ids(n, 9);
            const std::size_t L = 2 + rng() % 20;
            const auto ex = pad_and_mask(ids, L, 0, 1, 2);
            std::size_t ones = 0;
            bool seen_zero = false;
            for (auto m : ex.attention_mask) {
                if (m) {
                    CHECK(!seen_zero); // no 1 after a 0
                    ++ones;
                } else {
                    seen_zero = true;
                }
            }
            CHECK(ones == 2 + std::min(n, L - 2));
            CHECK(ex.input_ids[0] == 1);
            CHECK(ex.input_ids[ones - 1] == 2); // EOS is the last real token
        }
    }
    CHECK_THROWS_AS(pad_and_mask({1}, 1, 0, 1, 2), Error);
}

TEST_CASE("chunking arithmetic and concatenation identity") {
    std::vector<TokenizedExample> examples;
    for (int i = 0; i < 12000; ++i) examples.push_back(make_example(i % 3));
    const auto chunks = chunk_eval(examples, 5000);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].examples.size() == 5000);
    CHECK(chunks[1].examples.size() == 5000);
    CHECK(chunks[2].examples.size() == 2000);

    std::size_t pos = 0;
    for (const auto& chunk : chunks)
        for (const auto& ex : chunk.examples) CHECK(ex.label == examples[pos++].label);
    CHECK(pos == examples.size());

    CHECK(chunk_eval({}, 5000).empty());
    const auto one = chunk_eval({make_example(0)}, 5000);
    REQUIRE(one.size() == 1);
    CHECK(one[0].examples.size() == 1);
}

TEST_CASE("split is deterministic and stratified") {
    std::vector<TokenizedExample> examples;
    for (int i = 0; i < 50; ++i) examples.push_back(make_example(0));
    for (int i = 0; i < 50; ++i) examples.push_back(make_example(1));

    const auto [train_a, eval_a] = split_train_eval(examples, 0.2, 1234);
    const auto [train_b, eval_b] = split_train_eval(examples, 0.2, 1234);
    CHECK(train_a.size() == 80);
    CHECK(eval_a.size() == 20);
    REQUIRE(train_b.size() == train_a.size());
    for (std::size_t i = 0; i < train_a.size(); ++i)
        CHECK(train_a[i].label == train_b[i].label);

    int eval_zero = 0, eval_one = 0;
    for (const auto& ex : eval_a) (ex.label == 0 ? eval_zero : eval_one)++;
    CHECK(eval_zero == 10);
    CHECK(eval_one == 10);

    const auto [train_c, eval_c] = split_train_eval(examples, 0.2, 99);
    CHECK(train_c.size() == 80); // different seed, same sizes
}

TEST_CASE("split falls back to plain when a class is a singleton") {
    std::vector<TokenizedExample> examples;
    for (int i = 0; i < 9; ++i) examples.push_back(make_example(0));
    examples.push_back(make_example(1)); // lone class -> warning, plain split
    const auto [train, eval] = split_train_eval(examples, 0.2, 7);
    CHECK(train.size() + eval.size() == 10);
    CHECK(eval.size() == 2);
}

TEST_CASE("prepared dataset file round trips") {
    const auto dir = testutil::temp_dir("dataset_io");
    PreparedDataset ds;
    ds.max_len = 8;
    ds.n_classes = 3;
    ds.vocab_size = 300;
    ds.tokenizer_hash = 0xDEADBEEFCAFEF00DULL;
    ds.labels = {"DDoS_UDP", "Normal", "Scan"};
    for (int i = 0; i < 17; ++i) ds.examples.push_back(make_example(i % 3));

    const std::string path = dir + "/data.bin";
    save_dataset(ds, path);
    const auto back = load_dataset(path);
    CHECK(back.max_len == ds.max_len);
    CHECK(back.n_classes == ds.n_classes);
    CHECK(back.vocab_size == ds.vocab_size);
    CHECK(back.tokenizer_hash == ds.tokenizer_hash);
    CHECK(back.labels == ds.labels);
    REQUIRE(back.examples.size() == ds.examples.size());
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        CHECK(back.examples[i].input_ids == ds.examples[i].input_ids);
        CHECK(back.examples[i].attention_mask == ds.examples[i].attention_mask);
        CHECK(back.examples[i].label == ds.examples[i].label);
    }

    CHECK_THROWS_AS(load_dataset(dir + "/missing.bin"), Error);
}
