#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cipherids/normalize.hpp"

namespace cipherids {

// Byte-level BPE model. Id layout is fixed: specials 0-4 (PAD first), the
// 256 byte symbols at 5..260, merged tokens from 261 upward.
class TokenizerModel {
public:
    static constexpr int kPadId = 0;
    static constexpr int kBosId = 1;
    static constexpr int kEosId = 2;
    static constexpr int kUnkId = 3;
    static constexpr int kMaskId = 4;
    static constexpr int kNumSpecials = 5;
    static constexpr int kFirstByteId = kNumSpecials;
    static constexpr int kFirstMergeId = kNumSpecials + 256;

    // byte -> printable symbol bijection (shipped in the vocab file so the
    // file stays diffable text)
    std::array<std::string, 256> byte_symbols;
    std::vector<std::pair<std::string, std::string>> merges; // application order
    std::vector<std::string> tokens;                         // id-ordered, specials included
    int vocab_limit = 5000;  // V
    int min_frequency = 2;   // F

    int vocab_size() const { return static_cast<int>(tokens.size()); }
    bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }
    int id_of(const std::string& token) const;

    // Byte-total: any valid UTF-8 input encodes without UNK. BOS/EOS are not
    // added here; sequence prep frames examples.
    std::vector<int> encode(const std::string& text) const;

    // Inverse of encode; special tokens are dropped. Throws UnknownId on
    // out-of-range ids and InvalidUtf8 if an adversarial id sequence does
    // not reassemble to valid UTF-8.
    std::string decode(const std::vector<int>& ids) const;

    // Rebuilds the lookup tables after tokens/merges are populated.
    void rebuild_index();

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::unordered_map<std::uint32_t, int> codepoint_to_byte_;

    friend TokenizerModel make_base_model(int vocab_limit, int min_frequency);
};

// The documented byte->symbol bijection: printable single-byte code points
// map to themselves, the rest to consecutive code points from U+0100.
std::array<std::string, 256> byte_symbol_table();

// Greedy BPE training over normalized corpus lines. Pair counting is
// word-internal (whitespace never participates in a merge). Ties break on
// count first, then lexicographically smaller (left, right) symbol pair.
TokenizerModel train_bpe(const std::vector<std::string>& corpus_lines, int vocab_limit,
                         int min_frequency, const NormalizationConfig& cfg);

void save_tokenizer(const TokenizerModel& model, const std::string& path);
TokenizerModel load_tokenizer(const std::string& path);

// Reads corpus lines from a file; a trailing tab-separated label per line is
// split off when present.
std::vector<std::string> read_corpus_lines(const std::string& path,
                                           std::vector<std::string>* labels_out = nullptr);

} // namespace cipherids
