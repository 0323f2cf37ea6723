#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cipherids {

// Fixed-length model input: BOS + tokens + EOS, right-padded; mask is 1 over
// real tokens and 0 over padding, monotone non-increasing.
struct TokenizedExample {
    std::vector<std::int32_t> input_ids;
    std::vector<std::uint8_t> attention_mask;
    std::int32_t label = -1;
};

struct EvalChunk {
    std::vector<TokenizedExample> examples;
};

// Bijective name -> id map, ids assigned in sorted-name order from 0.
using LabelMap = std::map<std::string, std::int32_t>;

LabelMap encode_labels(const std::vector<std::string>& names);
std::vector<std::string> label_names(const LabelMap& map); // id-ordered

// Frames ids as BOS + ids + EOS (truncating ids to max_len - 2), pads to
// max_len, and builds the attention mask.
TokenizedExample pad_and_mask(const std::vector<std::int32_t>& ids, std::size_t max_len,
                              std::int32_t pad_id, std::int32_t bos_id, std::int32_t eos_id);

// ceil(n / chunk_size) chunks, order preserved, all full except maybe the last.
std::vector<EvalChunk> chunk_eval(const std::vector<TokenizedExample>& examples,
                                  std::size_t chunk_size);

// Deterministic seeded split; stratified by label when every class has at
// least two examples, otherwise a plain split with a warning.
std::pair<std::vector<TokenizedExample>, std::vector<TokenizedExample>>
split_train_eval(const std::vector<TokenizedExample>& examples, double eval_fraction,
                 std::uint64_t seed);

// Prepared-dataset container: binary file with header (max_len, class count,
// vocab size, tokenizer file hash, label map) followed by the example triples.
struct PreparedDataset {
    std::uint32_t max_len = 0;
    std::uint32_t n_classes = 0;
    std::uint32_t vocab_size = 0;
    std::uint64_t tokenizer_hash = 0;
    std::vector<std::string> labels; // id-ordered
    std::vector<TokenizedExample> examples;
};

void save_dataset(const PreparedDataset& ds, const std::string& path);
PreparedDataset load_dataset(const std::string& path);

} // namespace cipherids
