#pragma once

#include <cstdint>
#include <string>

#include "cipherids/model.hpp"
#include "cipherids/train.hpp"

namespace cipherids {

// One configuration file drives every subcommand; flags may override
// individual values at run time but the config hash always covers the
// resolved file contents.
struct PipelineConfig {
    std::uint64_t seed = 42;

    struct Paths {
        std::string schema;    // schema manifest
        std::string key;       // cipher key file
        std::string tokenizer; // trained vocab file
    } paths;

    int cipher_shift = 5;

    int tokenizer_vocab_limit = 5000;
    int tokenizer_min_frequency = 2;
    bool normalize_lowercase = true;
    bool normalize_strip_punctuation = true;

    int max_len = 256;
    int chunk_size = 5000;
    double eval_fraction = 0.2;

    ModelConfig model;   // vocab_size resolved from the tokenizer at run time
    TrainConfig train;   // seed mirrors the root seed

    std::string config_hash; // filled by parse_config
};

PipelineConfig default_config();

// Parses and fully resolves the JSON config: defaults applied, unknown keys
// rejected by name, type errors name the key and expected kind. The hash of
// the canonical resolved form is stored and echoed to the log.
PipelineConfig parse_config(const std::string& path);

std::string config_canonical_json(const PipelineConfig& cfg);

} // namespace cipherids
