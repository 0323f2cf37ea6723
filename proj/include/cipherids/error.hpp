#pragma once

#include <stdexcept>
#include <string>

namespace cipherids {

// Error categories shared across the pipeline. Each stage throws Error with
// the matching code so callers (and tests) can dispatch without string
// matching.
enum class Errc {
    malformed_capture,
    unsupported_link_type,
    header_mismatch,
    ragged_row,
    key_out_of_range,
    digit_out_of_range,
    odd_length_word,
    non_letter_symbol,
    invalid_utf8,
    corrupt_cipher,
    empty_corpus,
    invalid_vocab_limit,
    version_mismatch,
    malformed_vocab_file,
    unknown_id,
    duplicate_label,
    id_out_of_range,
    position_out_of_range,
    shape_mismatch,
    stale_trace,
    vocab_mismatch,
    label_out_of_range,
    length_mismatch,
    unknown_key,
    type_error,
    missing_required,
    empty_eval_set,
    invalid_argument,
    io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

} // namespace cipherids
