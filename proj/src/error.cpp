#include "cipherids/error.hpp"

namespace cipherids {

const char* errc_name(Errc code) {
    switch (code) {
    case Errc::malformed_capture: return "MalformedCapture";
    case Errc::unsupported_link_type: return "UnsupportedLinkType";
    case Errc::header_mismatch: return "HeaderMismatch";
    case Errc::ragged_row: return "RaggedRow";
    case Errc::key_out_of_range: return "KeyOutOfRange";
    case Errc::digit_out_of_range: return "DigitOutOfRange";
    case Errc::odd_length_word: return "OddLengthWord";
    case Errc::non_letter_symbol: return "NonLetterSymbol";
    case Errc::invalid_utf8: return "InvalidUtf8";
    case Errc::corrupt_cipher: return "CorruptCipher";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::invalid_vocab_limit: return "InvalidVocabLimit";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::malformed_vocab_file: return "MalformedVocabFile";
    case Errc::unknown_id: return "UnknownId";
    case Errc::duplicate_label: return "DuplicateLabel";
    case Errc::id_out_of_range: return "IdOutOfRange";
    case Errc::position_out_of_range: return "PositionOutOfRange";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::stale_trace: return "StaleTrace";
    case Errc::vocab_mismatch: return "VocabMismatch";
    case Errc::label_out_of_range: return "LabelOutOfRange";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::unknown_key: return "UnknownKey";
    case Errc::type_error: return "TypeError";
    case Errc::missing_required: return "MissingRequired";
    case Errc::empty_eval_set: return "EmptyEvalSet";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::io_error: return "IoError";
    }
    return "UnknownError";
}

} // namespace cipherids
