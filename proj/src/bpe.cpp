#include "cipherids/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "cipherids/error.hpp"
#include "cipherids/utf8.hpp"

namespace cipherids {

namespace {

constexpr int kVocabFileVersion = 1;
const char* kSpecialTokens[TokenizerModel::kNumSpecials] = {"<pad>", "<bos>", "<eos>", "<unk>",
                                                            "<mask>"};

struct PairHash {
    std::size_t operator()(const std::pair<std::string, std::string>& p) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto feed = [&h](const std::string& s) {
            for (unsigned char c : s) {
                h ^= c;
                h *= 0x100000001b3ULL;
            }
            h ^= 0x1F;
            h *= 0x100000001b3ULL;
        };
        feed(p.first);
        feed(p.second);
        return static_cast<std::size_t>(h);
    }
};

// Replaces every leftmost-first occurrence of (left, right) in the symbol
// sequence with their concatenation.
void apply_merge(std::vector<std::string>& symbols, const std::string& left,
                 const std::string& right) {
    std::size_t write = 0;
    for (std::size_t read = 0; read < symbols.size();) {
        if (read + 1 < symbols.size() && symbols[read] == left && symbols[read + 1] == right) {
            symbols[write++] = left + right;
            read += 2;
        } else {
            if (write != read) symbols[write] = std::move(symbols[read]);
            ++write;
            ++read;
        }
    }
    symbols.resize(write);
}

} // namespace

std::array<std::string, 256> byte_symbol_table() {
    std::array<std::string, 256> table;
    auto printable = [](int b) {
        return (b >= 0x21 && b <= 0x7E) || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
    };
    std::uint32_t next = 256;
    for (int b = 0; b < 256; ++b) {
        const std::uint32_t cp = printable(b) ? static_cast<std::uint32_t>(b) : next++;
        table[static_cast<std::size_t>(b)] = utf8::encode_codepoint(cp);
    }
    return table;
}

TokenizerModel make_base_model(int vocab_limit, int min_frequency) {
    TokenizerModel model;
    model.vocab_limit = vocab_limit;
    model.min_frequency = min_frequency;
    model.byte_symbols = byte_symbol_table();
    model.tokens.reserve(TokenizerModel::kFirstMergeId);
    for (const char* s : kSpecialTokens) model.tokens.emplace_back(s);
    for (const auto& s : model.byte_symbols) model.tokens.push_back(s);
    model.rebuild_index();
    return model;
}

void TokenizerModel::rebuild_index() {
    token_to_id_.clear();
    token_to_id_.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i)
        token_to_id_.emplace(tokens[i], static_cast<int>(i));
    codepoint_to_byte_.clear();
    for (int b = 0; b < 256; ++b) {
        std::size_t pos = 0;
        std::uint32_t cp = 0;
        utf8::next_codepoint(byte_symbols[static_cast<std::size_t>(b)], pos, cp);
        codepoint_to_byte_.emplace(cp, b);
    }
}

int TokenizerModel::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

std::vector<int> TokenizerModel::encode(const std::string& text) const {
    if (!utf8::is_valid(text)) throw Error(Errc::invalid_utf8, "encode input is not UTF-8");
    if (text.empty()) return {};

    std::vector<std::string> symbols;
    symbols.reserve(text.size());
    for (unsigned char b : text) symbols.push_back(byte_symbols[b]);

    // Merge the lowest-ranked present pair until none applies; equivalent to
    // replaying the merge list in recorded order (differentially tested).
    std::unordered_map<std::pair<std::string, std::string>, int, PairHash> rank;
    rank.reserve(merges.size());
    for (std::size_t i = 0; i < merges.size(); ++i)
        rank.emplace(merges[i], static_cast<int>(i));

    while (symbols.size() > 1) {
        int best_rank = std::numeric_limits<int>::max();
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto it = rank.find({symbols[i], symbols[i + 1]});
            if (it != rank.end() && it->second < best_rank) best_rank = it->second;
        }
        if (best_rank == std::numeric_limits<int>::max()) break;
        apply_merge(symbols, merges[static_cast<std::size_t>(best_rank)].first,
                    merges[static_cast<std::size_t>(best_rank)].second);
    }

    std::vector<int> ids;
    ids.reserve(symbols.size());
    for (const auto& s : symbols) {
        auto it = token_to_id_.find(s);
        if (it == token_to_id_.end())
            throw Error(Errc::unknown_id, "symbol missing from vocabulary: " + s);
        ids.push_back(it->second);
    }
    return ids;
}

std::string TokenizerModel::decode(const std::vector<int>& ids) const {
    std::string bytes;
    for (int id : ids) {
        if (id < 0 || id >= vocab_size())
            throw Error(Errc::unknown_id, "id " + std::to_string(id) + " outside vocabulary of " +
                                              std::to_string(vocab_size()));
        if (is_special(id)) continue;
        const std::string& token = tokens[static_cast<std::size_t>(id)];
        std::size_t pos = 0;
        std::uint32_t cp = 0;
        while (pos < token.size()) {
            if (!utf8::next_codepoint(token, pos, cp))
                throw Error(Errc::malformed_vocab_file, "token is not valid UTF-8");
            auto it = codepoint_to_byte_.find(cp);
            if (it == codepoint_to_byte_.end())
                throw Error(Errc::unknown_id, "token contains an unmapped symbol");
            bytes.push_back(static_cast<char>(it->second));
        }
    }
    if (!utf8::is_valid(bytes))
        throw Error(Errc::invalid_utf8, "decoded byte sequence is not valid UTF-8");
    return bytes;
}

TokenizerModel train_bpe(const std::vector<std::string>& corpus_lines, int vocab_limit,
                         int min_frequency, const NormalizationConfig& cfg) {
    if (vocab_limit < 256)
        throw Error(Errc::invalid_vocab_limit,
                    "vocab limit must be at least 256 to cover the byte alphabet, got " +
                        std::to_string(vocab_limit));
    if (min_frequency < 1)
        throw Error(Errc::invalid_argument, "min frequency must be >= 1");

    TokenizerModel model = make_base_model(vocab_limit, min_frequency);

    // word -> count over the normalized corpus; merges never cross words
    std::unordered_map<std::string, std::uint64_t> word_counts;
    for (const auto& line : corpus_lines) {
        const std::string norm = normalize(line, cfg);
        std::size_t start = 0;
        while (start < norm.size()) {
            std::size_t end = norm.find(' ', start);
            if (end == std::string::npos) end = norm.size();
            if (end > start) ++word_counts[norm.substr(start, end - start)];
            start = end + 1;
        }
    }
    if (word_counts.empty()) throw Error(Errc::empty_corpus, "no words in corpus after normalization");

    struct Word {
        std::vector<std::string> symbols;
        std::uint64_t count;
    };
    std::vector<Word> words;
    words.reserve(word_counts.size());
    for (const auto& [text, count] : word_counts) {
        Word w;
        w.count = count;
        w.symbols.reserve(text.size());
        for (unsigned char b : text) w.symbols.push_back(model.byte_symbols[b]);
        words.push_back(std::move(w));
    }

    const std::size_t max_merges = static_cast<std::size_t>(vocab_limit - 256);
    while (model.merges.size() < max_merges) {
        std::unordered_map<std::pair<std::string, std::string>, std::uint64_t, PairHash> counts;
        for (const auto& w : words) {
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i)
                counts[{w.symbols[i], w.symbols[i + 1]}] += w.count;
        }

        // highest count wins; ties break on the lexicographically smaller
        // (left, right) pair so training is deterministic
        const std::pair<std::string, std::string>* best = nullptr;
        std::uint64_t best_count = 0;
        for (const auto& [pair, count] : counts) {
            if (count < static_cast<std::uint64_t>(min_frequency)) continue;
            if (count > best_count || (count == best_count && best && pair < *best)) {
                best = &pair;
                best_count = count;
            }
        }
        if (!best) break;

        const auto merge = *best;
        for (auto& w : words) apply_merge(w.symbols, merge.first, merge.second);
        model.tokens.push_back(merge.first + merge.second);
        model.merges.push_back(merge);
    }

    model.rebuild_index();
    return model;
}

void save_tokenizer(const TokenizerModel& model, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = kVocabFileVersion;
    j["vocab_limit"] = model.vocab_limit;
    j["min_frequency"] = model.min_frequency;
    j["byte_symbols"] = model.byte_symbols;
    nlohmann::json specials = nlohmann::json::object();
    for (int i = 0; i < TokenizerModel::kNumSpecials; ++i)
        specials[kSpecialTokens[i]] = i;
    j["specials"] = specials;
    j["tokens"] = model.tokens;
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& [l, r] : model.merges) merges.push_back(nlohmann::json::array({l, r}));
    j["merges"] = merges;

    std::ofstream out(path);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");
    out << j.dump(1) << "\n";
}

TokenizerModel load_tokenizer(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open vocab file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::malformed_vocab_file, std::string("vocab file parse error: ") + e.what());
    }

    if (!j.contains("format_version") || !j["format_version"].is_number_integer())
        throw Error(Errc::malformed_vocab_file, "missing format_version");
    const int version = j["format_version"].get<int>();
    if (version != kVocabFileVersion)
        throw Error(Errc::version_mismatch, "vocab file version " + std::to_string(version) +
                                                ", this build reads version " +
                                                std::to_string(kVocabFileVersion));

    TokenizerModel model;
    try {
        model.vocab_limit = j.at("vocab_limit").get<int>();
        model.min_frequency = j.at("min_frequency").get<int>();
        const auto& syms = j.at("byte_symbols");
        if (!syms.is_array() || syms.size() != 256)
            throw Error(Errc::malformed_vocab_file, "byte_symbols must list 256 entries");
        for (std::size_t i = 0; i < 256; ++i) model.byte_symbols[i] = syms[i].get<std::string>();
        model.tokens = j.at("tokens").get<std::vector<std::string>>();
        for (const auto& m : j.at("merges")) {
            if (!m.is_array() || m.size() != 2)
                throw Error(Errc::malformed_vocab_file, "merge entries must be pairs");
            model.merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::malformed_vocab_file, std::string("vocab file structure: ") + e.what());
    }

    // structural checks: fixed id layout and the merge ordering constraint
    if (model.tokens.size() < TokenizerModel::kFirstMergeId)
        throw Error(Errc::malformed_vocab_file, "token list shorter than specials + bytes");
    for (int i = 0; i < TokenizerModel::kNumSpecials; ++i) {
        if (model.tokens[static_cast<std::size_t>(i)] != kSpecialTokens[i])
            throw Error(Errc::malformed_vocab_file, "special token block is misplaced");
    }
    std::unordered_map<std::string, int> known;
    for (std::size_t b = 0; b < 256; ++b) {
        if (model.tokens[TokenizerModel::kFirstByteId + b] != model.byte_symbols[b])
            throw Error(Errc::malformed_vocab_file, "byte symbol table disagrees with token list");
        known.emplace(model.byte_symbols[b], 1);
    }
    if (model.tokens.size() != TokenizerModel::kFirstMergeId + model.merges.size())
        throw Error(Errc::malformed_vocab_file, "token count disagrees with merge count");
    for (std::size_t i = 0; i < model.merges.size(); ++i) {
        const auto& [l, r] = model.merges[i];
        if (!known.count(l) || !known.count(r))
            throw Error(Errc::malformed_vocab_file,
                        "merge " + std::to_string(i) + " references a symbol not yet defined");
        const std::string joined = l + r;
        if (model.tokens[TokenizerModel::kFirstMergeId + i] != joined)
            throw Error(Errc::malformed_vocab_file,
                        "token " + std::to_string(TokenizerModel::kFirstMergeId + i) +
                            " does not equal its merge concatenation");
        known.emplace(joined, 1);
    }
    if (model.vocab_size() > model.vocab_limit + TokenizerModel::kNumSpecials)
        throw Error(Errc::malformed_vocab_file, "vocabulary exceeds its declared limit");

    model.rebuild_index();
    return model;
}

std::vector<std::string> read_corpus_lines(const std::string& path,
                                           std::vector<std::string>* labels_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open corpus " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t tab = line.find('\t');
        if (tab != std::string::npos) {
            if (labels_out) labels_out->push_back(line.substr(tab + 1));
            line.resize(tab);
        } else if (labels_out) {
            labels_out->emplace_back();
        }
        lines.push_back(line);
    }
    return lines;
}

} // namespace cipherids
