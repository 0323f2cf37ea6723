#include "cipherids/sequence.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include "cipherids/error.hpp"
#include "cipherids/rng.hpp"

namespace cipherids {

LabelMap encode_labels(const std::vector<std::string>& names) {
    if (names.empty()) throw Error(Errc::invalid_argument, "label name list is empty");
    std::set<std::string> sorted;
    for (const auto& raw : names) {
        std::string name = raw;
        // trim ASCII whitespace at both ends
        const auto begin = name.find_first_not_of(" \t\r\n");
        const auto end = name.find_last_not_of(" \t\r\n");
        name = begin == std::string::npos ? std::string() : name.substr(begin, end - begin + 1);
        if (name.empty()) throw Error(Errc::invalid_argument, "empty label name");
        if (!sorted.insert(name).second)
            throw Error(Errc::duplicate_label, "duplicate label '" + name + "'");
    }
    LabelMap map;
    std::int32_t id = 0;
    for (const auto& name : sorted) map.emplace(name, id++);
    return map;
}

std::vector<std::string> label_names(const LabelMap& map) {
    std::vector<std::string> names(map.size());
    for (const auto& [name, id] : map) names[static_cast<std::size_t>(id)] = name;
    return names;
}

TokenizedExample pad_and_mask(const std::vector<std::int32_t>& ids, std::size_t max_len,
                              std::int32_t pad_id, std::int32_t bos_id, std::int32_t eos_id) {
    if (max_len < 2) throw Error(Errc::invalid_argument, "max_len must be at least 2");
    const std::size_t body = std::min(ids.size(), max_len - 2);

    TokenizedExample ex;
    ex.input_ids.reserve(max_len);
    ex.input_ids.push_back(bos_id);
    ex.input_ids.insert(ex.input_ids.end(), ids.begin(),
                        ids.begin() + static_cast<std::ptrdiff_t>(body));
    ex.input_ids.push_back(eos_id);
    const std::size_t real = ex.input_ids.size();
    ex.input_ids.resize(max_len, pad_id);

    ex.attention_mask.assign(max_len, 0);
    std::fill(ex.attention_mask.begin(), ex.attention_mask.begin() + static_cast<std::ptrdiff_t>(real),
              std::uint8_t{1});
    return ex;
}

std::vector<EvalChunk> chunk_eval(const std::vector<TokenizedExample>& examples,
                                  std::size_t chunk_size) {
    if (chunk_size < 1) throw Error(Errc::invalid_argument, "chunk_size must be >= 1");
    std::vector<EvalChunk> chunks;
    chunks.reserve((examples.size() + chunk_size - 1) / chunk_size);
    for (std::size_t start = 0; start < examples.size(); start += chunk_size) {
        EvalChunk chunk;
        const std::size_t end = std::min(start + chunk_size, examples.size());
        chunk.examples.assign(examples.begin() + static_cast<std::ptrdiff_t>(start),
                              examples.begin() + static_cast<std::ptrdiff_t>(end));
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

std::pair<std::vector<TokenizedExample>, std::vector<TokenizedExample>>
split_train_eval(const std::vector<TokenizedExample>& examples, double eval_fraction,
                 std::uint64_t seed) {
    if (eval_fraction <= 0.0 || eval_fraction >= 1.0)
        throw Error(Errc::invalid_argument, "eval_fraction must be in (0, 1)");

    // group indices by label to decide whether stratification is possible
    std::map<std::int32_t, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < examples.size(); ++i) by_label[examples[i].label].push_back(i);

    bool stratify = !by_label.empty();
    for (const auto& [label, idx] : by_label) {
        if (idx.size() < 2) {
            stratify = false;
            std::cerr << "[cipherids] warning: class " << label
                      << " has fewer than 2 examples; using a plain split\n";
            break;
        }
    }

    DetRng rng(stage_seed(seed, "split"));
    std::vector<std::size_t> eval_idx;
    if (stratify) {
        for (auto& [label, idx] : by_label) {
            rng.shuffle(idx);
            const std::size_t take = static_cast<std::size_t>(
                std::llround(eval_fraction * static_cast<double>(idx.size())));
            const std::size_t bounded = std::min(std::max<std::size_t>(take, 1), idx.size() - 1);
            eval_idx.insert(eval_idx.end(), idx.begin(),
                            idx.begin() + static_cast<std::ptrdiff_t>(bounded));
        }
    } else {
        std::vector<std::size_t> all(examples.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        rng.shuffle(all);
        const std::size_t take = static_cast<std::size_t>(
            std::llround(eval_fraction * static_cast<double>(all.size())));
        eval_idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(
                                                       std::min(take, all.size())));
    }

    std::vector<bool> in_eval(examples.size(), false);
    for (std::size_t i : eval_idx) in_eval[i] = true;

    std::pair<std::vector<TokenizedExample>, std::vector<TokenizedExample>> out;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        (in_eval[i] ? out.second : out.first).push_back(examples[i]);
    }
    return out;
}

namespace {

constexpr char kDatasetMagic[8] = {'C', 'I', 'D', 'S', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    // little-endian, independent of host order
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T take(std::istream& in) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = in.get();
        if (c == EOF) throw Error(Errc::io_error, "dataset file truncated");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<T>(v);
}

} // namespace

void save_dataset(const PreparedDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");
    out.write(kDatasetMagic, sizeof(kDatasetMagic));
    put<std::uint32_t>(out, kDatasetVersion);
    put<std::uint32_t>(out, ds.max_len);
    put<std::uint32_t>(out, ds.n_classes);
    put<std::uint32_t>(out, ds.vocab_size);
    put<std::uint64_t>(out, ds.tokenizer_hash);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.labels.size()));
    for (const auto& name : ds.labels) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    put<std::uint64_t>(out, ds.examples.size());
    for (const auto& ex : ds.examples) {
        if (ex.input_ids.size() != ds.max_len || ex.attention_mask.size() != ds.max_len)
            throw Error(Errc::shape_mismatch, "example length disagrees with dataset max_len");
        for (std::int32_t id : ex.input_ids) put<std::int32_t>(out, id);
        for (std::uint8_t m : ex.attention_mask) out.put(static_cast<char>(m));
        put<std::int32_t>(out, ex.label);
    }
    if (!out) throw Error(Errc::io_error, "write failed for " + path);
}

PreparedDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open dataset " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || !std::equal(magic, magic + 8, kDatasetMagic))
        throw Error(Errc::io_error, "not a prepared dataset: " + path);
    const auto version = take<std::uint32_t>(in);
    if (version != kDatasetVersion)
        throw Error(Errc::version_mismatch, "dataset version " + std::to_string(version) +
                                                ", expected " + std::to_string(kDatasetVersion));
    PreparedDataset ds;
    ds.max_len = take<std::uint32_t>(in);
    ds.n_classes = take<std::uint32_t>(in);
    ds.vocab_size = take<std::uint32_t>(in);
    ds.tokenizer_hash = take<std::uint64_t>(in);
    const auto n_labels = take<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        const auto len = take<std::uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(len));
        if (in.gcount() != static_cast<std::streamsize>(len))
            throw Error(Errc::io_error, "dataset file truncated in label block");
        ds.labels.push_back(std::move(name));
    }
    const auto n = take<std::uint64_t>(in);
    ds.examples.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        TokenizedExample ex;
        ex.input_ids.reserve(ds.max_len);
        for (std::uint32_t k = 0; k < ds.max_len; ++k)
            ex.input_ids.push_back(take<std::int32_t>(in));
        ex.attention_mask.reserve(ds.max_len);
        for (std::uint32_t k = 0; k < ds.max_len; ++k) {
            const int c = in.get();
            if (c == EOF) throw Error(Errc::io_error, "dataset file truncated");
            ex.attention_mask.push_back(static_cast<std::uint8_t>(c));
        }
        ex.label = take<std::int32_t>(in);
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

} // namespace cipherids
