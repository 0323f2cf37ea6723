#include "cipherids/pipeline_config.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <type_traits>

#include <json.hpp>

#include "cipherids/error.hpp"
#include "cipherids/hash.hpp"

namespace cipherids {

namespace {

using nlohmann::json;

// Typed field extraction with strict unknown-key detection per section.
class Section {
public:
    Section(const json& j, std::string name) : name_(std::move(name)) {
        if (!j.is_object()) throw Error(Errc::type_error, name_ + " must be an object");
        for (auto it = j.begin(); it != j.end(); ++it) remaining_.emplace(it.key(), &it.value());
    }

    template <typename T>
    void get(const char* key, T& out, const char* kind) {
        auto it = remaining_.find(key);
        if (it == remaining_.end()) return; // keep default
        const json& v = *it->second;
        bool ok = false;
        if constexpr (std::is_same_v<T, bool>) {
            ok = v.is_boolean();
        } else if constexpr (std::is_same_v<T, double>) {
            ok = v.is_number();
        } else if constexpr (std::is_same_v<T, std::string>) {
            ok = v.is_string();
        } else {
            ok = v.is_number_integer();
        }
        if (!ok)
            throw Error(Errc::type_error, "config key '" + name_ + "." + key + "' expects " + kind);
        out = v.get<T>();
        remaining_.erase(it);
    }

    const json* take_object(const char* key) {
        auto it = remaining_.find(key);
        if (it == remaining_.end()) return nullptr;
        const json* v = it->second;
        remaining_.erase(it);
        return v;
    }

    void finish() const {
        if (!remaining_.empty())
            throw Error(Errc::unknown_key,
                        "unknown config key '" + name_ + "." + remaining_.begin()->first + "'");
    }

private:
    std::string name_;
    std::map<std::string, const json*> remaining_;
};

} // namespace

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(Errc::io_error, "config is not valid JSON: " + std::string(e.what()));
    }

    PipelineConfig cfg = default_config();

    Section root(j, "config");
    {
        std::int64_t seed = static_cast<std::int64_t>(cfg.seed);
        root.get("seed", seed, "integer");
        cfg.seed = static_cast<std::uint64_t>(seed);
    }
    if (const json* paths = root.take_object("paths")) {
        Section s(*paths, "paths");
        s.get("schema", cfg.paths.schema, "string");
        s.get("key", cfg.paths.key, "string");
        s.get("tokenizer", cfg.paths.tokenizer, "string");
        s.finish();
    }
    if (const json* cipher = root.take_object("cipher")) {
        Section s(*cipher, "cipher");
        s.get("shift", cfg.cipher_shift, "integer");
        s.finish();
    }
    if (const json* tok = root.take_object("tokenizer")) {
        Section s(*tok, "tokenizer");
        s.get("vocab_limit", cfg.tokenizer_vocab_limit, "integer");
        s.get("min_frequency", cfg.tokenizer_min_frequency, "integer");
        s.get("lowercase", cfg.normalize_lowercase, "boolean");
        s.get("strip_punctuation", cfg.normalize_strip_punctuation, "boolean");
        s.finish();
    }
    if (const json* seq = root.take_object("sequence")) {
        Section s(*seq, "sequence");
        s.get("max_len", cfg.max_len, "integer");
        s.get("chunk_size", cfg.chunk_size, "integer");
        s.get("eval_fraction", cfg.eval_fraction, "number");
        s.finish();
    }
    if (const json* model = root.take_object("model")) {
        Section s(*model, "model");
        s.get("d_model", cfg.model.d_model, "integer");
        s.get("n_heads", cfg.model.n_heads, "integer");
        s.get("n_layers", cfg.model.n_layers, "integer");
        s.get("d_ff", cfg.model.d_ff, "integer");
        s.get("dropout_p", cfg.model.dropout_p, "number");
        s.get("n_classes", cfg.model.n_classes, "integer");
        s.finish();
    }
    if (const json* train = root.take_object("train")) {
        Section s(*train, "train");
        s.get("learning_rate", cfg.train.learning_rate, "number");
        s.get("beta1", cfg.train.beta1, "number");
        s.get("beta2", cfg.train.beta2, "number");
        s.get("adam_eps", cfg.train.adam_eps, "number");
        s.get("batch_size", cfg.train.batch_size, "integer");
        s.get("epochs", cfg.train.epochs, "integer");
        s.get("mlm_mask_prob", cfg.train.mlm_mask_prob, "number");
        s.get("class_weighting", cfg.train.class_weighting, "boolean");
        s.finish();
    }
    root.finish();

    cfg.model.max_len = cfg.max_len;
    cfg.train.seed = cfg.seed;
    cfg.config_hash = hash_hex(hash_bytes(config_canonical_json(cfg)));
    std::cerr << "[cipherids] config " << path << " hash " << cfg.config_hash << "\n";
    return cfg;
}

std::string config_canonical_json(const PipelineConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["paths"] = {{"schema", cfg.paths.schema},
                  {"key", cfg.paths.key},
                  {"tokenizer", cfg.paths.tokenizer}};
    j["cipher"] = {{"shift", cfg.cipher_shift}};
    j["tokenizer"] = {{"vocab_limit", cfg.tokenizer_vocab_limit},
                      {"min_frequency", cfg.tokenizer_min_frequency},
                      {"lowercase", cfg.normalize_lowercase},
                      {"strip_punctuation", cfg.normalize_strip_punctuation}};
    j["sequence"] = {{"max_len", cfg.max_len},
                     {"chunk_size", cfg.chunk_size},
                     {"eval_fraction", cfg.eval_fraction}};
    j["model"] = {{"d_model", cfg.model.d_model},     {"n_heads", cfg.model.n_heads},
                  {"n_layers", cfg.model.n_layers},   {"d_ff", cfg.model.d_ff},
                  {"dropout_p", cfg.model.dropout_p}, {"n_classes", cfg.model.n_classes}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"adam_eps", cfg.train.adam_eps},
                  {"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},
                  {"mlm_mask_prob", cfg.train.mlm_mask_prob},
                  {"class_weighting", cfg.train.class_weighting}};
    return j.dump(); // nlohmann objects are key-sorted, so this is canonical
}

} // namespace cipherids
