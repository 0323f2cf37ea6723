// Pipeline driver: pcap extraction -> cipher encoding -> tokenizer training
// -> sequence preparation -> pretraining / training -> evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "cipherids/bpe.hpp"
#include "cipherids/cipher.hpp"
#include "cipherids/csv_io.hpp"
#include "cipherids/error.hpp"
#include "cipherids/hash.hpp"
#include "cipherids/metrics.hpp"
#include "cipherids/model.hpp"
#include "cipherids/pcap.hpp"
#include "cipherids/pipeline_config.hpp"
#include "cipherids/schema.hpp"
#include "cipherids/sequence.hpp"
#include "cipherids/train.hpp"

using namespace cipherids;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string input;
    std::string output;
};

PipelineConfig resolve_config(const std::string& path) {
    if (path.empty()) {
        PipelineConfig cfg = default_config();
        cfg.model.max_len = cfg.max_len;
        cfg.train.seed = cfg.seed;
        cfg.config_hash = hash_hex(hash_bytes(config_canonical_json(cfg)));
        return cfg;
    }
    return parse_config(path);
}

std::string require(const std::string& value, const char* what) {
    if (value.empty())
        throw Error(Errc::missing_required, std::string(what) + " is required (flag or config)");
    return value;
}

NormalizationConfig norm_config(const PipelineConfig& cfg) {
    NormalizationConfig n;
    n.lowercase = cfg.normalize_lowercase;
    n.strip_punctuation = cfg.normalize_strip_punctuation;
    return n;
}

// Reads a feature CSV whose header matches either the full manifest schema
// or its pruned form; returns records plus the schema they conform to.
std::pair<std::vector<FeatureRecord>, FeatureSchema>
read_feature_csv(const std::string& path, const FeatureSchema& full) {
    const auto pruned = prune_features({}, full).second;
    try {
        return {read_csv(path, pruned), pruned};
    } catch (const Error& e) {
        if (e.code() != Errc::header_mismatch) throw;
    }
    return {read_csv(path, full), full};
}

// record-index -> attack name sidecar (CSV with header index,attack_type)
std::map<std::size_t, std::string> read_label_sidecar(const std::string& path) {
    const auto rows = parse_csv_file(path);
    if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "index" ||
        rows[0][1] != "attack_type")
        throw Error(Errc::header_mismatch, "label sidecar needs header index,attack_type");
    std::map<std::size_t, std::string> labels;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 2)
            throw Error(Errc::ragged_row, "label sidecar line " + std::to_string(i + 1));
        labels[static_cast<std::size_t>(std::stoull(rows[i][0]))] = rows[i][1];
    }
    return labels;
}

int run_extract(const CommonArgs& args, const std::string& schema_flag,
                const std::string& labels_path, bool no_prune) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const std::string schema_path =
        require(!schema_flag.empty() ? schema_flag : cfg.paths.schema, "schema manifest path");
    const FeatureSchema schema = load_schema_manifest(schema_path);

    std::vector<FeatureRecord> records = extract_features(args.input, schema);
    if (!labels_path.empty()) {
        const auto labels = read_label_sidecar(labels_path);
        for (std::size_t i = 0; i < records.size(); ++i) {
            auto it = labels.find(i);
            if (it != labels.end()) records[i].label = AttackLabel{0, it->second};
        }
    }

    if (no_prune) {
        write_csv(records, schema, args.output);
    } else {
        const auto [pruned_records, pruned_schema] = prune_features(records, schema);
        write_csv(pruned_records, pruned_schema, args.output);
    }
    std::cerr << "[cipherids] extracted " << records.size() << " records from " << args.input
              << "\n";
    return 0;
}

int run_keygen(const CommonArgs& args, int shift_flag) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const int shift = shift_flag >= 0 ? shift_flag : cfg.cipher_shift;
    const ShiftKeyPair key = keygen(shift);
    save_key(key, args.output);
    std::cerr << "[cipherids] wrote key (public shift " << key.public_shift << ") to "
              << args.output << "\n";
    return 0;
}

int run_encrypt(const CommonArgs& args, const std::string& schema_flag,
                const std::string& key_flag, bool no_inline_labels) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const FeatureSchema full = load_schema_manifest(
        require(!schema_flag.empty() ? schema_flag : cfg.paths.schema, "schema manifest path"));
    const ShiftKeyPair key =
        load_key(require(!key_flag.empty() ? key_flag : cfg.paths.key, "key file path"));

    auto [records, schema] = read_feature_csv(args.input, full);
    bool any_label = false;
    for (auto& record : records) {
        canonicalize_record(record, schema);
        if (record.label.name != kUnlabeledName) any_label = true;
    }

    std::ofstream out(args.output, std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot open " + args.output + " for writing");
    for (const auto& record : records) {
        out << encrypt_record(record, key).joined();
        if (any_label && !no_inline_labels) out << '\t' << record.label.name;
        out << '\n';
    }
    std::cerr << "[cipherids] encrypted " << records.size() << " records\n";
    return 0;
}

int run_decrypt(const CommonArgs& args, const std::string& schema_flag,
                const std::string& key_flag) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const FeatureSchema full = load_schema_manifest(
        require(!schema_flag.empty() ? schema_flag : cfg.paths.schema, "schema manifest path"));
    const ShiftKeyPair key =
        load_key(require(!key_flag.empty() ? key_flag : cfg.paths.key, "key file path"));
    const FeatureSchema pruned = prune_features({}, full).second;

    std::vector<std::string> labels;
    const auto lines = read_corpus_lines(args.input, &labels);

    std::vector<FeatureRecord> records;
    const FeatureSchema* schema = nullptr;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const CipherSentence sentence = CipherSentence::from_line(lines[i]);
        if (!schema) {
            if (sentence.words.size() == full.columns.size()) {
                schema = &full;
            } else if (sentence.words.size() == pruned.columns.size()) {
                schema = &pruned;
            } else {
                throw Error(Errc::shape_mismatch,
                            "line 1 has " + std::to_string(sentence.words.size()) +
                                " words; expected " + std::to_string(full.columns.size()) +
                                " (full) or " + std::to_string(pruned.columns.size()) +
                                " (pruned)");
            }
        }
        FeatureRecord record = decrypt_sentence(sentence, key, *schema);
        if (!labels[i].empty()) record.label = AttackLabel{0, labels[i]};
        records.push_back(std::move(record));
    }
    write_csv(records, schema ? *schema : pruned, args.output);
    std::cerr << "[cipherids] decrypted " << records.size() << " sentences\n";
    return 0;
}

int run_train_tokenizer(const CommonArgs& args, int vocab_flag, int minfreq_flag) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const int vocab_limit = vocab_flag > 0 ? vocab_flag : cfg.tokenizer_vocab_limit;
    const int min_frequency = minfreq_flag > 0 ? minfreq_flag : cfg.tokenizer_min_frequency;

    const auto lines = read_corpus_lines(args.input);
    const TokenizerModel model = train_bpe(lines, vocab_limit, min_frequency, norm_config(cfg));
    const std::string out_path =
        !args.output.empty() ? args.output : require(cfg.paths.tokenizer, "tokenizer output path");
    save_tokenizer(model, out_path);
    std::cerr << "[cipherids] tokenizer: " << model.vocab_size() << " tokens, "
              << model.merges.size() << " merges -> " << out_path << "\n";
    return 0;
}

int run_prepare(const CommonArgs& args, const std::string& tokenizer_flag, int max_len_flag,
                bool split, double eval_fraction_flag) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const std::string tok_path =
        require(!tokenizer_flag.empty() ? tokenizer_flag : cfg.paths.tokenizer, "tokenizer path");
    const TokenizerModel tokenizer = load_tokenizer(tok_path);
    const int max_len = max_len_flag > 0 ? max_len_flag : cfg.max_len;

    std::vector<std::string> line_labels;
    const auto lines = read_corpus_lines(args.input, &line_labels);

    bool any_label = false;
    for (const auto& name : line_labels) any_label = any_label || !name.empty();
    LabelMap label_map;
    if (any_label) {
        std::set<std::string> unique;
        for (const auto& name : line_labels) {
            if (name.empty())
                throw Error(Errc::missing_required, "corpus mixes labeled and unlabeled lines");
            unique.insert(name);
        }
        label_map = encode_labels({unique.begin(), unique.end()});
    }

    PreparedDataset ds;
    ds.max_len = static_cast<std::uint32_t>(max_len);
    ds.n_classes = any_label ? static_cast<std::uint32_t>(label_map.size())
                             : static_cast<std::uint32_t>(cfg.model.n_classes);
    ds.vocab_size = static_cast<std::uint32_t>(tokenizer.vocab_size());
    ds.tokenizer_hash = hash_file(tok_path);
    if (any_label) ds.labels = label_names(label_map);

    const NormalizationConfig norm = norm_config(cfg);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto ids = tokenizer.encode(normalize(lines[i], norm));
        TokenizedExample ex =
            pad_and_mask(ids, static_cast<std::size_t>(max_len), TokenizerModel::kPadId,
                         TokenizerModel::kBosId, TokenizerModel::kEosId);
        ex.label = any_label ? label_map.at(line_labels[i]) : -1;
        ds.examples.push_back(std::move(ex));
    }

    if (split) {
        const double fraction = eval_fraction_flag > 0 ? eval_fraction_flag : cfg.eval_fraction;
        auto [train_examples, eval_examples] = split_train_eval(ds.examples, fraction, cfg.seed);
        PreparedDataset train_ds = ds;
        train_ds.examples = std::move(train_examples);
        PreparedDataset eval_ds = ds;
        eval_ds.examples = std::move(eval_examples);
        save_dataset(train_ds, args.output + ".train.bin");
        save_dataset(eval_ds, args.output + ".eval.bin");
        std::cerr << "[cipherids] prepared " << train_ds.examples.size() << " train / "
                  << eval_ds.examples.size() << " eval examples\n";
    } else {
        save_dataset(ds, args.output);
        std::cerr << "[cipherids] prepared " << ds.examples.size() << " examples -> "
                  << args.output << "\n";
    }
    return 0;
}

ModelConfig model_config_for(const PipelineConfig& cfg, const PreparedDataset& ds) {
    ModelConfig mc = cfg.model;
    mc.vocab_size = static_cast<int>(ds.vocab_size);
    mc.max_len = static_cast<int>(ds.max_len);
    mc.n_classes = static_cast<int>(ds.n_classes);
    if (cfg.model.n_classes != static_cast<int>(ds.n_classes))
        std::cerr << "[cipherids] note: dataset defines " << ds.n_classes
                  << " classes; config said " << cfg.model.n_classes << "\n";
    return mc;
}

int run_pretrain(const CommonArgs& args, int epochs_flag) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const PreparedDataset ds = load_dataset(args.input);
    const ModelConfig mc = model_config_for(cfg, ds);

    TrainConfig tc = cfg.train;
    if (epochs_flag > 0) tc.epochs = epochs_flag;
    TransformerModel model(mc, ModelParameters::init(mc, cfg.seed));
    const auto history = pretrain_mlm(ds, model, tc);
    save_checkpoint(model, cfg.seed, args.output);
    write_history_csv(history, "pretrain", args.output + ".history.csv");
    std::cerr << "[cipherids] pretrained " << tc.epochs << " epochs -> " << args.output << "\n";
    return 0;
}

int run_train(const CommonArgs& args, const std::string& init_from, int epochs_flag,
              bool epoch_checkpoints) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const PreparedDataset ds = load_dataset(args.input);

    TrainConfig tc = cfg.train;
    if (epochs_flag > 0) tc.epochs = epochs_flag;
    if (epoch_checkpoints) tc.checkpoint_prefix = args.output;

    std::vector<EpochStats> history;
    if (!init_from.empty()) {
        TransformerModel model = load_checkpoint(init_from);
        if (model.config().vocab_size != static_cast<int>(ds.vocab_size))
            throw Error(Errc::vocab_mismatch, "checkpoint vocabulary disagrees with dataset");
        history = train_classifier(ds, model, tc);
        save_checkpoint(model, cfg.seed, args.output);
    } else {
        const ModelConfig mc = model_config_for(cfg, ds);
        TransformerModel model(mc, ModelParameters::init(mc, cfg.seed));
        history = train_classifier(ds, model, tc);
        save_checkpoint(model, cfg.seed, args.output);
    }
    write_history_csv(history, "train", args.output + ".history.csv");
    std::cerr << "[cipherids] trained " << tc.epochs << " epochs -> " << args.output << "\n";
    return 0;
}

int run_evaluate(const CommonArgs& args, const std::string& checkpoint_path, int chunk_flag) {
    const PipelineConfig cfg = resolve_config(args.config_path);
    const PreparedDataset ds = load_dataset(args.input);
    TransformerModel model = load_checkpoint(require(checkpoint_path, "checkpoint path"));

    const int chunk_size = chunk_flag > 0 ? chunk_flag : cfg.chunk_size;
    const auto chunks = chunk_eval(ds.examples, static_cast<std::size_t>(chunk_size));
    const EvaluationReport report = evaluate(chunks, model);

    save_report(report, ds.labels, cfg.config_hash, hash_hex(hash_file(checkpoint_path)),
                args.output);
    std::cout << "accuracy " << report.accuracy << " macro_precision " << report.macro_precision
              << " macro_recall " << report.macro_recall << " over " << report.total
              << " examples\n";
    return 0;
}

int run_predict(const CommonArgs& args, const std::string& checkpoint_path) {
    const PreparedDataset ds = load_dataset(args.input);
    TransformerModel model = load_checkpoint(require(checkpoint_path, "checkpoint path"));

    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        const auto& ex = ds.examples[i];
        const auto trace = model.encoder_forward(ex.input_ids, ex.attention_mask);
        const Vector probs = model.classify_forward(trace);
        Eigen::Index argmax = 0;
        const double top = probs.maxCoeff(&argmax);
        const std::string name = static_cast<std::size_t>(argmax) < ds.labels.size()
                                     ? ds.labels[static_cast<std::size_t>(argmax)]
                                     : std::to_string(argmax);
        std::cout << i << '\t' << name << '\t' << top << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline network-threat detection over cipher-encoded feature text"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string schema_flag, key_flag, labels_flag, tokenizer_flag, checkpoint_flag, init_flag;
    int shift_flag = -1, vocab_flag = 0, minfreq_flag = 0, max_len_flag = 0, epochs_flag = 0,
        chunk_flag = 0;
    double eval_fraction_flag = 0.0;
    bool no_prune = false, no_inline_labels = false, split = false, epoch_checkpoints = false;

    auto add_common = [&](CLI::App* cmd, bool needs_input, bool needs_output) {
        cmd->add_option("-c,--config", args.config_path, "pipeline config file (JSON)");
        if (needs_input) cmd->add_option("-i,--input", args.input, "input path")->required();
        if (needs_output) cmd->add_option("-o,--output", args.output, "output path")->required();
    };

    CLI::App* extract = app.add_subcommand("extract", "dissect a pcap capture into a feature CSV");
    add_common(extract, true, true);
    extract->add_option("--schema", schema_flag, "schema manifest override");
    extract->add_option("--labels", labels_flag, "label sidecar CSV (index,attack_type)");
    extract->add_flag("--no-prune", no_prune, "keep all 61 columns");

    CLI::App* kg = app.add_subcommand("keygen", "write a cipher key file");
    add_common(kg, false, true);
    kg->add_option("--shift", shift_flag, "public shift in [0, 26)");

    CLI::App* enc = app.add_subcommand("encrypt", "encode a feature CSV as cipher sentences");
    add_common(enc, true, true);
    enc->add_option("--schema", schema_flag, "schema manifest override");
    enc->add_option("--key", key_flag, "key file override");
    enc->add_flag("--no-inline-labels", no_inline_labels, "write sentences without labels");

    CLI::App* dec = app.add_subcommand("decrypt", "decode cipher sentences back to a CSV");
    add_common(dec, true, true);
    dec->add_option("--schema", schema_flag, "schema manifest override");
    dec->add_option("--key", key_flag, "key file override");

    CLI::App* tt = app.add_subcommand("train-tokenizer", "train the byte-level BPE tokenizer");
    add_common(tt, true, false);
    tt->add_option("-o,--output", args.output, "vocab file path");
    tt->add_option("--vocab-limit", vocab_flag, "vocabulary limit V");
    tt->add_option("--min-frequency", minfreq_flag, "pair frequency floor F");

    CLI::App* prep = app.add_subcommand("prepare", "tokenize a corpus into model inputs");
    add_common(prep, true, true);
    prep->add_option("--tokenizer", tokenizer_flag, "vocab file override");
    prep->add_option("--max-len", max_len_flag, "sequence length L");
    prep->add_flag("--split", split, "write <out>.train.bin / <out>.eval.bin");
    prep->add_option("--eval-fraction", eval_fraction_flag, "eval fraction for --split");

    CLI::App* pre = app.add_subcommand("pretrain", "masked-language-model pretraining");
    add_common(pre, true, true);
    pre->add_option("--epochs", epochs_flag, "epoch count override");

    CLI::App* tr = app.add_subcommand("train", "supervised classifier training");
    add_common(tr, true, true);
    tr->add_option("--init-from", init_flag, "start from a checkpoint");
    tr->add_option("--epochs", epochs_flag, "epoch count override");
    tr->add_flag("--epoch-checkpoints", epoch_checkpoints, "write a checkpoint per epoch");

    CLI::App* ev = app.add_subcommand("evaluate", "run inference and write a report");
    add_common(ev, true, true);
    ev->add_option("--checkpoint", checkpoint_flag, "model checkpoint")->required();
    ev->add_option("--chunk-size", chunk_flag, "evaluation chunk size");

    CLI::App* pr = app.add_subcommand("predict", "print per-record top class and probability");
    add_common(pr, true, false);
    pr->add_option("--checkpoint", checkpoint_flag, "model checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help() << "\n";
        return 2;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        if (extract->parsed()) return run_extract(args, schema_flag, labels_flag, no_prune);
        if (kg->parsed()) return run_keygen(args, shift_flag);
        if (enc->parsed()) return run_encrypt(args, schema_flag, key_flag, no_inline_labels);
        if (dec->parsed()) return run_decrypt(args, schema_flag, key_flag);
        if (tt->parsed()) return run_train_tokenizer(args, vocab_flag, minfreq_flag);
        if (prep->parsed())
            return run_prepare(args, tokenizer_flag, max_len_flag, split, eval_fraction_flag);
        if (pre->parsed()) return run_pretrain(args, epochs_flag);
        if (tr->parsed()) return run_train(args, init_flag, epochs_flag, epoch_checkpoints);
        if (ev->parsed()) return run_evaluate(args, checkpoint_flag, chunk_flag);
        if (pr->parsed()) return run_predict(args, checkpoint_flag);
    } catch (const Error& e) {
        std::cerr << "error: " << stage << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << stage << ": " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help() << "\n";
    return 2;
}
