#include "cipherids/train.hpp"

#include <cassert>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "cipherids/bpe.hpp"
#include "cipherids/error.hpp"
#include "cipherids/rng.hpp"

namespace cipherids {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw Error(Errc::invalid_argument, "learning rate must be > 0");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw Error(Errc::invalid_argument, "betas must be in (0, 1)");
    if (adam_eps <= 0.0) throw Error(Errc::invalid_argument, "adam eps must be > 0");
    if (batch_size < 1) throw Error(Errc::invalid_argument, "batch size must be >= 1");
    if (epochs < 1) throw Error(Errc::invalid_argument, "epochs must be >= 1");
    if (mlm_mask_prob < 0.0 || mlm_mask_prob > 1.0)
        throw Error(Errc::invalid_argument, "mlm_mask_prob must be in [0, 1]");
}

AdamOptimizer::AdamOptimizer(const ModelConfig& cfg, const TrainConfig& tc)
    : tc_(tc), m_(ModelParameters::zeros(cfg)), v_(ModelParameters::zeros(cfg)) {}

void AdamOptimizer::step(ModelParameters& params, ModelParameters& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(tc_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(tc_.beta2, static_cast<double>(t_));
    auto p_refs = tensor_refs(params);
    auto g_refs = tensor_refs(grads);
    auto m_refs = tensor_refs(m_);
    auto v_refs = tensor_refs(v_);
    for (std::size_t i = 0; i < p_refs.size(); ++i) {
        const Eigen::Index count = p_refs[i].rows * p_refs[i].cols;
        double* p = p_refs[i].data;
        const double* g = g_refs[i].data;
        double* m = m_refs[i].data;
        double* v = v_refs[i].data;
        for (Eigen::Index k = 0; k < count; ++k) {
            m[k] = tc_.beta1 * m[k] + (1.0 - tc_.beta1) * g[k];
            v[k] = tc_.beta2 * v[k] + (1.0 - tc_.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] -= tc_.learning_rate * m_hat / (std::sqrt(v_hat) + tc_.adam_eps);
        }
    }
}

MaskDecision dynamic_mask(const TokenizedExample& example, double mask_prob, int epoch,
                          std::uint64_t seed, std::uint64_t example_index, int vocab_size) {
    MaskDecision out;
    out.masked_ids = example.input_ids;
    if (vocab_size <= TokenizerModel::kNumSpecials)
        throw Error(Errc::vocab_mismatch, "vocabulary holds no maskable tokens");

    const std::uint64_t base =
        mix64(mix64(stage_seed(seed, "mlm-mask"), static_cast<std::uint64_t>(epoch)),
              example_index);
    const int n_plain = vocab_size - TokenizerModel::kNumSpecials;
    for (std::size_t pos = 0; pos < example.input_ids.size(); ++pos) {
        if (!example.attention_mask[pos]) continue;
        const std::int32_t id = example.input_ids[pos];
        if (id < TokenizerModel::kNumSpecials) continue; // BOS/EOS/PAD stay untouched
        const std::uint64_t h = mix64(base, static_cast<std::uint64_t>(pos));
        const double select = static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
        if (select >= mask_prob) continue;

        out.positions.push_back(static_cast<int>(pos));
        out.targets.push_back(id);
        const std::uint64_t h2 = mix64(h, 0x6d61736bULL);
        const double action = static_cast<double>(h2 >> 11) * (1.0 / 9007199254740992.0);
        if (action < 0.8) {
            out.masked_ids[pos] = TokenizerModel::kMaskId;
        } else if (action < 0.9) {
            const std::uint64_t h3 = mix64(h, 0x72616e64ULL);
            out.masked_ids[pos] = TokenizerModel::kNumSpecials +
                                  static_cast<std::int32_t>(h3 % static_cast<std::uint64_t>(n_plain));
        } // else: keep the original token, but still predict it
    }
    return out;
}

namespace {

constexpr double kLogFloor = 1e-300;

void check_vocab(const PreparedDataset& ds, const TransformerModel& model) {
    if (static_cast<int>(ds.vocab_size) != model.config().vocab_size)
        throw Error(Errc::vocab_mismatch,
                    "dataset vocabulary " + std::to_string(ds.vocab_size) +
                        " disagrees with model vocabulary " +
                        std::to_string(model.config().vocab_size));
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, const char* stage,
                                     int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    DetRng rng(mix64(stage_seed(seed, stage), static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    return order;
}

void maybe_checkpoint(const TransformerModel& model, const TrainConfig& cfg, int epoch) {
    if (cfg.checkpoint_prefix.empty()) return;
    save_checkpoint(model, cfg.seed,
                    cfg.checkpoint_prefix + ".epoch" + std::to_string(epoch) + ".ckpt");
}

} // namespace

std::vector<EpochStats> pretrain_mlm(const PreparedDataset& dataset, TransformerModel& model,
                                     const TrainConfig& cfg) {
    cfg.validate();
    check_vocab(dataset, model);
    if (dataset.examples.empty()) throw Error(Errc::empty_corpus, "no examples to pretrain on");

    AdamOptimizer optimizer(model.config(), cfg);
    ModelParameters grads = ModelParameters::zeros(model.config());
    const std::uint64_t dropout_seed = stage_seed(cfg.seed, "mlm-dropout");

    std::vector<EpochStats> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(dataset.examples.size(), cfg.seed, "mlm-shuffle", epoch);
        double loss_sum = 0.0;
        std::int64_t masked_total = 0;
        std::int64_t correct_total = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));

            struct Pending {
                ForwardTrace trace;
                Matrix probs;
                MaskDecision decision;
            };
            std::vector<Pending> batch;
            std::int64_t batch_masked = 0;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t idx = order[i];
                const TokenizedExample& ex = dataset.examples[idx];
                MaskDecision decision =
                    dynamic_mask(ex, cfg.mlm_mask_prob, epoch, cfg.seed,
                                 static_cast<std::uint64_t>(idx), model.config().vocab_size);
                if (decision.positions.empty()) continue;

                ForwardOptions opts;
                opts.training = true;
                opts.rng_seed = mix64(dropout_seed,
                                      mix64(static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(idx)));
                Pending pending;
                pending.trace = model.encoder_forward(decision.masked_ids, ex.attention_mask, opts);
                pending.probs = model.mlm_forward(pending.trace, decision.positions);
                pending.decision = std::move(decision);
                batch_masked += static_cast<std::int64_t>(pending.decision.positions.size());
                batch.push_back(std::move(pending));
            }
            if (batch_masked == 0) continue;

            grads.set_zero();
            for (const Pending& pending : batch) {
                BackwardSignal signal;
                for (std::size_t row = 0; row < pending.decision.positions.size(); ++row) {
                    const std::int32_t target = pending.decision.targets[row];
                    const double p = std::max(
                        pending.probs(static_cast<Eigen::Index>(row), target), kLogFloor);
                    loss_sum += -std::log(p);
                    const Eigen::Index argmax = [&] {
                        Eigen::Index best = 0;
                        pending.probs.row(static_cast<Eigen::Index>(row)).maxCoeff(&best);
                        return best;
                    }();
                    if (argmax == target) ++correct_total;
                    Vector dlogits =
                        pending.probs.row(static_cast<Eigen::Index>(row)).transpose();
                    dlogits(target) -= 1.0;
                    dlogits /= static_cast<double>(batch_masked);
                    signal.mlm_dlogits.emplace_back(pending.decision.positions[row],
                                                    std::move(dlogits));
                }
                model.backward(pending.trace, signal, grads);
            }
            masked_total += batch_masked;
            optimizer.step(model.params(), grads);
            assert(model.params().all_finite());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = masked_total ? loss_sum / static_cast<double>(masked_total) : 0.0;
        stats.accuracy =
            masked_total ? static_cast<double>(correct_total) / static_cast<double>(masked_total)
                         : 0.0;
        history.push_back(stats);
        std::cerr << "[cipherids] mlm epoch " << epoch << " loss " << stats.loss << " acc "
                  << stats.accuracy << "\n";
        maybe_checkpoint(model, cfg, epoch);
    }
    return history;
}

std::vector<EpochStats> train_classifier(const PreparedDataset& dataset, TransformerModel& model,
                                         const TrainConfig& cfg) {
    cfg.validate();
    check_vocab(dataset, model);
    if (dataset.examples.empty()) throw Error(Errc::empty_corpus, "no examples to train on");

    const int n_classes = model.config().n_classes;
    std::vector<std::int64_t> class_counts(static_cast<std::size_t>(n_classes), 0);
    for (const auto& ex : dataset.examples) {
        if (ex.label < 0 || ex.label >= n_classes)
            throw Error(Errc::label_out_of_range,
                        "label " + std::to_string(ex.label) + " outside [0, " +
                            std::to_string(n_classes) + ")");
        ++class_counts[static_cast<std::size_t>(ex.label)];
    }

    std::vector<double> class_weights(static_cast<std::size_t>(n_classes), 1.0);
    if (cfg.class_weighting) {
        const double total = static_cast<double>(dataset.examples.size());
        for (int c = 0; c < n_classes; ++c) {
            const auto count = class_counts[static_cast<std::size_t>(c)];
            class_weights[static_cast<std::size_t>(c)] =
                count > 0 ? total / (static_cast<double>(n_classes) * static_cast<double>(count))
                          : 0.0;
        }
    }

    AdamOptimizer optimizer(model.config(), cfg);
    ModelParameters grads = ModelParameters::zeros(model.config());
    const std::uint64_t dropout_seed = stage_seed(cfg.seed, "cls-dropout");

    std::vector<EpochStats> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(dataset.examples.size(), cfg.seed, "cls-shuffle", epoch);
        double loss_sum = 0.0;
        double weight_sum = 0.0;
        std::int64_t correct = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));

            struct Pending {
                ForwardTrace trace;
                Vector probs;
                std::int32_t label;
                double weight;
            };
            std::vector<Pending> batch;
            double batch_weight = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t idx = order[i];
                const TokenizedExample& ex = dataset.examples[idx];
                ForwardOptions opts;
                opts.training = true;
                opts.rng_seed = mix64(dropout_seed,
                                      mix64(static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(idx)));
                Pending pending;
                pending.trace = model.encoder_forward(ex.input_ids, ex.attention_mask, opts);
                pending.probs = model.classify_forward(pending.trace);
                pending.label = ex.label;
                pending.weight = class_weights[static_cast<std::size_t>(ex.label)];
                batch_weight += pending.weight;
                batch.push_back(std::move(pending));
            }
            if (batch_weight <= 0.0) continue;

            grads.set_zero();
            for (const Pending& pending : batch) {
                const double p = std::max(pending.probs(pending.label), kLogFloor);
                loss_sum += pending.weight * -std::log(p);
                weight_sum += pending.weight;
                Eigen::Index argmax = 0;
                pending.probs.maxCoeff(&argmax);
                if (argmax == pending.label) ++correct;

                BackwardSignal signal;
                signal.cls_dlogits = pending.probs;
                signal.cls_dlogits(pending.label) -= 1.0;
                signal.cls_dlogits *= pending.weight / batch_weight;
                model.backward(pending.trace, signal, grads);
            }
            optimizer.step(model.params(), grads);
            assert(model.params().all_finite());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = weight_sum > 0.0 ? loss_sum / weight_sum : 0.0;
        stats.accuracy = dataset.examples.empty()
                             ? 0.0
                             : static_cast<double>(correct) /
                                   static_cast<double>(dataset.examples.size());
        history.push_back(stats);
        std::cerr << "[cipherids] train epoch " << epoch << " loss " << stats.loss << " acc "
                  << stats.accuracy << "\n";
        maybe_checkpoint(model, cfg, epoch);
    }
    return history;
}

EvaluationReport evaluate(const std::vector<EvalChunk>& chunks, const TransformerModel& model) {
    std::size_t total = 0;
    for (const auto& chunk : chunks) total += chunk.examples.size();
    if (total == 0) throw Error(Errc::empty_eval_set, "evaluation set is empty");

    std::vector<int> truth;
    std::vector<int> predicted;
    truth.reserve(total);
    predicted.reserve(total);
    for (const auto& chunk : chunks) {
        for (const auto& ex : chunk.examples) {
            const ForwardTrace trace = model.encoder_forward(ex.input_ids, ex.attention_mask);
            const Vector probs = model.classify_forward(trace);
            Eigen::Index argmax = 0;
            probs.maxCoeff(&argmax);
            truth.push_back(ex.label);
            predicted.push_back(static_cast<int>(argmax));
        }
    }
    return compute_metrics(truth, predicted, model.config().n_classes);
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& split,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");
    out << "epoch,split,loss,accuracy\n";
    for (const auto& s : history)
        out << s.epoch << "," << split << "," << s.loss << "," << s.accuracy << "\n";
}

} // namespace cipherids
