#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cipherids/metrics.hpp"
#include "cipherids/model.hpp"
#include "cipherids/sequence.hpp"

namespace cipherids {

struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 42;
    double mlm_mask_prob = 0.15;
    bool class_weighting = false;
    std::string checkpoint_prefix; // when nonempty, write per-epoch checkpoints

    void validate() const;
};

// Adaptive-moment optimizer with bias correction. A step with all-zero
// gradients and zero initial moments leaves parameters unchanged.
class AdamOptimizer {
public:
    AdamOptimizer(const ModelConfig& cfg, const TrainConfig& tc);
    void step(ModelParameters& params, ModelParameters& grads);

private:
    TrainConfig tc_;
    ModelParameters m_;
    ModelParameters v_;
    std::int64_t t_ = 0;
};

// Dynamic MLM masking: every real non-special token is selected
// independently with probability mask_prob, keyed by (seed, epoch, example
// index, position) so selections differ across epochs but replay exactly.
// Selected tokens become MASK 80% of the time, a random non-special vocab id
// 10%, and stay unchanged 10%.
struct MaskDecision {
    std::vector<std::int32_t> masked_ids;
    std::vector<int> positions;
    std::vector<std::int32_t> targets; // original ids, aligned with positions
};
MaskDecision dynamic_mask(const TokenizedExample& example, double mask_prob, int epoch,
                          std::uint64_t seed, std::uint64_t example_index, int vocab_size);

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

// Minimizes mean cross-entropy over masked positions. Deterministic under
// cfg.seed. Throws VocabMismatch when tokenizer and model vocabularies
// disagree.
std::vector<EpochStats> pretrain_mlm(const PreparedDataset& dataset, TransformerModel& model,
                                     const TrainConfig& cfg);

// Supervised training of the classification head (and the whole stack) with
// cross-entropy, optional inverse-frequency class weights, per-epoch
// checkpoints when configured.
std::vector<EpochStats> train_classifier(const PreparedDataset& dataset, TransformerModel& model,
                                         const TrainConfig& cfg);

// Inference over evaluation chunks (dropout off), argmax predictions,
// metrics per the standard formulas. Rejects an empty evaluation set.
EvaluationReport evaluate(const std::vector<EvalChunk>& chunks, const TransformerModel& model);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& split,
                       const std::string& path);

} // namespace cipherids
