#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cipherids/rng.hpp"

namespace cipherids {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 256;
    int n_heads = 4;
    int n_layers = 4;
    int d_ff = 1024;
    double dropout_p = 0.1;
    int max_len = 256;
    int n_classes = 15;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;
};

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same argument).
Matrix positional_encoding(int length, int d_model);

double gelu(double x);
double gelu_derivative(double x);
Matrix gelu(const Matrix& x);

// Row-vector layer norm with population variance.
Vector layer_norm(const Vector& x, const Vector& gain, const Vector& shift, double eps);

struct AttentionResult {
    Matrix output;  // [rows(Q) x cols(V)]
    Matrix weights; // [rows(Q) x rows(K)]; masked key columns are exactly 0
    bool had_all_masked_row = false;
};

// softmax(Q Kᵀ / sqrt(d_k)) V with masked key positions excluded pre-softmax.
// A fully masked row yields a zero output row and sets the flag.
AttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                     const std::vector<std::uint8_t>* key_mask = nullptr);

struct LayerParams {
    Matrix wq, wk, wv, wo; // [d x d]
    Vector bq, bk, bv, bo; // [d]
    Matrix w1;             // [d x d_ff]
    Vector b1;             // [d_ff]
    Matrix w2;             // [d_ff x d]
    Vector b2;             // [d]
    Vector ln1_gain, ln1_shift, ln2_gain, ln2_shift; // [d]
};

struct ModelParameters {
    Matrix token_embedding; // [V x d]
    std::vector<LayerParams> layers;
    Matrix classifier_w; // [d x C]
    Vector classifier_b; // [C]
    Matrix mlm_w;        // [d x V]
    Vector mlm_b;        // [V]

    // Normal(0, 0.02) projections and embeddings, zero biases, unit layer
    // norm gains; draw order is fixed so checkpoints reproduce bitwise.
    static ModelParameters init(const ModelConfig& cfg, std::uint64_t seed);
    static ModelParameters zeros(const ModelConfig& cfg);

    bool all_finite() const;
    void set_zero();
};

// Stable-named view over every parameter tensor; shared by the optimizer,
// the checkpoint writer, and the finite-difference harness.
struct TensorRef {
    std::string name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols; // 1 for vectors
};
std::vector<TensorRef> tensor_refs(ModelParameters& params);

// Everything backward needs for exact gradients: per-layer activations and
// the dropout masks that were drawn.
struct ForwardTrace {
    struct Layer {
        Matrix x_in;
        Matrix q, k, v;
        std::vector<Matrix> head_weights; // per head [L x L]
        std::vector<bool> head_all_masked;
        Matrix concat_heads; // [L x d], pre output-projection
        Matrix drop1;        // dropout multiplier matrix (1/(1-p) or 0)
        Matrix sum1;         // residual + dropped attention
        Matrix norm1_hat;    // (sum1 - mean) * inv_sigma
        Vector norm1_inv_sigma;
        Matrix ffn_in;   // LN1 output
        Matrix ffn_pre;  // ffn_in * W1 + b1
        Matrix ffn_act;  // gelu(ffn_pre)
        Matrix drop2;
        Matrix sum2;
        Matrix norm2_hat;
        Vector norm2_inv_sigma;
    };

    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> mask;
    Matrix embedded; // embedding + PE
    std::vector<Layer> layers;
    Matrix hidden; // final encoder output [L x d]
    Vector cls_drop; // classifier dropout multiplier [d]
    bool training = false;
    std::uint64_t rng_seed = 0;
};

struct ForwardOptions {
    bool training = false;
    std::uint64_t rng_seed = 0;
    // Reuse the dropout draws of an earlier trace (exact replay; used by the
    // finite-difference gradient check).
    const ForwardTrace* reuse_masks = nullptr;
};

// Gradient signal entering from the heads: d(loss)/d(logits). Softmax +
// cross-entropy fusion happens in the training layer.
struct BackwardSignal {
    Vector cls_dlogits;                                // size C, or empty
    std::vector<std::pair<int, Vector>> mlm_dlogits;   // (position, dlogits[V])
};

class TransformerModel {
public:
    TransformerModel(ModelConfig cfg, ModelParameters params);

    const ModelConfig& config() const { return cfg_; }
    const ModelParameters& params() const { return params_; }
    ModelParameters& params() { return params_; }

    // Embedding + positional encoding, then n_layers of post-norm blocks:
    // x <- LN(x + Drop(MHA(x))); x <- LN(x + Drop(FFN(x))).
    ForwardTrace encoder_forward(const std::vector<std::int32_t>& ids,
                                 const std::vector<std::uint8_t>& mask,
                                 const ForwardOptions& opts = {}) const;

    // BOS-pooled classification head; probabilities over C classes.
    Vector classify_forward(const ForwardTrace& trace) const;

    // Per masked position, probabilities over the vocabulary. Row order
    // follows `positions`.
    Matrix mlm_forward(const ForwardTrace& trace, const std::vector<int>& positions) const;

    // Exact analytic gradients for every tensor, accumulated into `grads`.
    void backward(const ForwardTrace& trace, const BackwardSignal& signal,
                  ModelParameters& grads) const;

private:
    Matrix embed(const std::vector<std::int32_t>& ids) const;
    Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, bool training, DetRng& rng) const;

    ModelConfig cfg_;
    ModelParameters params_;
    Matrix pe_; // precomputed [max_len x d]
};

// Checkpoint: JSON manifest (config, tensor directory, format version, seed)
// followed by raw little-endian float32 tensors, row-major.
void save_checkpoint(const TransformerModel& model, std::uint64_t rng_seed,
                     const std::string& path);
TransformerModel load_checkpoint(const std::string& path);

Vector softmax(const Vector& logits);

} // namespace cipherids
