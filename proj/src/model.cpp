#include "cipherids/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cipherids/error.hpp"

namespace cipherids {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[8] = {'C', 'I', 'D', 'S', 'C', 'K', 'P', 'T'};
} // namespace

void ModelConfig::validate() const {
    if (vocab_size <= 0) throw Error(Errc::invalid_argument, "vocab_size must be positive");
    if (d_model <= 0 || d_model % 2 != 0)
        throw Error(Errc::invalid_argument, "d_model must be positive and even");
    if (n_heads <= 0 || d_model % n_heads != 0)
        throw Error(Errc::invalid_argument, "d_model must be divisible by n_heads");
    if (n_layers < 0) throw Error(Errc::invalid_argument, "n_layers must be >= 0");
    if (d_ff <= 0) throw Error(Errc::invalid_argument, "d_ff must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw Error(Errc::invalid_argument, "dropout_p must be in [0, 1)");
    if (max_len < 2) throw Error(Errc::invalid_argument, "max_len must be >= 2");
    if (n_classes < 1) throw Error(Errc::invalid_argument, "n_classes must be >= 1");
}

Matrix positional_encoding(int length, int d_model) {
    if (d_model <= 0 || d_model % 2 != 0)
        throw Error(Errc::invalid_argument, "positional encoding needs even d_model");
    Matrix pe(length, d_model);
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < d_model / 2; ++i) {
            const double denom =
                std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) / denom;
            pe(pos, 2 * i) = std::sin(angle);
            pe(pos, 2 * i + 1) = std::cos(angle);
        }
    }
    return pe;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_derivative(double x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

Matrix gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

Vector layer_norm(const Vector& x, const Vector& gain, const Vector& shift, double eps) {
    if (x.size() < 1) throw Error(Errc::invalid_argument, "layer_norm needs a nonempty vector");
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean(); // population variance
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    return (((x.array() - mean) * inv_sigma) * gain.array() + shift.array()).matrix();
}

Vector softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp();
    return e / e.sum();
}

AttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                     const std::vector<std::uint8_t>* key_mask) {
    if (q.cols() != k.cols())
        throw Error(Errc::shape_mismatch, "Q and K must share the feature dimension");
    if (k.rows() != v.rows())
        throw Error(Errc::shape_mismatch, "K and V must share the key count");
    if (key_mask && static_cast<Eigen::Index>(key_mask->size()) != k.rows())
        throw Error(Errc::shape_mismatch, "key mask length must equal the key count");

    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix scores = q * k.transpose() * scale;

    AttentionResult result;
    result.weights = Matrix::Zero(q.rows(), k.rows());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        double max_score = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < scores.cols(); ++c) {
            if (key_mask && !(*key_mask)[static_cast<std::size_t>(c)]) continue;
            max_score = std::max(max_score, scores(r, c));
        }
        if (!std::isfinite(max_score)) { // every key masked
            result.had_all_masked_row = true;
            continue;
        }
        double sum = 0.0;
        for (Eigen::Index c = 0; c < scores.cols(); ++c) {
            if (key_mask && !(*key_mask)[static_cast<std::size_t>(c)]) continue;
            const double e = std::exp(scores(r, c) - max_score);
            result.weights(r, c) = e;
            sum += e;
        }
        result.weights.row(r) /= sum;
    }
    result.output = result.weights * v;
    return result;
}

namespace {

LayerParams layer_zeros(const ModelConfig& cfg) {
    LayerParams p;
    p.wq = Matrix::Zero(cfg.d_model, cfg.d_model);
    p.wk = Matrix::Zero(cfg.d_model, cfg.d_model);
    p.wv = Matrix::Zero(cfg.d_model, cfg.d_model);
    p.wo = Matrix::Zero(cfg.d_model, cfg.d_model);
    p.bq = Vector::Zero(cfg.d_model);
    p.bk = Vector::Zero(cfg.d_model);
    p.bv = Vector::Zero(cfg.d_model);
    p.bo = Vector::Zero(cfg.d_model);
    p.w1 = Matrix::Zero(cfg.d_model, cfg.d_ff);
    p.b1 = Vector::Zero(cfg.d_ff);
    p.w2 = Matrix::Zero(cfg.d_ff, cfg.d_model);
    p.b2 = Vector::Zero(cfg.d_model);
    p.ln1_gain = Vector::Zero(cfg.d_model);
    p.ln1_shift = Vector::Zero(cfg.d_model);
    p.ln2_gain = Vector::Zero(cfg.d_model);
    p.ln2_shift = Vector::Zero(cfg.d_model);
    return p;
}

void fill_normal(Matrix& m, DetRng& rng, double stddev) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.gaussian(0.0, stddev);
}

} // namespace

ModelParameters ModelParameters::zeros(const ModelConfig& cfg) {
    ModelParameters p;
    p.token_embedding = Matrix::Zero(cfg.vocab_size, cfg.d_model);
    for (int l = 0; l < cfg.n_layers; ++l) p.layers.push_back(layer_zeros(cfg));
    p.classifier_w = Matrix::Zero(cfg.d_model, cfg.n_classes);
    p.classifier_b = Vector::Zero(cfg.n_classes);
    p.mlm_w = Matrix::Zero(cfg.d_model, cfg.vocab_size);
    p.mlm_b = Vector::Zero(cfg.vocab_size);
    return p;
}

ModelParameters ModelParameters::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParameters p = zeros(cfg);
    DetRng rng(stage_seed(seed, "model-init"));
    fill_normal(p.token_embedding, rng, kInitStd);
    for (auto& layer : p.layers) {
        fill_normal(layer.wq, rng, kInitStd);
        fill_normal(layer.wk, rng, kInitStd);
        fill_normal(layer.wv, rng, kInitStd);
        fill_normal(layer.wo, rng, kInitStd);
        fill_normal(layer.w1, rng, kInitStd);
        fill_normal(layer.w2, rng, kInitStd);
        layer.ln1_gain.setOnes();
        layer.ln2_gain.setOnes();
    }
    fill_normal(p.classifier_w, rng, kInitStd);
    fill_normal(p.mlm_w, rng, kInitStd);
    return p;
}

bool ModelParameters::all_finite() const {
    auto ok = [](const Matrix& m) { return m.allFinite(); };
    if (!ok(token_embedding) || !ok(classifier_w) || !ok(mlm_w)) return false;
    if (!classifier_b.allFinite() || !mlm_b.allFinite()) return false;
    for (const auto& l : layers) {
        if (!ok(l.wq) || !ok(l.wk) || !ok(l.wv) || !ok(l.wo) || !ok(l.w1) || !ok(l.w2))
            return false;
        if (!l.bq.allFinite() || !l.bk.allFinite() || !l.bv.allFinite() || !l.bo.allFinite() ||
            !l.b1.allFinite() || !l.b2.allFinite())
            return false;
        if (!l.ln1_gain.allFinite() || !l.ln1_shift.allFinite() || !l.ln2_gain.allFinite() ||
            !l.ln2_shift.allFinite())
            return false;
    }
    return true;
}

void ModelParameters::set_zero() {
    token_embedding.setZero();
    classifier_w.setZero();
    classifier_b.setZero();
    mlm_w.setZero();
    mlm_b.setZero();
    for (auto& l : layers) {
        l.wq.setZero();
        l.wk.setZero();
        l.wv.setZero();
        l.wo.setZero();
        l.bq.setZero();
        l.bk.setZero();
        l.bv.setZero();
        l.bo.setZero();
        l.w1.setZero();
        l.b1.setZero();
        l.w2.setZero();
        l.b2.setZero();
        l.ln1_gain.setZero();
        l.ln1_shift.setZero();
        l.ln2_gain.setZero();
        l.ln2_shift.setZero();
    }
}

std::vector<TensorRef> tensor_refs(ModelParameters& params) {
    std::vector<TensorRef> refs;
    auto add_m = [&refs](const std::string& name, Matrix& m) {
        refs.push_back({name, m.data(), m.rows(), m.cols()});
    };
    auto add_v = [&refs](const std::string& name, Vector& v) {
        refs.push_back({name, v.data(), v.size(), 1});
    };
    add_m("token_embedding", params.token_embedding);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        auto& layer = params.layers[l];
        add_m(prefix + "wq", layer.wq);
        add_v(prefix + "bq", layer.bq);
        add_m(prefix + "wk", layer.wk);
        add_v(prefix + "bk", layer.bk);
        add_m(prefix + "wv", layer.wv);
        add_v(prefix + "bv", layer.bv);
        add_m(prefix + "wo", layer.wo);
        add_v(prefix + "bo", layer.bo);
        add_m(prefix + "w1", layer.w1);
        add_v(prefix + "b1", layer.b1);
        add_m(prefix + "w2", layer.w2);
        add_v(prefix + "b2", layer.b2);
        add_v(prefix + "ln1_gain", layer.ln1_gain);
        add_v(prefix + "ln1_shift", layer.ln1_shift);
        add_v(prefix + "ln2_gain", layer.ln2_gain);
        add_v(prefix + "ln2_shift", layer.ln2_shift);
    }
    add_m("classifier_w", params.classifier_w);
    add_v("classifier_b", params.classifier_b);
    add_m("mlm_w", params.mlm_w);
    add_v("mlm_b", params.mlm_b);
    return refs;
}

namespace {

void validate_param_shapes(const ModelConfig& cfg, const ModelParameters& p) {
    if (p.token_embedding.rows() != cfg.vocab_size || p.token_embedding.cols() != cfg.d_model)
        throw Error(Errc::shape_mismatch, "embedding table shape disagrees with config");
    if (static_cast<int>(p.layers.size()) != cfg.n_layers)
        throw Error(Errc::shape_mismatch, "layer count disagrees with config");
    if (p.classifier_w.rows() != cfg.d_model || p.classifier_w.cols() != cfg.n_classes)
        throw Error(Errc::shape_mismatch, "classifier shape disagrees with config");
    if (p.mlm_w.rows() != cfg.d_model || p.mlm_w.cols() != cfg.vocab_size)
        throw Error(Errc::shape_mismatch, "mlm head shape disagrees with config");
}

// Row-wise layer norm over a [L x d] activation; returns the normalized
// output and stores x_hat / inv_sigma for backward.
Matrix layer_norm_rows(const Matrix& x, const Vector& gain, const Vector& shift, Matrix& x_hat,
                       Vector& inv_sigma) {
    Matrix y(x.rows(), x.cols());
    x_hat.resize(x.rows(), x.cols());
    inv_sigma.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_sigma(r) = inv;
        x_hat.row(r) = (x.row(r).array() - mean) * inv;
        y.row(r) = x_hat.row(r).cwiseProduct(gain.transpose()) + shift.transpose();
    }
    return y;
}

Matrix layer_norm_rows_backward(const Matrix& d_y, const Matrix& x_hat, const Vector& inv_sigma,
                                const Vector& gain, Vector& d_gain, Vector& d_shift) {
    Matrix d_x(d_y.rows(), d_y.cols());
    for (Eigen::Index r = 0; r < d_y.rows(); ++r) {
        d_gain += d_y.row(r).cwiseProduct(x_hat.row(r)).transpose();
        d_shift += d_y.row(r).transpose();
        const Eigen::RowVectorXd d_hat = d_y.row(r).cwiseProduct(gain.transpose());
        const double m1 = d_hat.mean();
        const double m2 = d_hat.cwiseProduct(x_hat.row(r)).mean();
        d_x.row(r) = inv_sigma(r) * (d_hat.array() - m1 - x_hat.row(r).array() * m2);
    }
    return d_x;
}

} // namespace

TransformerModel::TransformerModel(ModelConfig cfg, ModelParameters params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    validate_param_shapes(cfg_, params_);
    pe_ = positional_encoding(cfg_.max_len, cfg_.d_model);
}

Matrix TransformerModel::embed(const std::vector<std::int32_t>& ids) const {
    Matrix x(static_cast<Eigen::Index>(ids.size()), cfg_.d_model);
    for (std::size_t pos = 0; pos < ids.size(); ++pos) {
        const std::int32_t id = ids[pos];
        if (id < 0 || id >= cfg_.vocab_size)
            throw Error(Errc::id_out_of_range,
                        "token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(cfg_.vocab_size));
        x.row(static_cast<Eigen::Index>(pos)) =
            params_.token_embedding.row(id) + pe_.row(static_cast<Eigen::Index>(pos));
    }
    return x;
}

Matrix TransformerModel::dropout_mask(Eigen::Index rows, Eigen::Index cols, bool training,
                                      DetRng& rng) const {
    if (!training || cfg_.dropout_p == 0.0) return Matrix::Ones(rows, cols);
    Matrix mask(rows, cols);
    const double keep = 1.0 - cfg_.dropout_p;
    const double scale = 1.0 / keep;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            mask(r, c) = rng.unit_double() < keep ? scale : 0.0;
    return mask;
}

ForwardTrace TransformerModel::encoder_forward(const std::vector<std::int32_t>& ids,
                                               const std::vector<std::uint8_t>& mask,
                                               const ForwardOptions& opts) const {
    if (ids.empty() || ids.size() != mask.size())
        throw Error(Errc::shape_mismatch, "ids and mask must be nonempty and equal-length");
    if (ids.size() > static_cast<std::size_t>(cfg_.max_len))
        throw Error(Errc::shape_mismatch, "sequence longer than configured max_len");
    if (opts.reuse_masks) {
        const ForwardTrace& t = *opts.reuse_masks;
        if (!t.training || t.layers.size() != static_cast<std::size_t>(cfg_.n_layers) ||
            t.ids.size() != ids.size())
            throw Error(Errc::stale_trace, "mask-reuse trace does not match this forward");
    }

    const Eigen::Index L = static_cast<Eigen::Index>(ids.size());
    const int dk = cfg_.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    ForwardTrace trace;
    trace.ids = ids;
    trace.mask = mask;
    trace.training = opts.training;
    trace.rng_seed = opts.rng_seed;
    trace.embedded = embed(ids);

    DetRng rng(opts.rng_seed);
    Matrix x = trace.embedded;
    trace.layers.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const LayerParams& p = params_.layers[static_cast<std::size_t>(l)];
        ForwardTrace::Layer& t = trace.layers[static_cast<std::size_t>(l)];
        t.x_in = x;

        t.q = (x * p.wq).rowwise() + p.bq.transpose();
        t.k = (x * p.wk).rowwise() + p.bk.transpose();
        t.v = (x * p.wv).rowwise() + p.bv.transpose();

        t.concat_heads.resize(L, cfg_.d_model);
        t.head_weights.resize(static_cast<std::size_t>(cfg_.n_heads));
        t.head_all_masked.assign(static_cast<std::size_t>(cfg_.n_heads), false);
        for (int h = 0; h < cfg_.n_heads; ++h) {
            const auto qh = t.q.middleCols(h * dk, dk);
            const auto kh = t.k.middleCols(h * dk, dk);
            const auto vh = t.v.middleCols(h * dk, dk);
            Matrix scores = qh * kh.transpose() * scale;
            Matrix weights = Matrix::Zero(L, L);
            bool all_masked = false;
            for (Eigen::Index r = 0; r < L; ++r) {
                double max_score = -std::numeric_limits<double>::infinity();
                for (Eigen::Index c = 0; c < L; ++c)
                    if (mask[static_cast<std::size_t>(c)])
                        max_score = std::max(max_score, scores(r, c));
                if (!std::isfinite(max_score)) {
                    all_masked = true;
                    continue;
                }
                double sum = 0.0;
                for (Eigen::Index c = 0; c < L; ++c) {
                    if (!mask[static_cast<std::size_t>(c)]) continue;
                    const double e = std::exp(scores(r, c) - max_score);
                    weights(r, c) = e;
                    sum += e;
                }
                weights.row(r) /= sum;
            }
            t.head_all_masked[static_cast<std::size_t>(h)] = all_masked;
            t.concat_heads.middleCols(h * dk, dk).noalias() = weights * vh;
            t.head_weights[static_cast<std::size_t>(h)] = std::move(weights);
        }

        const Matrix attn = (t.concat_heads * p.wo).rowwise() + p.bo.transpose();
        t.drop1 = opts.reuse_masks ? opts.reuse_masks->layers[static_cast<std::size_t>(l)].drop1
                                   : dropout_mask(L, cfg_.d_model, opts.training, rng);
        t.sum1 = t.x_in + t.drop1.cwiseProduct(attn);
        t.ffn_in = layer_norm_rows(t.sum1, p.ln1_gain, p.ln1_shift, t.norm1_hat, t.norm1_inv_sigma);

        t.ffn_pre = (t.ffn_in * p.w1).rowwise() + p.b1.transpose();
        t.ffn_act = gelu(t.ffn_pre);
        const Matrix ffn_out = (t.ffn_act * p.w2).rowwise() + p.b2.transpose();
        t.drop2 = opts.reuse_masks ? opts.reuse_masks->layers[static_cast<std::size_t>(l)].drop2
                                   : dropout_mask(L, cfg_.d_model, opts.training, rng);
        t.sum2 = t.ffn_in + t.drop2.cwiseProduct(ffn_out);
        x = layer_norm_rows(t.sum2, p.ln2_gain, p.ln2_shift, t.norm2_hat, t.norm2_inv_sigma);
    }

    trace.hidden = x;
    trace.cls_drop = opts.reuse_masks
                         ? opts.reuse_masks->cls_drop
                         : dropout_mask(cfg_.d_model, 1, opts.training, rng).col(0);
    return trace;
}

Vector TransformerModel::classify_forward(const ForwardTrace& trace) const {
    if (trace.hidden.rows() < 1 || trace.hidden.cols() != cfg_.d_model)
        throw Error(Errc::shape_mismatch, "trace hidden state does not match config");
    const Vector pooled = trace.hidden.row(0).transpose().cwiseProduct(trace.cls_drop);
    const Vector logits = params_.classifier_w.transpose() * pooled + params_.classifier_b;
    return softmax(logits);
}

Matrix TransformerModel::mlm_forward(const ForwardTrace& trace,
                                     const std::vector<int>& positions) const {
    Matrix probs(static_cast<Eigen::Index>(positions.size()), cfg_.vocab_size);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const int pos = positions[i];
        if (pos < 0 || pos >= trace.hidden.rows() ||
            !trace.mask[static_cast<std::size_t>(pos)])
            throw Error(Errc::position_out_of_range,
                        "masked position " + std::to_string(pos) + " outside real tokens");
        const Vector logits =
            params_.mlm_w.transpose() * trace.hidden.row(pos).transpose() + params_.mlm_b;
        probs.row(static_cast<Eigen::Index>(i)) = softmax(logits).transpose();
    }
    return probs;
}

void TransformerModel::backward(const ForwardTrace& trace, const BackwardSignal& signal,
                                ModelParameters& grads) const {
    if (!trace.training)
        throw Error(Errc::stale_trace, "backward requires a training-mode forward trace");
    if (trace.layers.size() != static_cast<std::size_t>(cfg_.n_layers) ||
        trace.hidden.cols() != cfg_.d_model)
        throw Error(Errc::stale_trace, "trace does not match the current model shape");

    const Eigen::Index L = trace.hidden.rows();
    const int dk = cfg_.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    Matrix d_hidden = Matrix::Zero(L, cfg_.d_model);

    if (signal.cls_dlogits.size() > 0) {
        if (signal.cls_dlogits.size() != cfg_.n_classes)
            throw Error(Errc::shape_mismatch, "classifier gradient has wrong length");
        const Vector pooled = trace.hidden.row(0).transpose().cwiseProduct(trace.cls_drop);
        grads.classifier_w.noalias() += pooled * signal.cls_dlogits.transpose();
        grads.classifier_b += signal.cls_dlogits;
        const Vector d_pooled = params_.classifier_w * signal.cls_dlogits;
        d_hidden.row(0) += d_pooled.cwiseProduct(trace.cls_drop).transpose();
    }

    for (const auto& [pos, dlogits] : signal.mlm_dlogits) {
        if (pos < 0 || pos >= L)
            throw Error(Errc::position_out_of_range, "mlm gradient position out of range");
        if (dlogits.size() != cfg_.vocab_size)
            throw Error(Errc::shape_mismatch, "mlm gradient has wrong length");
        grads.mlm_w.noalias() += trace.hidden.row(pos).transpose() * dlogits.transpose();
        grads.mlm_b += dlogits;
        d_hidden.row(pos) += (params_.mlm_w * dlogits).transpose();
    }

    Matrix d_x = d_hidden;
    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
        const LayerParams& p = params_.layers[static_cast<std::size_t>(l)];
        LayerParams& g = grads.layers[static_cast<std::size_t>(l)];
        const ForwardTrace::Layer& t = trace.layers[static_cast<std::size_t>(l)];

        // LN2
        const Matrix d_sum2 = layer_norm_rows_backward(d_x, t.norm2_hat, t.norm2_inv_sigma,
                                                       p.ln2_gain, g.ln2_gain, g.ln2_shift);
        // FFN
        Matrix d_y1 = d_sum2;
        const Matrix d_ffn_out = t.drop2.cwiseProduct(d_sum2);
        g.w2.noalias() += t.ffn_act.transpose() * d_ffn_out;
        g.b2 += d_ffn_out.colwise().sum().transpose();
        const Matrix d_act = d_ffn_out * p.w2.transpose();
        const Matrix d_pre =
            d_act.cwiseProduct(t.ffn_pre.unaryExpr([](double v) { return gelu_derivative(v); }));
        g.w1.noalias() += t.ffn_in.transpose() * d_pre;
        g.b1 += d_pre.colwise().sum().transpose();
        d_y1.noalias() += d_pre * p.w1.transpose();

        // LN1
        const Matrix d_sum1 = layer_norm_rows_backward(d_y1, t.norm1_hat, t.norm1_inv_sigma,
                                                       p.ln1_gain, g.ln1_gain, g.ln1_shift);
        d_x = d_sum1; // residual path into the layer input
        const Matrix d_attn = t.drop1.cwiseProduct(d_sum1);

        // output projection
        g.wo.noalias() += t.concat_heads.transpose() * d_attn;
        g.bo += d_attn.colwise().sum().transpose();
        const Matrix d_concat = d_attn * p.wo.transpose();

        Matrix d_q = Matrix::Zero(L, cfg_.d_model);
        Matrix d_k = Matrix::Zero(L, cfg_.d_model);
        Matrix d_v = Matrix::Zero(L, cfg_.d_model);
        for (int h = 0; h < cfg_.n_heads; ++h) {
            const Matrix& weights = t.head_weights[static_cast<std::size_t>(h)];
            const auto qh = t.q.middleCols(h * dk, dk);
            const auto kh = t.k.middleCols(h * dk, dk);
            const auto vh = t.v.middleCols(h * dk, dk);
            const auto d_oh = d_concat.middleCols(h * dk, dk);

            const Matrix d_weights = d_oh * vh.transpose();
            d_v.middleCols(h * dk, dk).noalias() = weights.transpose() * d_oh;

            // softmax rows; rows with all-masked keys are all-zero and stay zero
            Matrix d_scores(L, L);
            for (Eigen::Index r = 0; r < L; ++r) {
                const double dot = d_weights.row(r).cwiseProduct(weights.row(r)).sum();
                d_scores.row(r) =
                    weights.row(r).cwiseProduct((d_weights.row(r).array() - dot).matrix());
            }
            d_q.middleCols(h * dk, dk).noalias() = d_scores * kh * scale;
            d_k.middleCols(h * dk, dk).noalias() = d_scores.transpose() * qh * scale;
        }

        g.wq.noalias() += t.x_in.transpose() * d_q;
        g.bq += d_q.colwise().sum().transpose();
        g.wk.noalias() += t.x_in.transpose() * d_k;
        g.bk += d_k.colwise().sum().transpose();
        g.wv.noalias() += t.x_in.transpose() * d_v;
        g.bv += d_v.colwise().sum().transpose();
        d_x.noalias() += d_q * p.wq.transpose();
        d_x.noalias() += d_k * p.wk.transpose();
        d_x.noalias() += d_v * p.wv.transpose();
    }

    for (std::size_t pos = 0; pos < trace.ids.size(); ++pos)
        grads.token_embedding.row(trace.ids[pos]) += d_x.row(static_cast<Eigen::Index>(pos));
}

namespace {

void put_u32le(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t take_u32le(std::istream& in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        const int c = in.get();
        if (c == EOF) throw Error(Errc::io_error, "checkpoint truncated");
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

void put_f32le(std::ostream& out, float f) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(f));
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32le(out, bits);
}

float take_f32le(std::istream& in) {
    const std::uint32_t bits = take_u32le(in);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

} // namespace

void save_checkpoint(const TransformerModel& model, std::uint64_t rng_seed,
                     const std::string& path) {
    ModelParameters params = model.params(); // tensor_refs needs mutable storage
    auto refs = tensor_refs(params);

    const ModelConfig& cfg = model.config();
    nlohmann::json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["rng_seed"] = rng_seed;
    manifest["config"] = {{"vocab_size", cfg.vocab_size}, {"d_model", cfg.d_model},
                          {"n_heads", cfg.n_heads},       {"n_layers", cfg.n_layers},
                          {"d_ff", cfg.d_ff},             {"dropout_p", cfg.dropout_p},
                          {"max_len", cfg.max_len},       {"n_classes", cfg.n_classes}};
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& ref : refs) {
        tensors.push_back({{"name", ref.name},
                           {"rows", ref.rows},
                           {"cols", ref.cols},
                           {"offset", offset}});
        offset += static_cast<std::uint64_t>(ref.rows * ref.cols);
    }
    manifest["tensors"] = std::move(tensors);
    const std::string manifest_text = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u32le(out, static_cast<std::uint32_t>(manifest_text.size()));
    out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
    for (const auto& ref : refs) {
        // row-major on disk regardless of in-memory layout
        for (Eigen::Index r = 0; r < ref.rows; ++r)
            for (Eigen::Index c = 0; c < ref.cols; ++c)
                put_f32le(out, static_cast<float>(ref.data[c * ref.rows + r]));
    }
    if (!out) throw Error(Errc::io_error, "write failed for " + path);
}

TransformerModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || !std::equal(magic, magic + 8, kCheckpointMagic))
        throw Error(Errc::io_error, "not a checkpoint file: " + path);
    const std::uint32_t manifest_len = take_u32le(in);
    std::string manifest_text(manifest_len, '\0');
    in.read(manifest_text.data(), manifest_len);
    if (in.gcount() != static_cast<std::streamsize>(manifest_len))
        throw Error(Errc::io_error, "checkpoint manifest truncated");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::io_error, std::string("checkpoint manifest parse error: ") + e.what());
    }
    const auto version = manifest.value("format_version", 0u);
    if (version != kCheckpointVersion)
        throw Error(Errc::version_mismatch, "checkpoint version " + std::to_string(version) +
                                                ", expected " + std::to_string(kCheckpointVersion));

    ModelConfig cfg;
    const auto& jc = manifest.at("config");
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    cfg.d_model = jc.at("d_model").get<int>();
    cfg.n_heads = jc.at("n_heads").get<int>();
    cfg.n_layers = jc.at("n_layers").get<int>();
    cfg.d_ff = jc.at("d_ff").get<int>();
    cfg.dropout_p = jc.at("dropout_p").get<double>();
    cfg.max_len = jc.at("max_len").get<int>();
    cfg.n_classes = jc.at("n_classes").get<int>();
    cfg.validate();

    ModelParameters params = ModelParameters::zeros(cfg);
    auto refs = tensor_refs(params);
    const auto& jt = manifest.at("tensors");
    if (jt.size() != refs.size())
        throw Error(Errc::shape_mismatch, "checkpoint tensor directory size mismatch");
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto& entry = jt[i];
        if (entry.at("name").get<std::string>() != refs[i].name ||
            entry.at("rows").get<Eigen::Index>() != refs[i].rows ||
            entry.at("cols").get<Eigen::Index>() != refs[i].cols)
            throw Error(Errc::shape_mismatch,
                        "checkpoint tensor " + refs[i].name + " has unexpected shape");
        for (Eigen::Index r = 0; r < refs[i].rows; ++r)
            for (Eigen::Index c = 0; c < refs[i].cols; ++c)
                refs[i].data[c * refs[i].rows + r] = static_cast<double>(take_f32le(in));
    }
    return TransformerModel(cfg, std::move(params));
}

} // namespace cipherids
