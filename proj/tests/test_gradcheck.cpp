#include <doctest.h>

#include <cmath>

#include "cipherids/model.hpp"
#include "testutil.hpp"

using namespace cipherids;

// Central finite differences against the analytic backward on every
// parameter group of a small two-layer model, dropout active through frozen
// masks.

namespace {

struct GradCheckFixture {
    ModelConfig cfg;
    std::vector<std::int32_t> ids{1, 5, 6, 7, 2, 0};
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 0};
    std::int32_t cls_target = 2;
    std::vector<int> mlm_positions{1, 3};
    std::vector<std::int32_t> mlm_targets{9, 14};

    GradCheckFixture() {
        cfg.vocab_size = 20;
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.n_layers = 2;
        cfg.d_ff = 16;
        cfg.dropout_p = 0.1;
        cfg.max_len = 6;
        cfg.n_classes = 4;
    }

    double loss(TransformerModel& model, const ForwardTrace& mask_source) const {
        ForwardOptions opts;
        opts.training = true;
        opts.reuse_masks = &mask_source;
        const auto trace = model.encoder_forward(ids, mask, opts);
        const Vector probs = model.classify_forward(trace);
        double total = -std::log(probs(cls_target));
        const Matrix mlm = model.mlm_forward(trace, mlm_positions);
        for (std::size_t i = 0; i < mlm_positions.size(); ++i)
            total += -std::log(mlm(static_cast<Eigen::Index>(i), mlm_targets[i]));
        return total;
    }
};

} // namespace

TEST_CASE("analytic gradients match central finite differences within 1e-4") {
    GradCheckFixture fx;
    TransformerModel model(fx.cfg, ModelParameters::init(fx.cfg, 2024));

    ForwardOptions opts;
    opts.training = true;
    opts.rng_seed = 555;
    const ForwardTrace base = model.encoder_forward(fx.ids, fx.mask, opts);

    // analytic gradients from the fused softmax + cross-entropy signal
    BackwardSignal signal;
    signal.cls_dlogits = model.classify_forward(base);
    signal.cls_dlogits(fx.cls_target) -= 1.0;
    const Matrix mlm_probs = model.mlm_forward(base, fx.mlm_positions);
    for (std::size_t i = 0; i < fx.mlm_positions.size(); ++i) {
        Vector d = mlm_probs.row(static_cast<Eigen::Index>(i)).transpose();
        d(fx.mlm_targets[i]) -= 1.0;
        signal.mlm_dlogits.emplace_back(fx.mlm_positions[i], std::move(d));
    }
    ModelParameters grads = ModelParameters::zeros(fx.cfg);
    model.backward(base, signal, grads);

    const double h = 1e-3;
    auto param_refs = tensor_refs(model.params());
    auto grad_refs = tensor_refs(grads);
    REQUIRE(param_refs.size() == grad_refs.size());

    // per-tensor relative error in the two-norm, one bound per parameter group
    for (std::size_t t = 0; t < param_refs.size(); ++t) {
        double diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0;
        const Eigen::Index count = param_refs[t].rows * param_refs[t].cols;
        for (Eigen::Index i = 0; i < count; ++i) {
            double& slot = param_refs[t].data[i];
            const double saved = slot;
            slot = saved + h;
            const double up = fx.loss(model, base);
            slot = saved - h;
            const double down = fx.loss(model, base);
            slot = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grad_refs[t].data[i];
            diff_sq += (analytic - numeric) * (analytic - numeric);
            analytic_sq += analytic * analytic;
            numeric_sq += numeric * numeric;
        }
        const double rel = std::sqrt(diff_sq) /
                           std::max(std::sqrt(analytic_sq) + std::sqrt(numeric_sq), 1e-12);
        INFO("parameter group ", param_refs[t].name);
        CHECK(rel < 1e-4);
    }
}
