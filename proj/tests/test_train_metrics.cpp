#include <doctest.h>

#include <cmath>
#include <random>

#include "cipherids/bpe.hpp"
#include "cipherids/error.hpp"
#include "cipherids/train.hpp"
#include "testutil.hpp"

using namespace cipherids;

namespace {

// Three-class fixture where the class is a function of one distinguishing
// token: class c examples always contain token 5 + c.
PreparedDataset separable_dataset(int per_class, std::uint64_t seed) {
    PreparedDataset ds;
    ds.max_len = 10;
    ds.n_classes = 3;
    ds.vocab_size = 20;
    ds.labels = {"alpha", "beta", "gamma"};
    std::mt19937_64 rng(seed);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < per_class; ++i) {
            std::vector<std::int32_t> ids;
            ids.push_back(5 + c);
            const int fill = 1 + static_cast<int>(rng() % 5);
            for (int k = 0; k < fill; ++k)
                ids.push_back(10 + static_cast<std::int32_t>(rng() % 8));
            TokenizedExample ex = pad_and_mask(ids, ds.max_len, TokenizerModel::kPadId,
                                               TokenizerModel::kBosId, TokenizerModel::kEosId);
            ex.label = c;
            ds.examples.push_back(std::move(ex));
        }
    }
    return ds;
}

ModelConfig fixture_config(const PreparedDataset& ds) {
    ModelConfig cfg;
    cfg.vocab_size = static_cast<int>(ds.vocab_size);
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 2;
    cfg.d_ff = 32;
    cfg.dropout_p = 0.0;
    cfg.max_len = static_cast<int>(ds.max_len);
    cfg.n_classes = static_cast<int>(ds.n_classes);
    return cfg;
}

double mean_classification_loss(const TransformerModel& model, const PreparedDataset& ds) {
    double total = 0.0;
    for (const auto& ex : ds.examples) {
        const auto trace = model.encoder_forward(ex.input_ids, ex.attention_mask);
        const Vector probs = model.classify_forward(trace);
        total += -std::log(probs(ex.label));
    }
    return total / static_cast<double>(ds.examples.size());
}

double mean_mlm_loss(const TransformerModel& model, const PreparedDataset& ds,
                     const TrainConfig& cfg) {
    double total = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        const auto decision = dynamic_mask(ds.examples[i], cfg.mlm_mask_prob, 0, cfg.seed, i,
                                           model.config().vocab_size);
        if (decision.positions.empty()) continue;
        const auto trace =
            model.encoder_forward(decision.masked_ids, ds.examples[i].attention_mask);
        const Matrix probs = model.mlm_forward(trace, decision.positions);
        for (std::size_t r = 0; r < decision.positions.size(); ++r) {
            total += -std::log(probs(static_cast<Eigen::Index>(r), decision.targets[r]));
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

} // namespace

TEST_CASE("dynamic masking: rate, determinism, epoch variation") {
    SUBCASE("probability zero masks nothing") {
        const auto ds = separable_dataset(2, 1);
        const auto d = dynamic_mask(ds.examples[0], 0.0, 0, 42, 0, 20);
        CHECK(d.positions.empty());
        CHECK(d.masked_ids == ds.examples[0].input_ids);
    }
    SUBCASE("same key replays identically, different epochs differ") {
        const auto ds = separable_dataset(4, 2);
        const auto a = dynamic_mask(ds.examples[1], 0.5, 3, 42, 1, 20);
        const auto b = dynamic_mask(ds.examples[1], 0.5, 3, 42, 1, 20);
        CHECK(a.masked_ids == b.masked_ids);
        CHECK(a.positions == b.positions);

        bool any_difference = false;
        for (int epoch = 0; epoch < 8 && !any_difference; ++epoch) {
            const auto c = dynamic_mask(ds.examples[1], 0.5, epoch, 42, 1, 20);
            if (c.positions != a.positions) any_difference = true;
        }
        CHECK(any_difference);
    }
    SUBCASE("specials are never selected and targets record originals") {
        const auto ds = separable_dataset(4, 3);
        const auto d = dynamic_mask(ds.examples[0], 1.0, 0, 7, 0, 20);
        for (std::size_t i = 0; i < d.positions.size(); ++i) {
            const int pos = d.positions[i];
            CHECK(ds.examples[0].input_ids[static_cast<std::size_t>(pos)] ==
                  d.targets[i]);
            CHECK(d.targets[i] >= TokenizerModel::kNumSpecials);
        }
        // with prob 1 every real non-special token is selected
        std::size_t real_plain = 0;
        for (std::size_t p = 0; p < ds.examples[0].input_ids.size(); ++p)
            if (ds.examples[0].attention_mask[p] &&
                ds.examples[0].input_ids[p] >= TokenizerModel::kNumSpecials)
                ++real_plain;
        CHECK(d.positions.size() == real_plain);
    }
    SUBCASE("binomial bound: 1000 tokens at 0.15 select within [100, 200]") {
        TokenizedExample ex = pad_and_mask(std::vector<std::int32_t>(1000, 9), 1002, 0, 1, 2);
        const auto d = dynamic_mask(ex, 0.15, 0, 1234, 0, 20);
        CHECK(d.positions.size() >= 100);
        CHECK(d.positions.size() <= 200);
    }
}

TEST_CASE("adam with zero gradients is a no-op") {
    const auto ds = separable_dataset(2, 4);
    const ModelConfig cfg = fixture_config(ds);
    TrainConfig tc;
    tc.learning_rate = 0.1;
    TransformerModel model(cfg, ModelParameters::init(cfg, 5));
    const ModelParameters before = model.params();

    AdamOptimizer opt(cfg, tc);
    ModelParameters grads = ModelParameters::zeros(cfg);
    opt.step(model.params(), grads);

    ModelParameters after = model.params();
    ModelParameters b = before;
    auto ra = tensor_refs(b);
    auto rb = tensor_refs(after);
    for (std::size_t i = 0; i < ra.size(); ++i)
        for (Eigen::Index k = 0; k < ra[i].rows * ra[i].cols; ++k)
            CHECK(ra[i].data[k] == rb[i].data[k]);
}

TEST_CASE("initial classification loss sits at ln(C) for random init") {
    PreparedDataset ds = separable_dataset(10, 6);
    ds.n_classes = 15; // widen the head; fixture labels only use 0..2
    ModelConfig cfg = fixture_config(ds);
    cfg.n_classes = 15;
    TransformerModel model(cfg, ModelParameters::init(cfg, 7));
    const double loss = mean_classification_loss(model, ds);
    const double expected = std::log(15.0);
    CHECK(loss == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("separable three-class fixture trains to 0.95 accuracy inside 30 epochs") {
    const auto ds = separable_dataset(20, 8);
    const ModelConfig cfg = fixture_config(ds);
    TrainConfig tc;
    tc.learning_rate = 1e-2;
    tc.batch_size = 8;
    tc.epochs = 30;
    tc.seed = 11;
    TransformerModel model(cfg, ModelParameters::init(cfg, 11));
    const auto history = train_classifier(ds, model, tc);
    REQUIRE(!history.empty());
    bool reached = false;
    for (const auto& s : history) reached = reached || s.accuracy >= 0.95;
    CHECK(reached);
    CHECK(history.back().accuracy >= 0.95);
}

TEST_CASE("same seed trains to bitwise-identical parameters") {
    const auto ds = separable_dataset(6, 9);
    const ModelConfig cfg = fixture_config(ds);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 4;
    tc.epochs = 3;
    tc.seed = 21;

    TransformerModel m1(cfg, ModelParameters::init(cfg, 21));
    TransformerModel m2(cfg, ModelParameters::init(cfg, 21));
    const auto h1 = train_classifier(ds, m1, tc);
    const auto h2 = train_classifier(ds, m2, tc);
    for (std::size_t i = 0; i < h1.size(); ++i) {
        CHECK(h1[i].loss == h2[i].loss);
        CHECK(h1[i].accuracy == h2[i].accuracy);
    }
    ModelParameters p1 = m1.params();
    ModelParameters p2 = m2.params();
    auto r1 = tensor_refs(p1);
    auto r2 = tensor_refs(p2);
    for (std::size_t i = 0; i < r1.size(); ++i)
        for (Eigen::Index k = 0; k < r1[i].rows * r1[i].cols; ++k)
            CHECK(r1[i].data[k] == r2[i].data[k]);
}

TEST_CASE("labels outside the class range are rejected") {
    auto ds = separable_dataset(2, 10);
    ds.examples[0].label = 7; // > n_classes
    const ModelConfig cfg = fixture_config(ds);
    TrainConfig tc;
    tc.epochs = 1;
    TransformerModel model(cfg, ModelParameters::init(cfg, 1));
    try {
        train_classifier(ds, model, tc);
        FAIL("expected LabelOutOfRange");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::label_out_of_range);
    }
}

TEST_CASE("mlm pretraining: ln(V) start, halved loss on the toy corpus, determinism") {
    // ten fixed sentences of deterministic token runs, so masked positions
    // are predictable from context
    PreparedDataset ds;
    ds.max_len = 10;
    ds.n_classes = 3;
    ds.vocab_size = 20;
    ds.labels = {"alpha", "beta", "gamma"};
    for (int i = 0; i < 10; ++i) {
        // three distinct token runs; any unmasked real token identifies the run
        std::vector<std::int32_t> ids;
        for (int k = 0; k < 6; ++k) ids.push_back(5 + 3 * (i % 3) + (k % 3));
        TokenizedExample ex = pad_and_mask(ids, ds.max_len, TokenizerModel::kPadId,
                                           TokenizerModel::kBosId, TokenizerModel::kEosId);
        ex.label = i % 3;
        ds.examples.push_back(std::move(ex));
    }
    ModelConfig cfg = fixture_config(ds);
    cfg.n_layers = 1;
    TrainConfig tc;
    tc.learning_rate = 1e-2;
    tc.batch_size = 1;
    tc.epochs = 50;
    tc.seed = 31;
    tc.mlm_mask_prob = 0.25;

    TransformerModel model(cfg, ModelParameters::init(cfg, 31));
    const double initial = mean_mlm_loss(model, ds, tc);
    CHECK(initial == doctest::Approx(std::log(20.0)).epsilon(0.05));

    const auto history = pretrain_mlm(ds, model, tc);
    REQUIRE(history.size() == 50);
    CHECK(history.back().loss < 0.5 * initial);

    TransformerModel model2(cfg, ModelParameters::init(cfg, 31));
    const auto history2 = pretrain_mlm(ds, model2, tc);
    for (std::size_t i = 0; i < history.size(); ++i) CHECK(history[i].loss == history2[i].loss);
}

TEST_CASE("vocabulary mismatch between dataset and model is caught") {
    auto ds = separable_dataset(2, 13);
    ds.vocab_size = 999;
    ModelConfig cfg = fixture_config(ds);
    cfg.vocab_size = 20;
    TrainConfig tc;
    tc.epochs = 1;
    TransformerModel model(cfg, ModelParameters::init(cfg, 1));
    try {
        pretrain_mlm(ds, model, tc);
        FAIL("expected VocabMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::vocab_mismatch);
    }
}

TEST_CASE("metrics: worked binary case") {
    // class 1 is the positive class: TP=9, TN=1, FP=1, FN=1
    std::vector<int> truth, pred;
    for (int i = 0; i < 9; ++i) {
        truth.push_back(1);
        pred.push_back(1);
    }
    truth.push_back(0);
    pred.push_back(0); // TN
    truth.push_back(0);
    pred.push_back(1); // FP
    truth.push_back(1);
    pred.push_back(0); // FN
    const auto report = compute_metrics(truth, pred, 2);
    CHECK(report.accuracy == doctest::Approx(10.0 / 12.0).epsilon(1e-4));
    CHECK(report.per_class[1].tp == 9);
    CHECK(report.per_class[1].tn == 1);
    CHECK(report.per_class[1].fp == 1);
    CHECK(report.per_class[1].fn == 1);
    CHECK(report.per_class[1].precision == doctest::Approx(0.9));
    CHECK(report.per_class[1].recall == doctest::Approx(0.9));
}

TEST_CASE("metrics: perfect predictions score 1.0 everywhere") {
    const std::vector<int> labels{0, 1, 2, 1, 0, 2, 2};
    const auto report = compute_metrics(labels, labels, 3);
    CHECK(report.accuracy == 1.0);
    for (const auto& m : report.per_class) {
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
    }
    CHECK(report.macro_precision == 1.0);
    CHECK(report.macro_recall == 1.0);
}

TEST_CASE("metrics agree exactly with the brute-force oracle") {
    std::mt19937_64 rng(17);
    for (int n_classes : {2, 5, 15}) {
        std::vector<int> truth, pred;
        for (int i = 0; i < 1000; ++i) {
            truth.push_back(static_cast<int>(rng() % n_classes));
            pred.push_back(static_cast<int>(rng() % n_classes));
        }
        const auto report = compute_metrics(truth, pred, n_classes);
        const auto oracle = testutil::oracle_metrics(truth, pred, n_classes);
        CHECK(report.accuracy == oracle.accuracy);
        CHECK(report.macro_precision == oracle.macro_precision);
        CHECK(report.macro_recall == oracle.macro_recall);
        for (int c = 0; c < n_classes; ++c) {
            CHECK(report.per_class[c].precision == oracle.precision[c]);
            CHECK(report.per_class[c].recall == oracle.recall[c]);
            for (int k = 0; k < n_classes; ++k)
                CHECK(report.confusion[c][k] == oracle.confusion[c][k]);
        }
        // row/column sums match the per-class true/predicted counts
        std::int64_t total = 0;
        for (int c = 0; c < n_classes; ++c)
            for (int k = 0; k < n_classes; ++k) total += report.confusion[c][k];
        CHECK(total == 1000);
    }
}

TEST_CASE("metrics input validation") {
    CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 2), Error);
    CHECK_THROWS_AS(compute_metrics({0, 5}, {0, 1}, 2), Error);
    // degenerate class: never true, never predicted
    const auto report = compute_metrics({0, 0}, {0, 0}, 2);
    CHECK(report.per_class[1].precision == 0.0);
    CHECK(report.per_class[1].precision_degenerate);
    CHECK(report.per_class[1].recall_degenerate);
}

TEST_CASE("evaluation: fixture accuracy, chunk invariance, empty rejection") {
    const auto ds = separable_dataset(20, 8);
    const ModelConfig cfg = fixture_config(ds);
    TrainConfig tc;
    tc.learning_rate = 1e-2;
    tc.batch_size = 8;
    tc.epochs = 30;
    tc.seed = 11;
    TransformerModel model(cfg, ModelParameters::init(cfg, 11));
    const auto history = train_classifier(ds, model, tc);

    const auto whole = evaluate(chunk_eval(ds.examples, ds.examples.size()), model);
    const auto chunked = evaluate(chunk_eval(ds.examples, 7), model);
    CHECK(whole.accuracy == chunked.accuracy);
    CHECK(whole.confusion == chunked.confusion);
    CHECK(whole.macro_precision == chunked.macro_precision);
    CHECK(whole.macro_recall == chunked.macro_recall);

    // evaluating the training set reproduces the fixture's accuracy bound
    REQUIRE(!history.empty());
    CHECK(whole.accuracy >= 0.95);

    CHECK_THROWS_AS(evaluate({}, model), Error);
    CHECK_THROWS_AS(evaluate(chunk_eval({}, 5), model), Error);
}

TEST_CASE("class weighting keeps training on an imbalanced set") {
    PreparedDataset ds = separable_dataset(12, 15);
    // unbalance: drop most of class 2
    std::vector<TokenizedExample> kept;
    int class2 = 0;
    for (auto& ex : ds.examples) {
        if (ex.label == 2 && class2++ >= 2) continue;
        kept.push_back(ex);
    }
    ds.examples = std::move(kept);

    const ModelConfig cfg = fixture_config(ds);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 4;
    tc.epochs = 2;
    tc.class_weighting = true;
    TransformerModel model(cfg, ModelParameters::init(cfg, 16));
    const auto history = train_classifier(ds, model, tc);
    for (const auto& s : history) CHECK(std::isfinite(s.loss));
}
