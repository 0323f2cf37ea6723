#include "cipherids/metrics.hpp"

#include <fstream>

#include <json.hpp>

#include "cipherids/error.hpp"

namespace cipherids {

EvaluationReport compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 int n_classes) {
    if (truth.size() != predicted.size())
        throw Error(Errc::length_mismatch, "truth has " + std::to_string(truth.size()) +
                                               " labels, predictions " +
                                               std::to_string(predicted.size()));
    if (n_classes < 1) throw Error(Errc::invalid_argument, "n_classes must be >= 1");

    EvaluationReport report;
    report.total = truth.size();
    report.confusion.assign(static_cast<std::size_t>(n_classes),
                            std::vector<std::int64_t>(static_cast<std::size_t>(n_classes), 0));
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i];
        const int p = predicted[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
            throw Error(Errc::label_out_of_range,
                        "label pair (" + std::to_string(t) + ", " + std::to_string(p) +
                            ") outside [0, " + std::to_string(n_classes) + ")");
        ++report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        if (t == p) ++correct;
    }
    report.accuracy = report.total == 0
                          ? 0.0
                          : static_cast<double>(correct) / static_cast<double>(report.total);

    const std::int64_t n = static_cast<std::int64_t>(report.total);
    report.per_class.resize(static_cast<std::size_t>(n_classes));
    double precision_sum = 0.0;
    double recall_sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        ClassMetrics& m = report.per_class[static_cast<std::size_t>(c)];
        std::int64_t row_sum = 0; // true count of class c
        std::int64_t col_sum = 0; // predicted count of class c
        for (int k = 0; k < n_classes; ++k) {
            row_sum += report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
            col_sum += report.confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
        }
        m.tp = report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
        m.fn = row_sum - m.tp;
        m.fp = col_sum - m.tp;
        m.tn = n - m.tp - m.fn - m.fp;
        if (m.tp + m.fp > 0) {
            m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
        } else {
            m.precision_degenerate = true;
        }
        if (m.tp + m.fn > 0) {
            m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
        } else {
            m.recall_degenerate = true;
        }
        precision_sum += m.precision;
        recall_sum += m.recall;
    }
    report.macro_precision = precision_sum / static_cast<double>(n_classes);
    report.macro_recall = recall_sum / static_cast<double>(n_classes);
    return report;
}

std::string report_to_json(const EvaluationReport& report,
                           const std::vector<std::string>& label_names,
                           const std::string& config_hash, const std::string& checkpoint_hash) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["checkpoint_hash"] = checkpoint_hash;
    j["total"] = report.total;
    j["accuracy"] = report.accuracy;
    j["macro_precision"] = report.macro_precision;
    j["macro_recall"] = report.macro_recall;
    j["confusion"] = report.confusion;
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        const ClassMetrics& m = report.per_class[c];
        nlohmann::json item{{"label", c < label_names.size() ? label_names[c]
                                                             : std::to_string(c)},
                            {"tp", m.tp},
                            {"fp", m.fp},
                            {"fn", m.fn},
                            {"tn", m.tn},
                            {"precision", m.precision},
                            {"recall", m.recall}};
        if (m.precision_degenerate) item["precision_degenerate"] = true;
        if (m.recall_degenerate) item["recall_degenerate"] = true;
        classes.push_back(std::move(item));
    }
    j["per_class"] = std::move(classes);
    // published full-dataset reference figures; desk-scale runs are not
    // expected to reach them
    j["reference_non_binding"] = {{"accuracy", 0.99}, {"precision", 0.91}, {"recall", 0.89}};
    return j.dump(2);
}

void save_report(const EvaluationReport& report, const std::vector<std::string>& label_names,
                 const std::string& config_hash, const std::string& checkpoint_hash,
                 const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");
    out << report_to_json(report, label_names, config_hash, checkpoint_hash) << "\n";
}

} // namespace cipherids
