#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cipherids {

struct ClassMetrics {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;
    double recall = 0.0;
    bool precision_degenerate = false; // TP + FP == 0
    bool recall_degenerate = false;    // TP + FN == 0
};

struct EvaluationReport {
    std::vector<std::vector<std::int64_t>> confusion; // rows = true, cols = predicted
    std::size_t total = 0;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
};

// One-vs-rest TP/TN/FP/FN per class; precision TP/(TP+FP), recall
// TP/(TP+FN), accuracy = correct/total. Zero denominators report 0 with the
// degenerate flag set. Macro values are unweighted class means.
EvaluationReport compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 int n_classes);

// Report file: JSON with the confusion matrix, all metrics, config hash,
// checkpoint hash, and the non-binding published reference figures.
void save_report(const EvaluationReport& report, const std::vector<std::string>& label_names,
                 const std::string& config_hash, const std::string& checkpoint_hash,
                 const std::string& path);

std::string report_to_json(const EvaluationReport& report,
                           const std::vector<std::string>& label_names,
                           const std::string& config_hash, const std::string& checkpoint_hash);

} // namespace cipherids
