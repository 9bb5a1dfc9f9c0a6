#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tppkit::lik {

/// Support-weighted mean of per-class F1 scores.
double weighted_f1(const std::vector<int>& predictions, const std::vector<int>& truth,
                   int num_marks);

/// Per-mark ROC-AUC via the Mann-Whitney rank statistic with midrank tie
/// correction, averaged with weights equal to each mark's positive count.
/// Marks lacking both a positive and a negative are skipped.
double weighted_roc_auc(const std::vector<std::vector<double>>& scores,
                        const std::vector<std::vector<std::uint8_t>>& truth, int num_marks);

struct MetricsReport {
    double nll_per_time = 0;
    std::optional<double> weighted_f1;       // multi-class
    std::optional<double> weighted_roc_auc;  // multi-label
    std::vector<double> per_sequence_loglik;
    std::size_t num_sequences = 0;
    std::size_t num_events = 0;
};

struct ProbeReport {
    double cp_nll_per_time = 0;
    double model_nll_per_time = 0;
    double cp_label_metric = 0;
    double model_label_metric = 0;
    double margin = 0;
    std::string verdict;  // "suitable" | "suspect"
};

/// suspect iff the conditional-Poisson run is within `margin` (relative) of
/// the full model on both the NLL/time and the label metric.
ProbeReport make_probe_report(double cp_nll, double model_nll, double cp_label,
                              double model_label, double margin);

}  // namespace tppkit::lik
