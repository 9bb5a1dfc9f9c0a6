#include "tppkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tppkit/tensor.hpp"

namespace tppkit::lik {

double weighted_f1(const std::vector<int>& predictions, const std::vector<int>& truth,
                   int num_marks) {
    if (predictions.size() != truth.size()) throw shape_error("weighted_f1: length mismatch");
    if (predictions.empty()) throw value_error("weighted_f1: empty input");
    std::vector<double> tp(num_marks, 0), fp(num_marks, 0), fn(num_marks, 0),
        support(num_marks, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        int t = truth[i], p = predictions[i];
        if (t < 0 || t >= num_marks || p < 0 || p >= num_marks)
            throw value_error("weighted_f1: label out of range");
        support[t] += 1;
        if (p == t) {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn[t] += 1;
        }
    }
    double total = static_cast<double>(truth.size());
    double acc = 0;
    for (int m = 0; m < num_marks; ++m) {
        if (support[m] == 0) continue;
        double denom = 2 * tp[m] + fp[m] + fn[m];
        double f1 = denom > 0 ? 2 * tp[m] / denom : 0.0;
        acc += f1 * support[m] / total;
    }
    return acc;
}

namespace {

// AUC for one mark from (score, label) pairs using midranks.
std::optional<double> mark_auc(std::vector<std::pair<double, std::uint8_t>>& items) {
    std::size_t n = items.size();
    std::size_t pos = 0;
    for (const auto& it : items) pos += it.second ? 1 : 0;
    std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && items[j].first == items[i].first) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (items[k].second) rank_sum_pos += midrank;
        i = j;
    }
    double u = rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace

double weighted_roc_auc(const std::vector<std::vector<double>>& scores,
                        const std::vector<std::vector<std::uint8_t>>& truth, int num_marks) {
    if (scores.size() != truth.size()) throw shape_error("weighted_roc_auc: length mismatch");
    if (scores.empty()) throw value_error("weighted_roc_auc: empty input");
    double weight_total = 0, acc = 0;
    bool any = false;
    for (int m = 0; m < num_marks; ++m) {
        std::vector<std::pair<double, std::uint8_t>> items;
        items.reserve(scores.size());
        double support = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (static_cast<int>(scores[i].size()) != num_marks ||
                static_cast<int>(truth[i].size()) != num_marks)
                throw shape_error("weighted_roc_auc: row width mismatch");
            items.emplace_back(scores[i][m], truth[i][m]);
            support += truth[i][m] ? 1 : 0;
        }
        auto auc = mark_auc(items);
        if (!auc) continue;
        any = true;
        acc += *auc * support;
        weight_total += support;
    }
    if (!any) throw value_error("weighted_roc_auc: no mark has both classes");
    return acc / weight_total;
}

ProbeReport make_probe_report(double cp_nll, double model_nll, double cp_label,
                              double model_label, double margin) {
    ProbeReport r;
    r.cp_nll_per_time = cp_nll;
    r.model_nll_per_time = model_nll;
    r.cp_label_metric = cp_label;
    r.model_label_metric = model_label;
    r.margin = margin;
    bool nll_close = cp_nll <= model_nll + margin * std::abs(model_nll);
    bool label_close = cp_label >= model_label - margin * std::abs(model_label);
    r.verdict = nll_close && label_close ? "suspect" : "suitable";
    return r;
}

}  // namespace tppkit::lik
