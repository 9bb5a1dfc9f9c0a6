#include "tppkit/likelihood.hpp"

#include <cmath>

#include "tppkit/decoders.hpp"

namespace tppkit::lik {

using namespace tppkit::ad;

std::vector<double> conditional_density(const std::vector<double>& lambda,
                                        const std::vector<double>& big_lambda_all) {
    if (lambda.size() != big_lambda_all.size())
        throw shape_error("conditional_density: length mismatch");
    double total = 0;
    for (double v : big_lambda_all) {
        if (v < 0) throw value_error("conditional_density: negative cumulative intensity");
        total += v;
    }
    std::vector<double> out(lambda.size());
    for (std::size_t m = 0; m < lambda.size(); ++m) {
        if (lambda[m] < 0) throw value_error("conditional_density: negative intensity");
        out[m] = std::exp(std::log(std::max(lambda[m], 1e-30)) - total);
    }
    return out;
}

namespace {

void check_terms(const SequenceTerms& terms, const EventSequence& seq) {
    if (terms.events.size() != seq.events.size())
        throw shape_error("loglik: one interval term per event required");
    if (!terms.tail_big_lambda) throw value_error("loglik: missing tail compensator");
}

// log of the selected intensity with the 1e-30 training floor
NodePtr log_mark_intensity(const NodePtr& lambda, int mark) {
    return log(clamp_min(dec::select_mark(lambda, mark), 1e-30));
}

}  // namespace

Loglik loglik_multiclass(const SequenceTerms& terms, const EventSequence& seq) {
    check_terms(terms, seq);
    Loglik out;
    NodePtr acc = negate(sum(terms.tail_big_lambda));
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const IntervalTerm& term = terms.events[i];
        NodePtr ev = nullptr;
        for (int mark : seq.events[i].labels) {
            auto lp = log_mark_intensity(term.lambda, mark);
            ev = ev ? add(ev, lp) : lp;
        }
        auto comp = sum(term.big_lambda);
        out.per_event.push_back(ev->value.item() - comp->value.item());
        acc = add(acc, sub(ev, comp));
    }
    out.node = acc;
    return out;
}

Loglik loglik_multilabel(const SequenceTerms& terms, const EventSequence& seq) {
    check_terms(terms, seq);
    Loglik base = loglik_multiclass(terms, seq);
    NodePtr acc = base.node;
    std::size_t m_count = terms.events.empty()
                              ? 0
                              : terms.events.front().lambda->value.size();
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const IntervalTerm& term = terms.events[i];
        std::vector<std::uint8_t> present(m_count, 0);
        for (int mark : seq.events[i].labels) present[mark] = 1;
        bool any_absent = false;
        Tensor absent_mask({m_count});
        for (std::size_t m = 0; m < m_count; ++m) {
            if (!present[m]) {
                absent_mask[m] = 1.0;
                any_absent = true;
            }
        }
        if (!any_absent) continue;
        auto log_lam = log(clamp_min(term.lambda, 1e-30));
        auto total = broadcast_scalar(sum(term.big_lambda), term.lambda->value.shape());
        auto p = exp(sub(log_lam, total));
        // density values can exceed 1; clamp before the log
        auto p_cl = negate(clamp_min(negate(p), -(1.0 - 1e-12)));
        auto contrib = sum(mul(log(rsub_const(1.0, p_cl)), constant(std::move(absent_mask))));
        acc = add(acc, contrib);
    }
    Loglik out;
    out.node = acc;
    out.per_event = base.per_event;
    return out;
}

double nll_per_time(const std::vector<double>& logliks,
                    const std::vector<double>& window_lengths) {
    if (logliks.size() != window_lengths.size())
        throw shape_error("nll_per_time: length mismatch");
    if (logliks.empty()) throw value_error("nll_per_time: empty dataset");
    double acc = 0;
    for (std::size_t i = 0; i < logliks.size(); ++i) {
        if (!(window_lengths[i] > 0)) throw value_error("nll_per_time: zero-length window");
        acc += -logliks[i] / window_lengths[i];
    }
    return acc / static_cast<double>(logliks.size());
}

}  // namespace tppkit::lik
