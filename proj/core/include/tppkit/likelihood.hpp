#pragma once

#include <vector>

#include "tppkit/events.hpp"
#include "tppkit/graph.hpp"

namespace tppkit::lik {

using ad::NodePtr;
using ad::Tensor;

/// What the likelihood needs from a model, per inter-event interval
/// (t_{i-1}, t_i]: the per-mark intensity at the event and the per-mark
/// compensator over the interval.
struct IntervalTerm {
    NodePtr lambda;      // (M) at t_i
    NodePtr big_lambda;  // (M) integral over (t_{i-1}, t_i]
};

struct SequenceTerms {
    std::vector<IntervalTerm> events;  // one per event, in order
    NodePtr tail_big_lambda;           // (M) over (t_N, w+]; (w-, w+] when N == 0
};

/// p_m = lambda_m * exp(-sum_n Lambda_n), evaluated in log space with a
/// 1e-30 intensity floor.
std::vector<double> conditional_density(const std::vector<double>& lambda,
                                        const std::vector<double>& big_lambda_all);

struct Loglik {
    NodePtr node;                       // scalar log-likelihood
    std::vector<double> per_event;      // log p at each event (diagnostic)
    double value() const { return node->value.item(); }
};

/// Categorical form: sum_i log p_{m_i}(t_i) minus the tail compensator.
Loglik loglik_multiclass(const SequenceTerms& terms, const EventSequence& seq);

/// Binary form: the multi-class terms over present marks plus
/// sum_i sum_{m absent} log(1 - p_m(t_i)), with p clamped to 1 - 1e-12.
Loglik loglik_multilabel(const SequenceTerms& terms, const EventSequence& seq);

/// Mean over sequences of (-loglik) / (w+ - w-).
double nll_per_time(const std::vector<double>& logliks,
                    const std::vector<double>& window_lengths);

}  // namespace tppkit::lik
