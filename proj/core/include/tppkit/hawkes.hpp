#pragma once

#include <cstdint>
#include <vector>

#include "tppkit/events.hpp"
#include "tppkit/rng.hpp"

namespace tppkit::hawkes {

/// Multivariate exponential Hawkes parameters:
///   lambda_m(t) = mu_m + sum_n alpha_{m,n} sum_{t_i^n < t} exp(-beta_{m,n} (t - t_i^n))
struct HawkesParams {
    std::vector<double> mu;                       // (M), > 0
    std::vector<std::vector<double>> alpha;       // (M,M), >= 0
    std::vector<std::vector<double>> beta;        // (M,M), > 0

    int num_marks() const { return static_cast<int>(mu.size()); }
    void validate() const;
    /// Spectral radius of alpha/beta; >= 1 means non-stationary.
    double branching_spectral_radius() const;
};

/// The two benchmark parameterizations shipped with the toolkit.
HawkesParams preset_independent();
HawkesParams preset_dependent();
HawkesParams preset_by_name(const std::string& name);

/// lambda_m(t) for all marks, conditioning on events strictly before t.
std::vector<double> intensity(const HawkesParams& p, const EventSequence& history, double t);

/// Closed-form integral of the intensity over [a, b]:
///   mu_m (b-a) + sum_n (alpha/beta)_{m,n} sum_{t_i^n < b}
///     [exp(-beta max(a - t_i^n, 0)) - exp(-beta (b - t_i^n))]
std::vector<double> compensator(const HawkesParams& p, const EventSequence& history, double a,
                                double b);

/// Exact sampling on [window_lo, window_hi] via Ogata thinning; the
/// dominating rate is refreshed from the current total intensity at every
/// candidate (valid because the total intensity is non-increasing between
/// events for exponential kernels).
EventSequence simulate_thinning(const HawkesParams& p, double window_lo, double window_hi,
                                Rng& rng);

/// Dataset of `count` sequences with per-sequence derived seeds.
std::vector<EventSequence> simulate_dataset(const HawkesParams& p, double window_lo,
                                            double window_hi, std::size_t count,
                                            std::uint64_t seed);

/// sum_i log lambda_{m_i}(t_i) - sum_m Lambda_m(w-, w+), all closed form.
double exact_loglik(const HawkesParams& p, const EventSequence& seq);

}  // namespace tppkit::hawkes
