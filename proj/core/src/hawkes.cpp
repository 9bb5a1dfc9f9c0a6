#include "tppkit/hawkes.hpp"

#include <algorithm>
#include <cmath>

#include "tppkit/tensor.hpp"

namespace tppkit::hawkes {

void HawkesParams::validate() const {
    std::size_t m = mu.size();
    if (m == 0) throw value_error("HawkesParams: mu is empty");
    for (double v : mu)
        if (!(v > 0)) throw value_error("HawkesParams: mu entries must be positive");
    if (alpha.size() != m || beta.size() != m)
        throw value_error("HawkesParams: alpha/beta must be MxM");
    for (std::size_t i = 0; i < m; ++i) {
        if (alpha[i].size() != m || beta[i].size() != m)
            throw value_error("HawkesParams: alpha/beta must be MxM");
        for (std::size_t j = 0; j < m; ++j) {
            if (alpha[i][j] < 0) throw value_error("HawkesParams: alpha entries must be >= 0");
            if (!(beta[i][j] > 0)) throw value_error("HawkesParams: beta entries must be > 0");
        }
    }
}

double HawkesParams::branching_spectral_radius() const {
    // power iteration on the nonnegative matrix alpha/beta
    std::size_t m = mu.size();
    std::vector<double> v(m, 1.0), w(m);
    double lam = 0;
    for (int it = 0; it < 200; ++it) {
        for (std::size_t i = 0; i < m; ++i) {
            w[i] = 0;
            for (std::size_t j = 0; j < m; ++j) w[i] += alpha[i][j] / beta[i][j] * v[j];
        }
        double norm = 0;
        for (double x : w) norm = std::max(norm, std::abs(x));
        if (norm == 0) return 0;
        for (std::size_t i = 0; i < m; ++i) v[i] = w[i] / norm;
        lam = norm;
    }
    return lam;
}

HawkesParams preset_independent() {
    return HawkesParams{{0.1, 0.05}, {{0.2, 0.0}, {0.0, 0.4}}, {{1.0, 1.0}, {1.0, 1.0}}};
}

HawkesParams preset_dependent() {
    return HawkesParams{{0.1, 0.05}, {{0.2, 0.1}, {0.2, 0.3}}, {{1.0, 1.0}, {1.0, 2.0}}};
}

HawkesParams preset_by_name(const std::string& name) {
    if (name == "independent") return preset_independent();
    if (name == "dependent") return preset_dependent();
    throw value_error("unknown Hawkes preset: " + name);
}

std::vector<double> intensity(const HawkesParams& p, const EventSequence& history, double t) {
    int m = p.num_marks();
    std::vector<double> lam(p.mu);
    for (const Event& e : history.events) {
        if (!(e.time < t)) break;
        for (int n : e.labels)
            for (int i = 0; i < m; ++i)
                lam[i] += p.alpha[i][n] * std::exp(-p.beta[i][n] * (t - e.time));
    }
    return lam;
}

std::vector<double> compensator(const HawkesParams& p, const EventSequence& history, double a,
                                double b) {
    if (a > b) throw value_error("compensator: a > b");
    int m = p.num_marks();
    std::vector<double> out(m);
    for (int i = 0; i < m; ++i) out[i] = p.mu[i] * (b - a);
    for (const Event& e : history.events) {
        if (!(e.time < b)) break;
        for (int n : e.labels)
            for (int i = 0; i < m; ++i) {
                double bmn = p.beta[i][n];
                double lead = std::exp(-bmn * std::max(a - e.time, 0.0));
                double tail = std::exp(-bmn * (b - e.time));
                out[i] += p.alpha[i][n] / bmn * (lead - tail);
            }
    }
    return out;
}

EventSequence simulate_thinning(const HawkesParams& p, double window_lo, double window_hi,
                                Rng& rng) {
    if (!(window_hi > window_lo)) throw value_error("simulate_thinning: empty window");
    int m = p.num_marks();
    EventSequence seq;
    seq.window_lo = window_lo;
    seq.window_hi = window_hi;
    seq.num_marks = m;

    // decay state: S[i][n] = sum over past mark-n events of exp(-beta_{i,n} (s - t))
    std::vector<std::vector<double>> state(m, std::vector<double>(m, 0.0));
    double s = window_lo;
    std::vector<double> lam(m);
    while (true) {
        double bound = 0;
        for (int i = 0; i < m; ++i) {
            lam[i] = p.mu[i];
            for (int n = 0; n < m; ++n) lam[i] += p.alpha[i][n] * state[i][n];
            bound += lam[i];
        }
        double wait = rng.exponential(bound);
        double next = s + wait;
        if (next > window_hi) break;
        // decay the state to the candidate time
        for (int i = 0; i < m; ++i)
            for (int n = 0; n < m; ++n) state[i][n] *= std::exp(-p.beta[i][n] * wait);
        double total = 0;
        for (int i = 0; i < m; ++i) {
            lam[i] = p.mu[i];
            for (int n = 0; n < m; ++n) lam[i] += p.alpha[i][n] * state[i][n];
            total += lam[i];
        }
        s = next;
        double u = rng.uniform01() * bound;
        if (u <= total) {
            double pick = rng.uniform01() * total;
            int mark = 0;
            double acc = lam[0];
            while (mark + 1 < m && pick > acc) acc += lam[++mark];
            seq.events.push_back({s, {mark}});
            for (int i = 0; i < m; ++i) state[i][mark] += 1.0;
        }
    }
    return seq;
}

std::vector<EventSequence> simulate_dataset(const HawkesParams& p, double window_lo,
                                            double window_hi, std::size_t count,
                                            std::uint64_t seed) {
    std::vector<EventSequence> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(Rng::derive(seed, i));
        out.push_back(simulate_thinning(p, window_lo, window_hi, rng));
    }
    return out;
}

double exact_loglik(const HawkesParams& p, const EventSequence& seq) {
    double ll = 0;
    for (const Event& e : seq.events) {
        std::vector<double> lam = intensity(p, seq, e.time);
        for (int mk : e.labels) {
            if (!(lam[mk] > 0)) throw numeric_error("exact_loglik: zero intensity at an event");
            ll += std::log(lam[mk]);
        }
    }
    std::vector<double> comp = compensator(p, seq, seq.window_lo, seq.window_hi);
    for (double c : comp) ll -= c;
    return ll;
}

}  // namespace tppkit::hawkes
