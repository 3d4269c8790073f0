#pragma once

// Time-weighted labeling function and its absorbing-chain counterparts.
//
// All quantities are evaluated in the log domain: the textbook ratio
// (e^{a t} - 1) / (e^{a T} - 1) overflows a double once a*T exceeds ~709.

#include "twcrl/errors.hpp"
#include "twcrl/rng.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace twcrl {

struct TimeWeightParams {
    double alpha = 2.0;
    std::size_t horizon = 300;

    void validate() const {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be a finite value > 0");
        if (horizon < 1) throw InvalidHorizon("time-weight horizon must be >= 1");
    }
};

namespace detail {

inline void check_timestep(std::size_t t, const TimeWeightParams& p) {
    p.validate();
    if (t > p.horizon)
        throw OutOfRange("timestep " + std::to_string(t) + " outside [0, " + std::to_string(p.horizon) + "]");
}

/// log(1 - f); -inf at f == 1.
inline double log_survival(double f) { return std::log1p(-f); }

}  // namespace detail

/// Per-step absorption probability f(t, T), normalized so f(0) = 0 and f(T) = 1.
inline double transition_prob_f(std::size_t t, const TimeWeightParams& p) {
    detail::check_timestep(t, p);
    if (t == 0) return 0.0;
    if (t == p.horizon) return 1.0;
    const double a = p.alpha;
    const double td = static_cast<double>(t);
    const double Td = static_cast<double>(p.horizon);
    return std::exp(a * (td - Td)) * (std::expm1(-a * td) / std::expm1(-a * Td));
}

/// w(t) = 1 - (1 - f(t, T))^t.
inline double time_weight_w(std::size_t t, const TimeWeightParams& p) {
    const double f = transition_prob_f(t, p);
    if (t == 0) return 0.0;
    if (f >= 1.0) return 1.0;
    return -std::expm1(static_cast<double>(t) * detail::log_survival(f));
}

/// Un-approximated conditional probability (1 - (1-f)^t) / (1 - (1-f)^T) with f = f(t, T).
/// Where f underflows to zero the ratio takes its f -> 0 limit t / T.
inline double exact_conditional(std::size_t t, const TimeWeightParams& p) {
    const double f = transition_prob_f(t, p);
    if (t == 0) return 0.0;
    if (t == p.horizon || f >= 1.0) return 1.0;
    const double td = static_cast<double>(t);
    const double Td = static_cast<double>(p.horizon);
    if (f < 1e-300) return td / Td;
    const double ls = detail::log_survival(f);
    return std::expm1(td * ls) / std::expm1(Td * ls);
}

/// Closed form of the constant-rate absorbing chain: P(absorbed by t | absorbed by T).
inline double constant_k_conditional(double k, std::size_t t, std::size_t horizon) {
    const double ls = std::log1p(-k);
    return std::expm1(static_cast<double>(t) * ls) / std::expm1(static_cast<double>(horizon) * ls);
}

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t conditioned = 0;  // chains absorbed by the horizon
};

/// Simulates chains that start transient and are absorbed with probability k at
/// each step 1..T. Among chains absorbed by T, returns the fraction absorbed by t.
inline MonteCarloEstimate mc_constant_k_conditional(double k, std::size_t t, std::size_t horizon,
                                                    std::size_t n_samples, std::uint64_t seed) {
    if (!(k > 0.0 && k < 1.0)) throw OutOfRange("absorption probability k must lie in (0, 1)");
    if (t < 1 || t > horizon) throw OutOfRange("need 1 <= t <= T");
    if (n_samples < 1000) throw OutOfRange("need at least 1000 samples");

    Rng rng(seed);
    std::bernoulli_distribution absorb(k);
    std::size_t by_t = 0;
    std::size_t by_horizon = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        for (std::size_t step = 1; step <= horizon; ++step) {
            if (absorb(rng)) {
                ++by_horizon;
                if (step <= t) ++by_t;
                break;
            }
        }
    }
    if (by_horizon == 0) throw Error("no simulated chain was absorbed by the horizon");
    MonteCarloEstimate out;
    out.conditioned = by_horizon;
    out.estimate = static_cast<double>(by_t) / static_cast<double>(by_horizon);
    out.std_error = std::sqrt(out.estimate * (1.0 - out.estimate) / static_cast<double>(by_horizon));
    return out;
}

}  // namespace twcrl
