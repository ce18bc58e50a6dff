#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loja/vec.hpp"

namespace loja {

enum class ScheduleKind { power_law, explicit_list };

enum class SumTrend { converging, growing, inconclusive };

/// Admissibility report for a step-size sequence. Numeric fields are
/// finite-horizon evidence, not proofs.
struct ScheduleValidation {
    bool admissible = false;
    std::string reason;

    // Robbins-Monro conditions; symbolic for power laws, finite-horizon
    // observations for explicit lists.
    bool steps_vanish = false;
    bool steps_diverge = false;

    // Admissible interval for the noise-weighting exponent r.
    double r_lower = 1.0;
    double r_upper = std::numeric_limits<double>::infinity();
    bool r_admissible = false;

    // Partial sums of alpha_n^2 gamma_n^{2r} over the horizon, with the ratio
    // of the last dyadic block's increment to the previous block's.
    double weighted_square_sum = 0.0;
    double block_increment_ratio = 0.0;
    SumTrend trend = SumTrend::inconclusive;

    // sup |1/alpha_{n+1} - 1/alpha_n| over the horizon (finite-horizon proxy
    // for the limsup condition; exact only for power laws).
    double inv_step_delta_sup = 0.0;
};

/// Step-size sequence alpha_n with its noise-weighting exponent r.
/// Immutable after construction; safe to share across runs.
class StepSchedule {
public:
    static StepSchedule power_law(double a, double c, double r) {
        if (!(a > 0.75) || !(a <= 1.0))
            throw std::invalid_argument("StepSchedule: power-law exponent a must lie in (3/4, 1]");
        if (!(c > 0.0)) throw std::invalid_argument("StepSchedule: scale c must be positive");
        check_r(a, r);
        StepSchedule s;
        s.kind_ = ScheduleKind::power_law;
        s.a_ = a;
        s.c_ = c;
        s.r_ = r;
        return s;
    }

    static StepSchedule explicit_steps(std::vector<double> steps, double r) {
        if (steps.empty()) throw std::invalid_argument("StepSchedule: empty step list");
        for (double x : steps)
            if (!(x > 0.0) || !std::isfinite(x))
                throw std::invalid_argument("StepSchedule: explicit steps must be positive and finite");
        if (!(r > 1.0)) throw std::invalid_argument("StepSchedule: r must exceed 1");
        StepSchedule s;
        s.kind_ = ScheduleKind::explicit_list;
        s.steps_ = std::move(steps);
        s.r_ = r;
        return s;
    }

    ScheduleKind kind() const { return kind_; }
    double exponent() const { return a_; }
    double scale() const { return c_; }
    double r() const { return r_; }
    const std::vector<double>& steps() const { return steps_; }

    /// Number of defined steps; unbounded for power laws.
    std::size_t horizon() const {
        return kind_ == ScheduleKind::power_law ? std::numeric_limits<std::size_t>::max()
                                                : steps_.size();
    }

    /// alpha_n; power laws are indexed c/(n+1)^a so alpha_0 is defined.
    double alpha(std::size_t n) const {
        if (kind_ == ScheduleKind::power_law)
            return c_ * std::pow(static_cast<double>(n) + 1.0, -a_);
        if (n >= steps_.size())
            throw std::out_of_range("StepSchedule: step index beyond explicit horizon");
        return steps_[n];
    }

    /// gamma_n = sum of alpha_i for i < n, compensated summation.
    /// Matches GammaClock bit for bit (same accumulation order).
    double gamma(std::size_t n) const {
        KahanSum acc;
        for (std::size_t i = 0; i < n; ++i) acc.add(alpha(i));
        return acc.value();
    }

    /// Largest k >= n with gamma_k - gamma_n <= t. Scans forward; throws if
    /// the cap (or the explicit horizon) is reached before the window closes.
    std::size_t window(std::size_t n, double t, std::size_t cap = 100'000'000) const {
        if (!(t > 0.0)) throw std::invalid_argument("window: t must be positive");
        KahanSum acc;
        std::size_t k = n;
        const std::size_t limit = std::min(cap, horizon());
        while (k < limit) {
            KahanSum trial = acc;
            trial.add(alpha(k));
            if (trial.value() > t) return k;
            acc = trial;
            ++k;
        }
        throw std::runtime_error("window: iteration cap reached before gamma increment exceeded t");
    }

private:
    static void check_r(double a, double r) {
        if (!(r > 1.0)) throw std::invalid_argument("StepSchedule: r must exceed 1");
        if (a < 1.0) {
            const double bound = (a - 0.5) / (1.0 - a);
            if (!(r < bound))
                throw std::invalid_argument("StepSchedule: r must be below (a-1/2)/(1-a) for a < 1");
        }
    }

    ScheduleKind kind_ = ScheduleKind::power_law;
    double a_ = 1.0;
    double c_ = 1.0;
    double r_ = 2.0;
    std::vector<double> steps_;
};

/// Per-run accumulated step mass gamma_n. Single-threaded value type.
struct GammaClock {
    std::size_t n = 0;
    KahanSum acc;

    double gamma() const { return acc.value(); }

    void advance(double alpha) {
        acc.add(alpha);
        ++n;
    }
};

namespace detail {

inline ScheduleValidation validate_numeric(const StepSchedule& s, double r, std::size_t horizon) {
    ScheduleValidation v;
    // Partial sums of alpha^2 gamma^{2r} at horizon/4, horizon/2, horizon.
    const std::size_t h = std::min(horizon, s.horizon());
    KahanSum gamma;
    KahanSum wsum;
    double s_quarter = 0.0, s_half = 0.0;
    double prev_inv = 0.0;
    double sup_delta = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        const double a_i = s.alpha(i);
        const double g = gamma.value();
        const double term = a_i * a_i * (g > 0.0 ? std::pow(g, 2.0 * r) : 0.0);
        wsum.add(term);
        gamma.add(a_i);
        const double inv = 1.0 / a_i;
        if (i > 0) sup_delta = std::max(sup_delta, std::abs(inv - prev_inv));
        prev_inv = inv;
        if (i + 1 == h / 4) s_quarter = wsum.value();
        if (i + 1 == h / 2) s_half = wsum.value();
    }
    v.weighted_square_sum = wsum.value();
    v.inv_step_delta_sup = sup_delta;
    const double inc1 = s_half - s_quarter;
    const double inc2 = wsum.value() - s_half;
    if (inc1 > 0.0) {
        v.block_increment_ratio = inc2 / inc1;
        if (v.block_increment_ratio < 1.0 - 1e-3)
            v.trend = SumTrend::converging;
        else if (v.block_increment_ratio > 1.0 + 1e-3)
            v.trend = SumTrend::growing;
        else
            v.trend = SumTrend::inconclusive;
    }
    return v;
}

}  // namespace detail

/// Validate a power-law schedule without constructing it, so out-of-range
/// parameters produce a report rather than a constructor throw.
inline ScheduleValidation validate_power_law(double a, double c, double r,
                                             std::size_t horizon = 100'000) {
    ScheduleValidation v;
    if (!(a > 0.75) || !(a <= 1.0)) {
        v.reason = "exponent a=" + std::to_string(a) + " outside (3/4, 1]";
        return v;
    }
    if (!(c > 0.0)) {
        v.reason = "scale c must be positive";
        return v;
    }
    v.steps_vanish = true;   // c/(n+1)^a -> 0 for a > 0
    v.steps_diverge = true;  // sum diverges for a <= 1
    v.r_lower = 1.0;
    v.r_upper = a < 1.0 ? (a - 0.5) / (1.0 - a) : std::numeric_limits<double>::infinity();
    v.r_admissible = r > v.r_lower && r < v.r_upper;
    if (!v.r_admissible) {
        v.reason = "r outside admissible interval";
    }
    // Numeric evidence regardless of r admissibility (the diagnostic should
    // discriminate bad r values, so compute it for the requested r).
    const double probe_r = a < 1.0 ? 0.5 * (1.0 + v.r_upper) : 2.0;
    StepSchedule probe = StepSchedule::power_law(a, c, probe_r);
    ScheduleValidation num = detail::validate_numeric(probe, r, horizon);
    v.weighted_square_sum = num.weighted_square_sum;
    v.block_increment_ratio = num.block_increment_ratio;
    v.trend = num.trend;
    v.inv_step_delta_sup = num.inv_step_delta_sup;
    v.admissible = v.r_admissible;
    return v;
}

inline ScheduleValidation validate_schedule(const StepSchedule& s, std::size_t horizon = 100'000) {
    if (s.kind() == ScheduleKind::power_law)
        return validate_power_law(s.exponent(), s.scale(), s.r(), horizon);

    ScheduleValidation v = detail::validate_numeric(s, s.r(), std::min(horizon, s.horizon()));
    const auto& st = s.steps();
    v.steps_vanish = st.back() < 0.1 * st.front();  // finite-horizon observation only
    v.steps_diverge = false;                        // unknowable from a finite list
    v.r_lower = 1.0;
    v.r_admissible = s.r() > 1.0;
    v.admissible = v.r_admissible;
    return v;
}

/// Exponent s in (0,1) for which sum alpha_n^{1+s} gamma_n^r is finite
/// whenever sum alpha_n^2 gamma_n^{2r} is: s = (2+r)/(2+2r).
inline double summability_exponent(double r) {
    if (!(r > 0.0)) throw std::invalid_argument("summability_exponent: r must be positive");
    return (2.0 + r) / (2.0 + 2.0 * r);
}

}  // namespace loja
