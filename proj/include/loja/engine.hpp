#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "loja/noise.hpp"
#include "loja/objectives.hpp"
#include "loja/schedule.hpp"
#include "loja/vec.hpp"

namespace loja {

enum class RunStatus { completed, diverged, nonfinite };

inline std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::completed: return "completed";
        case RunStatus::diverged: return "diverged";
        case RunStatus::nonfinite: return "nan";
    }
    return "?";
}

struct TrajectoryPoint {
    std::size_t n;
    double gamma;
    double f;
    double grad_norm_sq;
};

/// Decimated run log. gamma values come from the run's shared clock, not a
/// recomputation. thetas is parallel to points when parameter recording is on.
struct Trajectory {
    std::size_t dim = 0;
    std::vector<TrajectoryPoint> points;
    std::vector<Vec> thetas;
    RunStatus status = RunStatus::completed;
    std::size_t stop_n = 0;  // iteration at which a non-completed run stopped
};

struct RunOptions {
    Vec theta0;
    std::size_t max_iters = 0;
    double divergence_radius = 1e6;
    std::size_t log_every = 0;   // linear stride; 0 selects geometric decimation
    double log_ratio = 1.05;     // geometric decimation ratio
    bool record_theta = false;
};

/// One update of the noisy gradient recursion: theta - alpha * (grad + xi).
inline Vec sgd_step(const Vec& theta, double alpha, const Vec& grad, const Vec& xi) {
    Vec out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) out[i] = theta[i] - alpha * (grad[i] + xi[i]);
    return out;
}

namespace detail {

class Decimator {
public:
    Decimator(std::size_t stride, double ratio) : stride_(stride), ratio_(ratio) {}

    /// True when iteration n should be recorded. Linear stride when set,
    /// otherwise geometric spacing with the configured ratio.
    bool due(std::size_t n) {
        if (stride_ > 0) return n % stride_ == 0;
        if (n + 1 >= next_) {
            next_ = std::max(next_ + 1,
                             static_cast<std::size_t>(static_cast<double>(next_) * ratio_));
            return true;
        }
        return false;
    }

private:
    std::size_t stride_;
    double ratio_;
    std::size_t next_ = 1;
};

}  // namespace detail

/// Run the recursion with the oracle's gradient and the configured noise.
/// For markov noise the update uses the chain's gradient estimate directly;
/// for additive kinds it is theta - alpha (grad + xi). Stops at max_iters,
/// on ||theta|| exceeding the divergence radius (checked at decimation
/// points), or on a non-finite iterate (checked every step).
inline Trajectory run(const ObjectiveOracle& oracle, const StepSchedule& schedule,
                      NoiseProcess& noise, const RunOptions& opts,
                      std::vector<Vec>* xi_log = nullptr) {
    if (opts.theta0.size() != oracle.dim)
        throw std::invalid_argument("run: theta0 dimension does not match oracle");
    if (noise.dim() != oracle.dim)
        throw std::invalid_argument("run: noise dimension does not match oracle");
    if (opts.max_iters < 1) throw std::invalid_argument("run: max_iters must be at least 1");
    if (!(opts.divergence_radius > norm(opts.theta0)))
        throw std::invalid_argument("run: divergence radius must exceed ||theta0||");

    Trajectory traj;
    traj.dim = oracle.dim;
    Vec theta = opts.theta0;
    GammaClock clock;
    detail::Decimator dec(opts.log_every, opts.log_ratio);

    auto log_point = [&](std::size_t n) {
        const double f = oracle.value(theta);
        const Vec g = oracle.gradient(theta);
        traj.points.push_back({n, clock.gamma(), f, norm_sq(g)});
        if (opts.record_theta) traj.thetas.push_back(theta);
    };

    for (std::size_t n = 0; n < opts.max_iters; ++n) {
        const bool logging = dec.due(n);
        if (logging) {
            if (norm(theta) > opts.divergence_radius) {
                traj.status = RunStatus::diverged;
                traj.stop_n = n;
                log_point(n);
                return traj;
            }
            log_point(n);
        }
        const double alpha = schedule.alpha(n);
        const Vec grad = oracle.gradient(theta);
        Vec estimate = noise.gradient_estimate(theta, grad);
        if (xi_log) {
            Vec xi(oracle.dim);
            for (std::size_t i = 0; i < oracle.dim; ++i) xi[i] = estimate[i] - grad[i];
            xi_log->push_back(std::move(xi));
        }
        for (std::size_t i = 0; i < oracle.dim; ++i) theta[i] -= alpha * estimate[i];
        clock.advance(alpha);
        if (!all_finite(theta)) {
            traj.status = RunStatus::nonfinite;
            traj.stop_n = n + 1;
            return traj;
        }
    }
    if (norm(theta) > opts.divergence_radius) {
        traj.status = RunStatus::diverged;
        traj.stop_n = opts.max_iters;
    }
    log_point(opts.max_iters);
    return traj;
}

/// Largest excursion of the logged tail: max over logged k >= n0 of
/// ||theta_k - theta_ref|| with theta_ref the first logged point at or after n0.
inline double tail_oscillation(const Trajectory& traj, std::size_t n0) {
    if (traj.thetas.size() != traj.points.size())
        throw std::invalid_argument("tail_oscillation: trajectory does not carry parameters");
    std::size_t ref = traj.points.size();
    for (std::size_t i = 0; i < traj.points.size(); ++i)
        if (traj.points[i].n >= n0) {
            ref = i;
            break;
        }
    if (ref == traj.points.size())
        throw std::invalid_argument("tail_oscillation: n0 beyond the logged horizon");
    double best = 0.0;
    for (std::size_t i = ref; i < traj.thetas.size(); ++i)
        best = std::max(best, norm(traj.thetas[i] - traj.thetas[ref]));
    return best;
}

}  // namespace loja
