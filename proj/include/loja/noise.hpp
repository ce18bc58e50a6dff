#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loja/eig.hpp"
#include "loja/objectives.hpp"
#include "loja/rng.hpp"
#include "loja/schedule.hpp"
#include "loja/vec.hpp"

namespace loja {

/// Gradient estimates driven by a state chain: the state advances by
/// transition(theta, state, rng) and the estimate is observation(theta, state).
struct MarkovNoiseChain {
    std::size_t state_dim = 0;
    Vec initial_state;
    std::function<Vec(const Vec& theta, const Vec& state, Rng&)> transition;
    std::function<Vec(const Vec& theta, const Vec& state)> observation;
};

/// Built-in chain: linear state recursion Z' = A Z + h * v with v standard
/// normal, observed as grad(theta) + C Z (state-correlated additive noise).
/// A must be a contraction; checked at construction via power iteration.
inline MarkovNoiseChain linear_markov_chain(const ObjectiveOracle& oracle,
                                            std::vector<double> A, std::size_t state_dim,
                                            std::vector<double> C, Vec h) {
    if (A.size() != state_dim * state_dim) throw std::invalid_argument("linear_markov_chain: bad A");
    if (C.size() != oracle.dim * state_dim) throw std::invalid_argument("linear_markov_chain: bad C");
    if (h.size() != state_dim) throw std::invalid_argument("linear_markov_chain: bad h");
    const double rho = spectral_radius_power(A, state_dim);
    if (!(rho < 1.0))
        throw std::invalid_argument("linear_markov_chain: transition matrix is not a contraction");
    MarkovNoiseChain chain;
    chain.state_dim = state_dim;
    chain.initial_state.assign(state_dim, 0.0);
    chain.transition = [A, state_dim, h](const Vec&, const Vec& z, Rng& rng) {
        Vec next(state_dim, 0.0);
        const double v = rng.normal();
        for (std::size_t i = 0; i < state_dim; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < state_dim; ++j) s += A[i * state_dim + j] * z[j];
            next[i] = s + h[i] * v;
        }
        return next;
    };
    const auto grad = oracle.gradient;
    const std::size_t d = oracle.dim;
    chain.observation = [grad, C, d, state_dim](const Vec& theta, const Vec& z) {
        Vec out = grad(theta);
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < state_dim; ++j) s += C[i * state_dim + j] * z[j];
            out[i] += s;
        }
        return out;
    };
    return chain;
}

enum class NoiseKind { none, iid_gaussian, iid_uniform, markov };

inline std::string to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::none: return "none";
        case NoiseKind::iid_gaussian: return "iid_gaussian";
        case NoiseKind::iid_uniform: return "iid_uniform";
        case NoiseKind::markov: return "markov";
    }
    return "?";
}

/// Noise source for the gradient recursion. One instance per run; owns its
/// random stream, so identical seeds give bit-identical sequences.
class NoiseProcess {
public:
    static NoiseProcess none(std::size_t dim) {
        NoiseProcess p(NoiseKind::none, dim, 0);
        return p;
    }

    static NoiseProcess iid_gaussian(std::size_t dim, double sigma, std::uint64_t seed) {
        if (sigma < 0.0) throw std::invalid_argument("iid_gaussian: sigma must be nonnegative");
        NoiseProcess p(NoiseKind::iid_gaussian, dim, seed);
        p.sigma_ = sigma;
        return p;
    }

    /// Uniform on [-halfwidth, halfwidth] per coordinate; strictly bounded.
    static NoiseProcess iid_uniform(std::size_t dim, double halfwidth, std::uint64_t seed) {
        if (halfwidth < 0.0) throw std::invalid_argument("iid_uniform: halfwidth must be nonnegative");
        NoiseProcess p(NoiseKind::iid_uniform, dim, seed);
        p.sigma_ = halfwidth;
        return p;
    }

    static NoiseProcess markov(MarkovNoiseChain chain, std::size_t dim, std::uint64_t seed) {
        NoiseProcess p(NoiseKind::markov, dim, seed);
        p.chain_ = std::move(chain);
        p.state_ = p.chain_.initial_state;
        return p;
    }

    NoiseKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }

    /// Gradient estimate used by the recursion: grad + xi for additive kinds,
    /// the chain observation after advancing the state for the markov kind.
    Vec gradient_estimate(const Vec& theta, const Vec& grad) {
        switch (kind_) {
            case NoiseKind::none:
                return grad;
            case NoiseKind::iid_gaussian: {
                Vec out(dim_);
                for (std::size_t i = 0; i < dim_; ++i) out[i] = grad[i] + sigma_ * rng_.normal();
                return out;
            }
            case NoiseKind::iid_uniform: {
                Vec out(dim_);
                for (std::size_t i = 0; i < dim_; ++i) out[i] = grad[i] + rng_.uniform(-sigma_, sigma_);
                return out;
            }
            case NoiseKind::markov: {
                state_ = chain_.transition(theta, state_, rng_);
                return chain_.observation(theta, state_);
            }
        }
        return grad;
    }

    /// xi_n = estimate - grad; zero vector for kind none.
    Vec next_noise(const Vec& theta, const Vec& grad) {
        Vec est = gradient_estimate(theta, grad);
        for (std::size_t i = 0; i < dim_; ++i) est[i] -= grad[i];
        return est;
    }

private:
    NoiseProcess(NoiseKind kind, std::size_t dim, std::uint64_t seed)
        : kind_(kind), dim_(dim), rng_(seed) {}

    NoiseKind kind_;
    std::size_t dim_;
    Rng rng_;
    double sigma_ = 0.0;
    MarkovNoiseChain chain_;
    Vec state_;
};

struct NoiseAverageDiagnostic {
    std::vector<std::size_t> n_grid;
    std::vector<double> window_max;   // m(n) = max over the unit gamma-window
    std::vector<double> running_max;  // cumulative max of m(n); finite-horizon
                                      // proxy only, not the limsup itself
};

/// Windowed weighted noise averages: for each grid n,
///   m(n) = max over k in [n, a(n,t)) of || sum_{i=n}^{k} alpha_i gamma_i^r xi_i ||.
/// Boundedness of the running max across n is the evidence the admissibility
/// condition asks for; growth flags an inadmissible r.
inline NoiseAverageDiagnostic noise_average_diagnostic(const std::vector<Vec>& xi,
                                                       const StepSchedule& sched, double r,
                                                       std::size_t grid_points = 64,
                                                       double t = 1.0) {
    const std::size_t horizon = xi.size();
    if (horizon == 0) throw std::invalid_argument("noise_average_diagnostic: empty noise log");
    const std::size_t dim = xi[0].size();

    // gamma_i for i < horizon, single compensated pass.
    std::vector<double> gamma(horizon);
    {
        KahanSum acc;
        for (std::size_t i = 0; i < horizon; ++i) {
            gamma[i] = acc.value();
            acc.add(sched.alpha(i));
        }
    }

    std::size_t first_end;
    try {
        first_end = sched.window(0, t, horizon + 1);
    } catch (const std::runtime_error&) {
        first_end = horizon + 1;
    }
    if (first_end > horizon)
        throw std::invalid_argument("noise_average_diagnostic: horizon shorter than one window");

    // Largest usable start: window end must stay within the recorded log.
    std::size_t n_max = 0;
    {
        std::size_t lo = 0, hi = horizon;
        while (lo < hi) {  // window ends are monotone in n
            const std::size_t mid = lo + (hi - lo + 1) / 2;
            std::size_t end;
            try {
                end = sched.window(mid, t, horizon + 1);
            } catch (const std::runtime_error&) {
                end = horizon + 1;
            }
            if (end <= horizon)
                lo = mid;
            else
                hi = mid - 1;
        }
        n_max = lo;
    }

    NoiseAverageDiagnostic diag;
    const double ratio = n_max > 0
                             ? std::pow(static_cast<double>(n_max) + 1.0,
                                        1.0 / static_cast<double>(std::max<std::size_t>(grid_points, 2) - 1))
                             : 2.0;
    std::size_t prev = static_cast<std::size_t>(-1);
    for (std::size_t g = 0; g < grid_points; ++g) {
        const std::size_t n = std::min(
            n_max, static_cast<std::size_t>(std::pow(ratio, static_cast<double>(g))) - 1);
        if (n == prev) continue;
        prev = n;
        const std::size_t end = sched.window(n, t, horizon + 1);  // a(n, t)
        Vec acc(dim, 0.0);
        double best = 0.0;
        for (std::size_t k = n; k < end; ++k) {
            const double w = sched.alpha(k) * std::pow(gamma[k], r);
            for (std::size_t j = 0; j < dim; ++j) acc[j] += w * xi[k][j];
            best = std::max(best, norm(acc));
        }
        diag.n_grid.push_back(n);
        diag.window_max.push_back(best);
        diag.running_max.push_back(diag.running_max.empty()
                                       ? best
                                       : std::max(diag.running_max.back(), best));
    }
    return diag;
}

}  // namespace loja
