#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "loja/rng.hpp"
#include "loja/vec.hpp"

namespace loja {

/// Objective oracle: f, its gradient, and (for test objectives) the known
/// limit value, sharpness exponent at the stationary set, and a membership
/// predicate for the stationary set.
struct ObjectiveOracle {
    std::string id;
    std::size_t dim = 0;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    std::optional<double> known_mu;    // in (1, 2]
    std::optional<double> known_fhat;  // f on the stationary component
    std::function<bool(const Vec&)> stationary_predicate;
};

/// f(theta) = theta^T A theta for a symmetric positive definite A (row-major).
inline ObjectiveOracle quadratic_oracle(std::vector<double> A, std::size_t dim,
                                        std::string id = "quadratic") {
    if (A.size() != dim * dim) throw std::invalid_argument("quadratic_oracle: bad matrix size");
    ObjectiveOracle o;
    o.id = std::move(id);
    o.dim = dim;
    o.value = [A, dim](const Vec& th) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) s += th[i] * A[i * dim + j] * th[j];
        return s;
    };
    o.gradient = [A, dim](const Vec& th) {
        Vec g(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) g[i] += (A[i * dim + j] + A[j * dim + i]) * th[j];
        return g;
    };
    o.known_mu = 2.0;
    o.known_fhat = 0.0;
    o.stationary_predicate = [](const Vec& th) { return norm(th) <= 1e-12; };
    return o;
}

/// Built-in analytic objectives with known stationary sets. The circle and
/// cross objectives have non-isolated minima (a manifold and two crossing
/// lines), the structure the isolated-minimum theory cannot handle.
inline std::vector<ObjectiveOracle> builtin_suite() {
    std::vector<ObjectiveOracle> suite;

    suite.push_back(quadratic_oracle({1.0}, 1));

    {
        ObjectiveOracle o;
        o.id = "quartic";
        o.dim = 1;
        o.value = [](const Vec& th) {
            const double t = th[0];
            return t * t * t * t;
        };
        o.gradient = [](const Vec& th) {
            const double t = th[0];
            return Vec{4.0 * t * t * t};
        };
        o.known_mu = 4.0 / 3.0;  // |t|^{2k} has exponent 2k/(2k-1), k = 2
        o.known_fhat = 0.0;
        o.stationary_predicate = [](const Vec& th) { return std::abs(th[0]) <= 1e-12; };
        suite.push_back(o);
    }

    {
        ObjectiveOracle o;
        o.id = "circle";
        o.dim = 2;
        o.value = [](const Vec& th) {
            const double d = th[0] * th[0] + th[1] * th[1] - 1.0;
            return d * d;
        };
        o.gradient = [](const Vec& th) {
            const double d = th[0] * th[0] + th[1] * th[1] - 1.0;
            return Vec{4.0 * d * th[0], 4.0 * d * th[1]};
        };
        o.known_mu = 2.0;
        o.known_fhat = 0.0;
        o.stationary_predicate = [](const Vec& th) {
            return std::abs(th[0] * th[0] + th[1] * th[1] - 1.0) <= 1e-11;
        };
        suite.push_back(o);
    }

    {
        ObjectiveOracle o;
        o.id = "cross";
        o.dim = 2;
        o.value = [](const Vec& th) { return th[0] * th[0] * th[1] * th[1]; };
        o.gradient = [](const Vec& th) {
            return Vec{2.0 * th[0] * th[1] * th[1], 2.0 * th[0] * th[0] * th[1]};
        };
        // The exponent on the open axes (2) differs from the one at the
        // crossing point; no single value is recorded.
        o.known_fhat = 0.0;
        o.stationary_predicate = [](const Vec& th) {
            return std::min(std::abs(th[0]), std::abs(th[1])) <= 1e-11;
        };
        suite.push_back(o);
    }

    return suite;
}

inline const ObjectiveOracle& find_oracle(const std::vector<ObjectiveOracle>& suite,
                                          const std::string& id) {
    for (const auto& o : suite)
        if (o.id == id) return o;
    throw std::invalid_argument("unknown oracle id: " + id);
}

struct LojEstimateOptions {
    std::size_t shells = 11;        // dyadic ladder radius * 2^-j, j = 0..shells-1
    double stationary_tol = 1e-8;   // required gradient norm at theta_hat
    double gradient_floor = 1e-14;  // below this a sample is degenerate
};

struct LojEstimate {
    double mu = 0.0;  // exponent estimate, clamped to (1, 2]
    double M = 0.0;   // max |f - fhat| / ||grad||^mu over the finest shells
    std::vector<double> shell_min_ratio;  // raw log|f-fhat|/log||grad|| per shell
    std::size_t excluded_samples = 0;
    std::size_t degenerate_samples = 0;
};

/// Estimate the sharpness exponent mu at an approximately stationary point:
/// mu = liminf of log|f(t') - f(that)| / log||grad f(t')|| as t' -> that.
/// Sampled on shrinking dyadic shells. The returned exponent is the minimum
/// per-direction slope of log|f - fhat| against log||grad|| across adjacent
/// shells (the raw per-shell ratio carries an O(1/log radius) bias that the
/// slope form cancels); raw shell minima are reported alongside.
inline LojEstimate estimate_loj_exponent(const ObjectiveOracle& oracle, const Vec& theta_hat,
                                         double radius, std::size_t samples, std::uint64_t seed,
                                         LojEstimateOptions opts = {}) {
    if (!(radius > 0.0)) throw std::invalid_argument("estimate_loj_exponent: radius must be positive");
    if (samples == 0) throw std::invalid_argument("estimate_loj_exponent: need at least one sample");
    const double g_hat = norm(oracle.gradient(theta_hat));
    if (g_hat > opts.stationary_tol)
        throw std::invalid_argument("estimate_loj_exponent: theta_hat is not stationary within tolerance");

    const double fhat = oracle.value(theta_hat);
    const std::size_t d = oracle.dim;
    Rng rng(seed);

    // Fixed unit directions, shared across shells so per-direction slopes
    // compare the same ray at two radii.
    std::vector<Vec> dirs(samples, Vec(d));
    for (auto& u : dirs) {
        double n2;
        do {
            for (auto& x : u) x = rng.normal();
            n2 = norm_sq(u);
        } while (n2 < 1e-12);
        const double inv = 1.0 / std::sqrt(n2);
        for (auto& x : u) x *= inv;
    }

    const std::size_t J = opts.shells;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> log_df(samples, std::vector<double>(J, nan));
    std::vector<std::vector<double>> log_g(samples, std::vector<double>(J, nan));

    LojEstimate est;
    est.shell_min_ratio.assign(J, nan);
    std::size_t usable = 0;

    for (std::size_t j = 0; j < J; ++j) {
        const double rho = radius * std::pow(2.0, -static_cast<double>(j));
        double shell_min = nan;
        for (std::size_t i = 0; i < samples; ++i) {
            Vec pt(d);
            for (std::size_t k = 0; k < d; ++k) pt[k] = theta_hat[k] + rho * dirs[i][k];
            const double df = oracle.value(pt) - fhat;
            const double g = norm(oracle.gradient(pt));
            if (g < opts.gradient_floor) {
                ++est.degenerate_samples;
                continue;
            }
            if (df == 0.0) {
                ++est.excluded_samples;
                continue;
            }
            ++usable;
            log_df[i][j] = std::log(std::abs(df));
            log_g[i][j] = std::log(g);
            if (log_g[i][j] < 0.0 && log_df[i][j] < 0.0) {
                const double ratio = log_df[i][j] / log_g[i][j];
                if (std::isnan(shell_min) || ratio < shell_min) shell_min = ratio;
            }
        }
        est.shell_min_ratio[j] = shell_min;
    }

    if (usable == 0)
        throw std::runtime_error("estimate_loj_exponent: all samples degenerate (gradient below floor)");

    // Per-direction slopes across adjacent shells, restricted to the finer
    // half of the ladder where the local expansion dominates.
    double mu_min = nan;
    for (std::size_t i = 0; i < samples; ++i) {
        for (std::size_t j = J / 2; j + 1 < J; ++j) {
            const double num = log_df[i][j + 1] - log_df[i][j];
            const double den = log_g[i][j + 1] - log_g[i][j];
            if (std::isnan(num) || std::isnan(den)) continue;
            if (std::abs(den) < 0.05) continue;  // no scale information in this pair
            const double s = num / den;
            if (std::isnan(mu_min) || s < mu_min) mu_min = s;
        }
    }
    if (std::isnan(mu_min))
        throw std::runtime_error("estimate_loj_exponent: no usable shell pairs");

    est.mu = std::clamp(mu_min, std::nextafter(1.0, 2.0), 2.0);

    // Constant estimate on the finer shells at the clamped exponent.
    double M = 0.0;
    for (std::size_t i = 0; i < samples; ++i)
        for (std::size_t j = J / 2; j < J; ++j) {
            if (std::isnan(log_df[i][j])) continue;
            M = std::max(M, std::exp(log_df[i][j] - est.mu * log_g[i][j]));
        }
    est.M = M;
    return est;
}

/// Central finite-difference gradient with step h = h_scale * (1 + ||theta||).
inline Vec fd_gradient(const ObjectiveOracle& oracle, const Vec& theta, double h_scale = 1e-5) {
    const double h = h_scale * (1.0 + norm(theta));
    Vec g(oracle.dim);
    for (std::size_t i = 0; i < oracle.dim; ++i) {
        Vec lo = theta, hi = theta;
        lo[i] -= h;
        hi[i] += h;
        g[i] = (oracle.value(hi) - oracle.value(lo)) / (2.0 * h);
    }
    return g;
}

}  // namespace loja
