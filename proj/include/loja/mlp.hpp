#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loja/engine.hpp"
#include "loja/rng.hpp"
#include "loja/schedule.hpp"
#include "loja/vec.hpp"

namespace loja {

enum class ActivationKind { logistic, gaussian };

/// Bounded real-analytic activation. The bound K covers both the value and
/// the derivative on the whole real line (1 for the logistic, 3e for the
/// Gaussian density, with room to spare on the reals).
struct Activation {
    ActivationKind kind;

    static Activation logistic() { return {ActivationKind::logistic}; }
    static Activation gaussian() { return {ActivationKind::gaussian}; }

    double value(double x) const {
        if (kind == ActivationKind::logistic) return 1.0 / (1.0 + std::exp(-x));
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    }

    double derivative(double x) const {
        if (kind == ActivationKind::logistic) {
            const double s = value(x);
            return s * (1.0 - s);
        }
        return -x * value(x);
    }

    double bound() const {
        return kind == ActivationKind::logistic ? 1.0 : 3.0 * std::exp(1.0);
    }

    std::string name() const {
        return kind == ActivationKind::logistic ? "logistic" : "gaussian";
    }
};

inline Activation activation_from_name(const std::string& name) {
    if (name == "logistic") return Activation::logistic();
    if (name == "gaussian") return Activation::gaussian();
    throw std::invalid_argument("unknown activation: " + name);
}

/// Two-layer network parameters: output weights a_1..a_M and input weights
/// b_{i,j} (M x N, row-major). Flattening order [a_1..a_M, b_11..b_MN].
struct PerceptronParams {
    std::size_t M = 0;
    std::size_t N = 0;
    Vec a;  // M
    Vec B;  // M*N row-major

    std::size_t dim() const { return M * (N + 1); }

    Vec flatten() const {
        Vec th(a);
        th.insert(th.end(), B.begin(), B.end());
        return th;
    }

    static PerceptronParams from_flat(const Vec& th, std::size_t M, std::size_t N) {
        if (th.size() != M * (N + 1))
            throw std::invalid_argument("PerceptronParams: bad flat size");
        PerceptronParams p;
        p.M = M;
        p.N = N;
        p.a.assign(th.begin(), th.begin() + static_cast<std::ptrdiff_t>(M));
        p.B.assign(th.begin() + static_cast<std::ptrdiff_t>(M), th.end());
        return p;
    }
};

/// Network output: sum_i a_i psi(b_i . x). Hidden-unit contributions are
/// summed in value order, so renumbering the units cannot change the result
/// even at the bit level.
inline double forward(const PerceptronParams& p, const Activation& act,
                      std::span<const double> x) {
    if (x.size() != p.N) throw std::invalid_argument("forward: input dimension mismatch");
    thread_local std::vector<double> terms;
    terms.clear();
    for (std::size_t i = 0; i < p.M; ++i) {
        double u = 0.0;
        for (std::size_t j = 0; j < p.N; ++j) u += p.B[i * p.N + j] * x[j];
        terms.push_back(p.a[i] * act.value(u));
    }
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

/// Parameter gradient of the network output, flattened like the parameters:
/// d/da_i = psi(b_i . x); d/db_ij = a_i psi'(b_i . x) x_j.
inline Vec param_gradient(const PerceptronParams& p, const Activation& act,
                          std::span<const double> x) {
    if (x.size() != p.N) throw std::invalid_argument("param_gradient: input dimension mismatch");
    Vec g(p.dim());
    for (std::size_t i = 0; i < p.M; ++i) {
        double u = 0.0;
        for (std::size_t j = 0; j < p.N; ++j) u += p.B[i * p.N + j] * x[j];
        g[i] = act.value(u);
        const double slope = p.a[i] * act.derivative(u);
        for (std::size_t j = 0; j < p.N; ++j) g[p.M + i * p.N + j] = slope * x[j];
    }
    return g;
}

/// One online learning update: theta + alpha (y - G(x)) grad G(x).
inline PerceptronParams sl_step(const PerceptronParams& p, const Activation& act,
                                std::span<const double> x, double y, double alpha) {
    const double resid = y - forward(p, act, x);
    const Vec g = param_gradient(p, act, x);
    PerceptronParams out = p;
    for (std::size_t i = 0; i < p.M; ++i) out.a[i] += alpha * resid * g[i];
    for (std::size_t k = 0; k < p.M * p.N; ++k) out.B[k] += alpha * resid * g[p.M + k];
    return out;
}

/// Bounded i.i.d. training pairs: every sample satisfies ||X|| <= bound and
/// |Y| <= bound by construction.
struct TrainingSource {
    std::size_t input_dim = 0;
    double bound = 1.0;
    std::function<void(Rng&, Vec&, double&)> sample;
};

/// Teacher network labels on inputs uniform over [-1, 1]^N. The bound must
/// dominate both sqrt(N) and the teacher's worst-case output.
inline TrainingSource teacher_source(PerceptronParams teacher, Activation act, double bound) {
    double amax = 0.0;
    for (double ai : teacher.a) amax += std::abs(ai) * act.bound();
    if (bound < std::sqrt(static_cast<double>(teacher.N)) || bound < amax)
        throw std::invalid_argument("teacher_source: bound does not dominate the samples");
    TrainingSource src;
    src.input_dim = teacher.N;
    src.bound = bound;
    src.sample = [teacher = std::move(teacher), act](Rng& rng, Vec& x, double& y) {
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        y = forward(teacher, act, x);
    };
    return src;
}

/// Constant-target labels on uniform inputs.
inline TrainingSource constant_target_source(double target, std::size_t input_dim, double bound) {
    if (bound < std::sqrt(static_cast<double>(input_dim)) || bound < std::abs(target))
        throw std::invalid_argument("constant_target_source: bound too small");
    TrainingSource src;
    src.input_dim = input_dim;
    src.bound = bound;
    src.sample = [target](Rng& rng, Vec& x, double& y) {
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        y = target;
    };
    return src;
}

struct TrainOptions {
    std::size_t max_iters = 100'000;
    std::uint64_t data_seed = 1;
    std::uint64_t eval_seed = 2;
    std::size_t eval_size = 10'000;
    double divergence_radius = 1e6;
    double log_ratio = 1.1;
    bool record_params = true;
};

/// Online training of the two-layer network. The logged f column is the
/// held-out estimate of the population risk (a fixed evaluation set drawn
/// once per run, so the curve is a deterministic function of the seeds);
/// grad_norm_sq is the squared norm of the held-out risk gradient.
inline Trajectory train(const PerceptronParams& params0, const Activation& act,
                        const TrainingSource& source, const StepSchedule& schedule,
                        const TrainOptions& opts) {
    if (source.input_dim != params0.N)
        throw std::invalid_argument("train: source and network input dimensions differ");

    // Frozen evaluation set.
    Rng eval_rng(opts.eval_seed);
    std::vector<Vec> ex(opts.eval_size, Vec(params0.N));
    Vec ey(opts.eval_size);
    for (std::size_t i = 0; i < opts.eval_size; ++i) source.sample(eval_rng, ex[i], ey[i]);

    auto heldout = [&](const PerceptronParams& p, double& loss, double& grad_sq) {
        double acc = 0.0;
        Vec g(p.dim(), 0.0);
        for (std::size_t i = 0; i < opts.eval_size; ++i) {
            const double r = ey[i] - forward(p, act, ex[i]);
            acc += r * r;
            const Vec gi = param_gradient(p, act, ex[i]);
            for (std::size_t k = 0; k < g.size(); ++k) g[k] -= r * gi[k];
        }
        loss = 0.5 * acc / static_cast<double>(opts.eval_size);
        for (auto& v : g) v /= static_cast<double>(opts.eval_size);
        grad_sq = norm_sq(g);
    };

    Trajectory traj;
    traj.dim = params0.dim();
    PerceptronParams p = params0;
    Rng data_rng(opts.data_seed);
    GammaClock clock;
    Vec x(params0.N);
    double y = 0.0;

    std::size_t next_log = 1;
    auto log_due = [&](std::size_t n) {
        if (n + 1 >= next_log) {
            next_log = std::max(next_log + 1,
                                static_cast<std::size_t>(static_cast<double>(next_log) * opts.log_ratio));
            return true;
        }
        return false;
    };
    auto log_point = [&](std::size_t n) {
        double loss = 0.0, gsq = 0.0;
        heldout(p, loss, gsq);
        traj.points.push_back({n, clock.gamma(), loss, gsq});
        if (opts.record_params) traj.thetas.push_back(p.flatten());
    };

    for (std::size_t n = 0; n < opts.max_iters; ++n) {
        if (log_due(n)) {
            const Vec flat = p.flatten();
            if (norm(flat) > opts.divergence_radius) {
                traj.status = RunStatus::diverged;
                traj.stop_n = n;
                log_point(n);
                return traj;
            }
            log_point(n);
        }
        source.sample(data_rng, x, y);
        p = sl_step(p, act, x, y, schedule.alpha(n));
        clock.advance(schedule.alpha(n));
        if (!all_finite(p.a) || !all_finite(p.B)) {
            traj.status = RunStatus::nonfinite;
            traj.stop_n = n + 1;
            return traj;
        }
    }
    log_point(opts.max_iters);
    return traj;
}

/// Random parameters uniform in [-half, half] per coordinate.
inline PerceptronParams random_params(std::size_t M, std::size_t N, double half,
                                      std::uint64_t seed) {
    PerceptronParams p;
    p.M = M;
    p.N = N;
    p.a.resize(M);
    p.B.resize(M * N);
    Rng rng(seed);
    for (auto& v : p.a) v = rng.uniform(-half, half);
    for (auto& v : p.B) v = rng.uniform(-half, half);
    return p;
}

}  // namespace loja
