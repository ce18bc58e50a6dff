#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "loja/eig.hpp"
#include "loja/rng.hpp"
#include "loja/schedule.hpp"
#include "loja/vec.hpp"

namespace loja {

/// Stable linear state-space generator: X' = A X + h w, Y = b^T X, with w an
/// i.i.d. scalar driver N(mean, var). The spectral radius of A is computed at
/// construction and must be below one.
struct ArmaSystem {
    std::size_t L;
    std::vector<double> A;  // row-major L x L
    Vec b;
    Vec h;
    double noise_var;
    double driver_mean;
    std::uint64_t seed;
    double rho;  // spectral radius of A

    ArmaSystem(std::size_t L_, std::vector<double> A_, Vec b_, Vec h_, double noise_var_,
               std::uint64_t seed_, double driver_mean_ = 0.0)
        : L(L_),
          A(std::move(A_)),
          b(std::move(b_)),
          h(std::move(h_)),
          noise_var(noise_var_),
          driver_mean(driver_mean_),
          seed(seed_) {
        if (A.size() != L * L || b.size() != L || h.size() != L)
            throw std::invalid_argument("ArmaSystem: inconsistent dimensions");
        if (noise_var < 0.0) throw std::invalid_argument("ArmaSystem: negative driver variance");
        rho = spectral_radius(A, L);
        if (!(rho < 1.0))
            throw std::invalid_argument("ArmaSystem: eigenvalues of A must lie inside the unit disc");
    }
};

/// State-space realization of the one-dimensional model
/// Y_n = a* Y_{n-1} + W_n + b* W_{n-1} with unit-variance innovations.
inline ArmaSystem arma11_system(double a_star, double b_star, double innovation_var,
                                std::uint64_t seed) {
    // state X = [Y, W]; Y' = a* Y + b* W + W'
    return ArmaSystem(2, {a_star, b_star, 0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, innovation_var, seed);
}

/// Simulated output Y_0..Y_{n-1}. X starts at zero; a burn-in of
/// 10 L / (1 - rho) steps is discarded so the samples are near stationary.
inline Vec simulate_signal(const ArmaSystem& sys, std::size_t n_steps) {
    Rng rng(sys.seed);
    Vec x(sys.L, 0.0), xn(sys.L, 0.0);
    const auto burn =
        static_cast<std::size_t>(std::ceil(10.0 * static_cast<double>(sys.L) / (1.0 - sys.rho)));
    const double sd = std::sqrt(sys.noise_var);
    Vec y;
    y.reserve(n_steps);
    for (std::size_t t = 0; t < burn + n_steps; ++t) {
        if (t >= burn) y.push_back(dot(sys.b, x));
        const double w = sys.driver_mean + sd * rng.normal();
        for (std::size_t i = 0; i < sys.L; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < sys.L; ++j) s += sys.A[i * sys.L + j] * x[j];
            xn[i] = s + sys.h[i] * w;
        }
        std::swap(x, xn);
    }
    return y;
}

/// Selection matrix (N x (M+N), row-major) extracting the moving-average
/// block of the stacked parameter vector: entry (i, j) is 1 iff j = M + i.
inline std::vector<double> d_matrix(std::size_t M, std::size_t N) {
    if (M < 1 || N < 1) throw std::invalid_argument("d_matrix: M and N must be at least 1");
    std::vector<double> D(N * (M + N), 0.0);
    for (std::size_t i = 0; i < N; ++i) D[i * (M + N) + (M + i)] = 1.0;
    return D;
}

/// Model parameters: AR coefficients a_1..a_M and MA coefficients b_1..b_N,
/// stacked as [a_1..a_M, b_1..b_N].
struct ModelTheta {
    Vec a;
    Vec b;

    std::size_t M() const { return a.size(); }
    std::size_t N() const { return b.size(); }
    std::size_t dim() const { return a.size() + b.size(); }

    Vec flatten() const {
        Vec th(a);
        th.insert(th.end(), b.begin(), b.end());
        return th;
    }

    static ModelTheta from_flat(const Vec& th, std::size_t M, std::size_t N) {
        if (th.size() != M + N) throw std::invalid_argument("ModelTheta: bad flat size");
        ModelTheta t;
        t.a.assign(th.begin(), th.begin() + static_cast<std::ptrdiff_t>(M));
        t.b.assign(th.begin() + static_cast<std::ptrdiff_t>(M), th.end());
        return t;
    }
};

struct StabilityResult {
    bool stable = false;
    double margin = 0.0;           // 1 - max root modulus of the reversed MA polynomial
    double max_root_modulus = 0.0;
};

/// Membership in the admissible region: every zero z of
/// 1 + b_1 z^{-1} + ... + b_N z^{-N} must satisfy |z| > 1, equivalently all
/// roots of z^N + b_1 z^{N-1} + ... + b_N lie strictly inside the unit circle.
inline StabilityResult stability_check(const ModelTheta& theta) {
    StabilityResult res;
    double worst = 0.0;
    bool degenerate_zero = true;
    for (double c : theta.b)
        if (c != 0.0) degenerate_zero = false;
    if (degenerate_zero) {
        res.stable = true;
        res.margin = 1.0;
        res.max_root_modulus = 0.0;
        return res;
    }
    for (const Cplx& z : companion_roots(theta.b)) worst = std::max(worst, std::abs(z));
    res.max_root_modulus = worst;
    res.margin = 1.0 - worst;
    res.stable = worst < 1.0;
    return res;
}

/// Online identifier state: current parameter estimate plus the rolling
/// buffers of outputs, prediction errors and error sensitivities. Buffers
/// store most-recent-first.
struct RpeState {
    Vec theta;                 // [a_1..a_M, b_1..b_N]
    std::deque<double> ybuf;   // Y_n, Y_{n-1}, ..., Y_{n-M+1}
    std::deque<double> ebuf;   // eps_n, ..., eps_{n-N+1}
    std::deque<Vec> psibuf;    // psi_n, ..., psi_{n-N+1}
    std::size_t n = 0;
    double last_eps = 0.0;
    bool finite = true;

    std::size_t M() const { return ybuf.size(); }
    std::size_t N() const { return ebuf.size(); }
    std::size_t dim() const { return theta.size(); }
};

/// Zero initial conditions for the error and sensitivity buffers; y0 seeds
/// the output buffer.
inline RpeState make_rpe_state(std::size_t M, std::size_t N, const Vec& theta0, double y0) {
    if (M < 1 || N < 1) throw std::invalid_argument("make_rpe_state: M and N must be at least 1");
    if (theta0.size() != M + N) throw std::invalid_argument("make_rpe_state: theta0 has wrong size");
    RpeState st;
    st.theta = theta0;
    st.ybuf.assign(M, 0.0);
    st.ybuf.front() = y0;
    st.ebuf.assign(N, 0.0);
    st.psibuf.assign(N, Vec(M + N, 0.0));
    return st;
}

/// One identifier update on receiving y_next:
///   phi_n   = [Y_n..Y_{n-M+1}, eps_n..eps_{n-N+1}]
///   eps'    = y_next - phi_n . theta
///   psi'    = phi_n - sum_k b_k psi_{n+1-k}      (b = MA block of theta)
///   theta  += alpha * psi' * eps'
/// The MA block product is [psi_n..psi_{n-N+1}] D theta with D the selection
/// matrix; the slice form used here is the same product written out.
inline void rpe_advance(RpeState& st, double y_next, double alpha) {
    const std::size_t M = st.M(), N = st.N(), d = M + N;
    Vec phi(d);
    for (std::size_t i = 0; i < M; ++i) phi[i] = st.ybuf[i];
    for (std::size_t i = 0; i < N; ++i) phi[M + i] = st.ebuf[i];

    const double eps_next = y_next - dot(phi, st.theta);

    Vec psi_next = phi;
    for (std::size_t k = 0; k < N; ++k) {
        const double bk = st.theta[M + k];
        const Vec& pk = st.psibuf[k];
        for (std::size_t i = 0; i < d; ++i) psi_next[i] -= bk * pk[i];
    }

    for (std::size_t i = 0; i < d; ++i) st.theta[i] += alpha * psi_next[i] * eps_next;

    if (!std::isfinite(eps_next) || !all_finite(psi_next) || !all_finite(st.theta))
        st.finite = false;

    st.ybuf.pop_back();
    st.ybuf.push_front(y_next);
    st.ebuf.pop_back();
    st.ebuf.push_front(eps_next);
    st.psibuf.pop_back();
    st.psibuf.push_front(std::move(psi_next));
    st.last_eps = eps_next;
    ++st.n;
}

/// Pure-function form of one update.
inline RpeState rpe_step(const RpeState& state, double y_next, double alpha) {
    RpeState next = state;
    rpe_advance(next, y_next, alpha);
    return next;
}

/// Frozen-parameter filter pass over a signal: prediction errors and their
/// parameter sensitivities at fixed theta (the identifier with alpha = 0).
/// Note psi_n = -grad_theta eps_n under these recursions: the update
/// +alpha psi eps then descends the mean-square error.
struct FrozenFilterOutput {
    Vec eps;                    // eps_1..eps_{T-1} (index i = time i+1)
    std::vector<Vec> psi;      // matching sensitivities
};

inline FrozenFilterOutput frozen_filter(const ModelTheta& theta, const Vec& y,
                                        bool keep_psi = true) {
    if (y.size() < 2) throw std::invalid_argument("frozen_filter: signal too short");
    RpeState st = make_rpe_state(theta.M(), theta.N(), theta.flatten(), y[0]);
    FrozenFilterOutput out;
    out.eps.reserve(y.size() - 1);
    if (keep_psi) out.psi.reserve(y.size() - 1);
    for (std::size_t t = 1; t < y.size(); ++t) {
        rpe_advance(st, y[t], 0.0);
        out.eps.push_back(st.last_eps);
        if (keep_psi) out.psi.push_back(st.psibuf.front());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Asymptotic mean-square prediction error via the spectral formula.

namespace detail {

/// H(z) = b^T (z I - A)^{-1} h by complex Gaussian elimination.
inline Cplx transfer_at(const ArmaSystem& sys, Cplx z) {
    const std::size_t L = sys.L;
    std::vector<Cplx> m(L * L);
    std::vector<Cplx> rhs(L);
    for (std::size_t i = 0; i < L; ++i) {
        rhs[i] = sys.h[i];
        for (std::size_t j = 0; j < L; ++j)
            m[i * L + j] = (i == j ? z : Cplx(0.0)) - sys.A[i * L + j];
    }
    for (std::size_t c = 0; c < L; ++c) {  // partial pivoting
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < L; ++r)
            if (std::abs(m[r * L + c]) > std::abs(m[piv * L + c])) piv = r;
        if (piv != c) {
            for (std::size_t j = 0; j < L; ++j) std::swap(m[c * L + j], m[piv * L + j]);
            std::swap(rhs[c], rhs[piv]);
        }
        const Cplx p = m[c * L + c];
        if (std::abs(p) == 0.0) throw std::runtime_error("transfer_at: singular resolvent");
        for (std::size_t r = c + 1; r < L; ++r) {
            const Cplx f = m[r * L + c] / p;
            if (f == Cplx(0.0)) continue;
            for (std::size_t j = c; j < L; ++j) m[r * L + j] -= f * m[c * L + j];
            rhs[r] -= f * rhs[c];
        }
    }
    for (std::size_t ci = L; ci-- > 0;) {
        for (std::size_t j = ci + 1; j < L; ++j) rhs[ci] -= m[ci * L + j] * rhs[j];
        rhs[ci] /= m[ci * L + ci];
    }
    Cplx out = 0.0;
    for (std::size_t i = 0; i < L; ++i) out += sys.b[i] * rhs[i];
    return out;
}

/// Spectral density of Y at frequency w: noise_var |H(e^{iw})|^2.
inline double signal_spectral_density(const ArmaSystem& sys, double w) {
    const Cplx z = std::polar(1.0, w);
    return sys.noise_var * std::norm(transfer_at(sys, z));
}

/// Model error filter C(z) = (1 - sum a_k z^-k) / (1 + sum b_k z^-k).
inline Cplx error_filter_at(const ModelTheta& th, Cplx z_inv) {
    Cplx num = 0.0, den = 0.0;
    for (std::size_t k = th.a.size(); k-- > 0;) num = (num + th.a[k]) * z_inv;
    num = 1.0 - num;
    for (std::size_t k = th.b.size(); k-- > 0;) den = (den + th.b[k]) * z_inv;
    den = 1.0 + den;
    return num / den;
}

}  // namespace detail

struct MseOptions {
    std::size_t min_grid = 512;
    std::size_t max_grid = 1 << 17;
    double rel_tol = 1e-9;  // relative change allowed on grid doubling
};

/// Cached spectral table for repeated evaluations against one generator.
class MseEvaluator {
public:
    MseEvaluator(const ArmaSystem& sys, std::size_t grid = 4096) : sys_(sys), grid_(grid) {
        table_.resize(grid_);
        for (std::size_t k = 0; k < grid_; ++k)
            table_[k] = detail::signal_spectral_density(
                sys_, -M_PI + 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(grid_));
        // Mean of Y for the constant term.
        mean_y_ = std::abs(detail::transfer_at(sys_, 1.0)) * sys_.driver_mean;
    }

    /// f(theta): trapezoid rule on the uniform grid (periodic integrand, so
    /// the rule is spectrally accurate) plus the mean term.
    double operator()(const ModelTheta& theta) const {
        auto st = stability_check(theta);
        if (!st.stable)
            throw std::domain_error("asymptotic_mse: theta outside the admissible region");
        double acc = 0.0;
        for (std::size_t k = 0; k < grid_; ++k) {
            const double w = -M_PI + 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(grid_);
            const Cplx z_inv = std::polar(1.0, -w);
            acc += std::norm(detail::error_filter_at(theta, z_inv)) * table_[k];
        }
        const double integral_part = acc / (2.0 * static_cast<double>(grid_));
        const double c1 = std::abs(detail::error_filter_at(theta, Cplx(1.0)));
        return integral_part + c1 * c1 * mean_y_ * mean_y_ / 2.0;
    }

    std::size_t grid() const { return grid_; }

private:
    ArmaSystem sys_;
    std::size_t grid_;
    std::vector<double> table_;
    double mean_y_ = 0.0;
};

/// f(theta) with automatic grid refinement: doubles the grid until the value
/// moves by less than rel_tol, and reports failure to settle.
inline double asymptotic_mse(const ModelTheta& theta, const ArmaSystem& sys, MseOptions opts = {}) {
    double prev = MseEvaluator(sys, opts.min_grid)(theta);
    for (std::size_t g = opts.min_grid * 2; g <= opts.max_grid; g *= 2) {
        const double cur = MseEvaluator(sys, g)(theta);
        if (std::abs(cur - prev) <= opts.rel_tol * std::max(std::abs(cur), 1e-30)) return cur;
        prev = cur;
    }
    throw std::runtime_error("asymptotic_mse: quadrature did not settle at the maximum grid");
}

// ---------------------------------------------------------------------------
// Identification runs.

enum class GuardPolicy { halt, project };

enum class IdentStatus { completed, guard_halt, diverged, nonfinite };

inline std::string to_string(IdentStatus s) {
    switch (s) {
        case IdentStatus::completed: return "completed";
        case IdentStatus::guard_halt: return "guard_halt";
        case IdentStatus::diverged: return "diverged";
        case IdentStatus::nonfinite: return "nan";
    }
    return "?";
}

struct IdentPoint {
    std::size_t n;
    double gamma;
    Vec theta;
    double eps;
    double f_theta;
    double margin;
};

struct IdentTrace {
    std::size_t M = 0, N = 0;
    std::vector<IdentPoint> points;
    IdentStatus status = IdentStatus::completed;
    std::size_t stop_n = 0;
    std::size_t guard_events = 0;
    Vec theta_end;
};

struct IdentOptions {
    Vec theta0;                  // must lie in the admissible region with margin >= guard
    std::size_t max_iters = 100'000;
    double guard = 0.02;         // minimum stability margin maintained
    GuardPolicy policy = GuardPolicy::halt;
    double divergence_radius = 1e4;  // cap on ||theta||; the other half of the
                                     // boundedness event next to the margin guard
    double log_ratio = 1.05;     // geometric decimation of the log
    std::size_t monitor_every = 1000;  // margin checks at least this often
    std::size_t mse_grid = 4096;
};

/// Run the online identifier against a simulated signal from the generator.
/// The stability margin of theta is monitored; when it falls below the guard
/// the run either halts or shrinks the MA block toward zero until the margin
/// recovers (radial projection), per the configured policy. f(theta) is
/// evaluated through the spectral formula at each logged point.
inline IdentTrace identify(const ArmaSystem& sys, std::size_t M, std::size_t N,
                           const StepSchedule& schedule, const IdentOptions& opts) {
    const std::size_t d = M + N;
    if (opts.theta0.size() != d) throw std::invalid_argument("identify: theta0 has wrong size");
    {
        auto st0 = stability_check(ModelTheta::from_flat(opts.theta0, M, N));
        if (!st0.stable || st0.margin < opts.guard)
            throw std::invalid_argument("identify: theta0 must satisfy the guard margin");
    }

    const Vec y = simulate_signal(sys, opts.max_iters + 1);
    MseEvaluator mse(sys, opts.mse_grid);
    RpeState st = make_rpe_state(M, N, opts.theta0, y[0]);
    GammaClock clock;

    IdentTrace trace;
    trace.M = M;
    trace.N = N;

    auto margin_of = [&](const Vec& th) {
        return stability_check(ModelTheta::from_flat(th, M, N)).margin;
    };

    auto apply_guard = [&](std::size_t n) -> bool {
        if (norm(st.theta) > opts.divergence_radius) {
            trace.status = IdentStatus::diverged;
            trace.stop_n = n;
            return false;
        }
        double margin = margin_of(st.theta);
        if (margin >= opts.guard) return true;
        ++trace.guard_events;
        if (opts.policy == GuardPolicy::halt) {
            trace.status = IdentStatus::guard_halt;
            trace.stop_n = n;
            return false;
        }
        // Radial shrink of the MA block restores membership (b = 0 is
        // interior with margin 1).
        for (int iter = 0; iter < 400 && margin < opts.guard; ++iter) {
            for (std::size_t k = 0; k < N; ++k) st.theta[M + k] *= 0.9;
            margin = margin_of(st.theta);
        }
        return true;
    };

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
        const ModelTheta th = ModelTheta::from_flat(st.theta, M, N);
        const auto stab = stability_check(th);
        const double f = stab.stable ? mse(th) : std::numeric_limits<double>::quiet_NaN();
        trace.points.push_back({n, clock.gamma(), st.theta, st.last_eps, f, stab.margin});
    };

    for (std::size_t n = 0; n < opts.max_iters; ++n) {
        const bool logging = log_due(n);
        const bool monitoring = logging || (opts.monitor_every > 0 && n % opts.monitor_every == 0);
        if (monitoring && !apply_guard(n)) {
            log_point(n);
            trace.theta_end = st.theta;
            return trace;
        }
        if (logging) log_point(n);
        rpe_advance(st, y[n + 1], schedule.alpha(n));
        clock.advance(schedule.alpha(n));
        if (!st.finite) {
            trace.status = IdentStatus::nonfinite;
            trace.stop_n = n + 1;
            trace.theta_end = st.theta;
            return trace;
        }
    }
    apply_guard(opts.max_iters);
    log_point(opts.max_iters);
    trace.theta_end = st.theta;
    return trace;
}

}  // namespace loja
