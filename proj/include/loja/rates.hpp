#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "loja/engine.hpp"
#include "loja/vec.hpp"

namespace loja {

/// Predicted decay exponents for a sharpness exponent mu and noise-weighting
/// exponent r: the f-gap and squared-gradient decay no slower than
/// gamma^{-p_hat}, the iterate gap no slower than gamma^{-q_hat}.
struct RateConstants {
    double mu;
    double r;
    double r_hat;  // 1/(2 - mu), +inf at mu = 2
    double p_hat;  // mu * min(r, r_hat)
    double q_hat;  // min(r, r_hat) - 1
};

inline RateConstants rate_constants(double mu, double r) {
    if (!(mu > 1.0) || !(mu <= 2.0))
        throw std::domain_error("rate_constants: mu must lie in (1, 2]");
    if (!(r > 1.0)) throw std::domain_error("rate_constants: r must exceed 1");
    RateConstants rc;
    rc.mu = mu;
    rc.r = r;
    rc.r_hat = mu < 2.0 ? 1.0 / (2.0 - mu) : std::numeric_limits<double>::infinity();
    const double m = std::min(r, rc.r_hat);
    rc.p_hat = mu * m;
    rc.q_hat = m - 1.0;
    return rc;
}

enum class VarphiCase { below, critical, above };

/// Which branch of the noise functional applies: r below, at, or above r_hat.
inline VarphiCase varphi_case(double r, double r_hat) {
    if (!(r > 1.0)) throw std::domain_error("varphi_case: r must exceed 1");
    if (r < r_hat) return VarphiCase::below;
    if (r == r_hat) return VarphiCase::critical;
    return VarphiCase::above;
}

enum class RateQuantity { f_gap, grad_sq, theta_gap };

inline std::string to_string(RateQuantity q) {
    switch (q) {
        case RateQuantity::f_gap: return "f_gap";
        case RateQuantity::grad_sq: return "grad_sq";
        case RateQuantity::theta_gap: return "theta_gap";
    }
    return "?";
}

enum class RateVerdict { consistent, faster, slower, inconclusive };

inline std::string to_string(RateVerdict v) {
    switch (v) {
        case RateVerdict::consistent: return "consistent";
        case RateVerdict::faster: return "faster";
        case RateVerdict::slower: return "slower";
        case RateVerdict::inconclusive: return "inconclusive";
    }
    return "?";
}

struct FitWindow {
    double gamma_lo;
    double gamma_hi;
};

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_half_width = 0.0;  // 2 * standard error from OLS residuals
    double r_squared = 0.0;
    std::size_t points_used = 0;
    std::size_t points_excluded = 0;  // nonpositive quantity values in window
    double predicted_exponent = 0.0;
    RateVerdict verdict = RateVerdict::inconclusive;
    std::string note;
};

namespace detail {

struct Ols {
    double slope = 0.0, intercept = 0.0, se_slope = 0.0, r2 = 0.0;
    std::size_t m = 0;
};

inline Ols ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
    Ols o;
    o.m = x.size();
    if (o.m < 2) return o;
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < o.m; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / static_cast<double>(o.m), my = sy / static_cast<double>(o.m);
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < o.m; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) return o;
    o.slope = sxy / sxx;
    o.intercept = my - o.slope * mx;
    double rss = 0;
    for (std::size_t i = 0; i < o.m; ++i) {
        const double e = y[i] - (o.intercept + o.slope * x[i]);
        rss += e * e;
    }
    o.r2 = syy > 0.0 ? 1.0 - rss / syy : 1.0;
    if (o.m > 2) o.se_slope = std::sqrt(rss / static_cast<double>(o.m - 2) / sxx);
    return o;
}

inline double quantity_value(const Trajectory& traj, std::size_t i, RateQuantity q, double fhat,
                             const Vec* theta_hat) {
    switch (q) {
        case RateQuantity::f_gap: return traj.points[i].f - fhat;
        case RateQuantity::grad_sq: return traj.points[i].grad_norm_sq;
        case RateQuantity::theta_gap: {
            if (!theta_hat || traj.thetas.size() != traj.points.size())
                throw std::invalid_argument("fit_loglog: theta_gap needs recorded parameters and a reference point");
            return norm(traj.thetas[i] - *theta_hat);
        }
    }
    return 0.0;
}

}  // namespace detail

/// Least-squares slope of log(quantity) against log(gamma) over the window,
/// compared with a predicted decay exponent p: consistent when
/// |slope + p| <= tol, faster when slope < -p - tol, slower otherwise.
/// Requires a window spanning at least one decade with >= 30 usable points.
inline LogLogFit fit_loglog(const Trajectory& traj, RateQuantity q, double fhat,
                            const Vec* theta_hat, FitWindow window, double predicted_exponent,
                            double tol = 0.3) {
    LogLogFit fit;
    fit.predicted_exponent = predicted_exponent;
    if (!(window.gamma_hi >= 10.0 * window.gamma_lo) || !(window.gamma_lo > 0.0)) {
        fit.note = "fit window narrower than one decade of gamma";
        return fit;
    }
    std::vector<double> x, y;
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        const double g = traj.points[i].gamma;
        if (g < window.gamma_lo || g > window.gamma_hi) continue;
        const double v = detail::quantity_value(traj, i, q, fhat, theta_hat);
        if (!(v > 0.0) || !std::isfinite(v)) {
            ++fit.points_excluded;
            continue;
        }
        x.push_back(std::log(g));
        y.push_back(std::log(v));
    }
    fit.points_used = x.size();
    if (fit.points_used < 30) {
        fit.note = "fewer than 30 usable points in window";
        return fit;
    }
    const detail::Ols o = detail::ols_fit(x, y);
    fit.slope = o.slope;
    fit.intercept = o.intercept;
    fit.slope_half_width = 2.0 * o.se_slope;
    fit.r_squared = o.r2;
    if (fit.slope < -predicted_exponent - tol)
        fit.verdict = RateVerdict::faster;
    else if (std::abs(fit.slope + predicted_exponent) <= tol)
        fit.verdict = RateVerdict::consistent;
    else
        fit.verdict = RateVerdict::slower;
    return fit;
}

struct RateReportEntry {
    RateQuantity quantity;
    LogLogFit fit;
};

/// Measured-versus-predicted report for one run.
struct RateReport {
    RateConstants constants;
    FitWindow window;
    std::vector<RateReportEntry> entries;
    bool exponential_regime = false;  // log f linear in gamma beats log-log
    double exp_slope = 0.0;           // slope of log f against gamma when flagged
    double exp_r_squared = 0.0;
};

/// Fit all three run quantities against the predictions for (mu, r). The
/// window is the last decade of gamma; the iterate gap uses the final logged
/// parameter as the limit proxy and fits only to 90% of the horizon. A
/// clearly better linear fit of log f against gamma (plain, not log) flags
/// the exponential regime of mu = 2 with vanishing noise.
inline RateReport predict_vs_measure(const Trajectory& traj, double mu, double r, double fhat,
                                     double tol = 0.3) {
    if (traj.points.empty()) throw std::invalid_argument("predict_vs_measure: empty trajectory");
    RateReport rep;
    rep.constants = rate_constants(mu, r);
    const double g_end = traj.points.back().gamma;
    rep.window = {g_end / 10.0, g_end};

    rep.entries.push_back({RateQuantity::f_gap,
                           fit_loglog(traj, RateQuantity::f_gap, fhat, nullptr, rep.window,
                                      rep.constants.p_hat, tol)});
    rep.entries.push_back({RateQuantity::grad_sq,
                           fit_loglog(traj, RateQuantity::grad_sq, fhat, nullptr, rep.window,
                                      rep.constants.p_hat, tol)});

    if (traj.thetas.size() == traj.points.size() && traj.points.size() >= 2) {
        // Limit proxy: final logged parameter; fit capped at 90% of horizon.
        const Vec& proxy = traj.thetas.back();
        const std::size_t n_end = traj.points.back().n;
        double gamma_cap = g_end;
        for (const auto& p : traj.points)
            if (p.n <= (n_end * 9) / 10) gamma_cap = p.gamma;
        FitWindow w{gamma_cap / 10.0, gamma_cap};
        rep.entries.push_back({RateQuantity::theta_gap,
                               fit_loglog(traj, RateQuantity::theta_gap, fhat, &proxy, w,
                                          rep.constants.q_hat, tol)});
    }

    // Exponential-regime detector: compare fit quality of log f against gamma
    // with the log-log fit on the same window.
    {
        std::vector<double> xg, xl, y;
        for (const auto& p : traj.points) {
            if (p.gamma < rep.window.gamma_lo || p.gamma > rep.window.gamma_hi) continue;
            const double v = p.f - fhat;
            if (!(v > 0.0)) continue;
            xg.push_back(p.gamma);
            xl.push_back(std::log(p.gamma));
            y.push_back(std::log(v));
        }
        if (xg.size() >= 30) {
            const detail::Ols lin = detail::ols_fit(xg, y);
            const detail::Ols log = detail::ols_fit(xl, y);
            if (lin.r2 > log.r2) {
                rep.exponential_regime = true;
                rep.exp_slope = lin.slope;
                rep.exp_r_squared = lin.r2;
            }
        }
    }
    return rep;
}

}  // namespace loja
