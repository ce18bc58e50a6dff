#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loja/arma.hpp"
#include "loja/engine.hpp"
#include "loja/rates.hpp"

namespace loja {

/// Shortest round-trip decimal form; identical doubles print identical bytes.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const bool with_theta = traj.thetas.size() == traj.points.size() && !traj.points.empty();
    os << "n,gamma,f,grad_norm_sq";
    if (with_theta)
        for (std::size_t d = 0; d < traj.dim; ++d) os << ",theta_" << d;
    os << "\n";
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        const auto& p = traj.points[i];
        os << p.n << ',' << format_double(p.gamma) << ',' << format_double(p.f) << ','
           << format_double(p.grad_norm_sq);
        if (with_theta)
            for (double v : traj.thetas[i]) os << ',' << format_double(v);
        os << "\n";
    }
    os << "# status=" << to_string(traj.status);
    if (traj.status != RunStatus::completed) os << " at_n=" << traj.stop_n;
    os << "\n";
}

inline Trajectory read_trajectory_csv(std::istream& is) {
    Trajectory traj;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("trajectory csv: empty file");
    // header: n,gamma,f,grad_norm_sq[,theta_0..]
    std::size_t theta_cols = 0;
    {
        std::stringstream ss(line);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() < 4 || cols[0] != "n")
            throw std::runtime_error("trajectory csv: unexpected header");
        theta_cols = cols.size() - 4;
    }
    traj.dim = theta_cols;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.find("status=diverged") != std::string::npos)
                traj.status = RunStatus::diverged;
            else if (line.find("status=nan") != std::string::npos)
                traj.status = RunStatus::nonfinite;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() < 4) throw std::runtime_error("trajectory csv: short row");
        traj.points.push_back({static_cast<std::size_t>(row[0]), row[1], row[2], row[3]});
        if (theta_cols > 0)
            traj.thetas.emplace_back(row.begin() + 4, row.end());
    }
    return traj;
}

inline void write_ident_csv(std::ostream& os, const IdentTrace& trace) {
    const std::size_t d = trace.M + trace.N;
    os << "n,gamma";
    for (std::size_t k = 0; k < d; ++k) os << ",theta_" << k;
    os << ",eps,f_theta,margin\n";
    for (const auto& p : trace.points) {
        os << p.n << ',' << format_double(p.gamma);
        for (double v : p.theta) os << ',' << format_double(v);
        os << ',' << format_double(p.eps) << ',' << format_double(p.f_theta) << ','
           << format_double(p.margin) << "\n";
    }
    os << "# status=" << to_string(trace.status);
    if (trace.status != IdentStatus::completed) os << " at_n=" << trace.stop_n;
    if (trace.guard_events > 0) os << " guard_events=" << trace.guard_events;
    os << "\n";
}

inline void write_signal_csv(std::ostream& os, const Vec& y) {
    os << "n,y\n";
    for (std::size_t i = 0; i < y.size(); ++i) os << i << ',' << format_double(y[i]) << "\n";
}

/// One row per fitted quantity; scenario columns identify the run.
inline void write_rate_report_csv(std::ostream& os, const std::string& scenario,
                                  const RateReport& rep) {
    os << "scenario,quantity,slope,half_width,predicted_exponent,verdict,points,excluded,"
          "r_squared,note\n";
    for (const auto& e : rep.entries) {
        os << scenario << ',' << to_string(e.quantity) << ',' << format_double(e.fit.slope) << ','
           << format_double(e.fit.slope_half_width) << ','
           << format_double(e.fit.predicted_exponent) << ',' << to_string(e.fit.verdict) << ','
           << e.fit.points_used << ',' << e.fit.points_excluded << ','
           << format_double(e.fit.r_squared) << ',' << e.fit.note << "\n";
    }
    if (rep.exponential_regime) {
        os << scenario << ",f_gap_exponential," << format_double(rep.exp_slope)
           << ",0,-,exponential_regime,0,0," << format_double(rep.exp_r_squared) << ",\n";
    }
}

/// Plot-ready columns: log gamma, log quantity, and the fitted line from the
/// report entry. Rows with nonpositive quantity are dropped and counted in a
/// trailing comment. theta_gap needs recorded parameters and a reference.
inline std::size_t write_plotdata(std::ostream& os, const Trajectory& traj, RateQuantity q,
                                  double fhat, const LogLogFit& fit,
                                  const Vec* theta_hat = nullptr) {
    if (q == RateQuantity::theta_gap &&
        (!theta_hat || traj.thetas.size() != traj.points.size()))
        throw std::invalid_argument("write_plotdata: theta_gap needs parameters and a reference");
    os << "log_gamma,log_" << to_string(q) << ",fit\n";
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        const auto& p = traj.points[i];
        double v = 0.0;
        switch (q) {
            case RateQuantity::f_gap: v = p.f - fhat; break;
            case RateQuantity::grad_sq: v = p.grad_norm_sq; break;
            case RateQuantity::theta_gap: v = norm(traj.thetas[i] - *theta_hat); break;
        }
        if (!(v > 0.0) || !(p.gamma > 0.0)) {
            ++dropped;
            continue;
        }
        const double lg = std::log(p.gamma);
        os << format_double(lg) << ',' << format_double(std::log(v)) << ','
           << format_double(fit.intercept + fit.slope * lg) << "\n";
    }
    os << "# dropped=" << dropped << "\n";
    return dropped;
}

}  // namespace loja
