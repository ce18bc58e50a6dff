#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "loja/rng.hpp"

namespace loja {

using Cplx = std::complex<double>;

/// Eigenvalues of a small dense real matrix via the shifted QR iteration on
/// the complex Hessenberg form. Intended for tiny matrices (n <= ~16);
/// companion matrices arrive already in Hessenberg form.
inline std::vector<Cplx> eigenvalues_small(const std::vector<double>& A_rowmajor, std::size_t n) {
    if (A_rowmajor.size() != n * n) throw std::invalid_argument("eigenvalues_small: bad matrix size");
    if (n == 0) return {};
    if (n == 1) return {Cplx(A_rowmajor[0], 0.0)};

    std::vector<std::vector<Cplx>> H(n, std::vector<Cplx>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) H[i][j] = A_rowmajor[i * n + j];

    // Householder reduction to upper Hessenberg (real data, done in complex
    // storage for uniformity; negligible cost at this size).
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double scale = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) scale += std::abs(H[i][k]);
        if (scale == 0.0) continue;
        std::vector<Cplx> v(n, 0.0);
        double nrm2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = H[i][k] / scale;
            nrm2 += std::norm(v[i]);
        }
        double alpha = std::sqrt(nrm2);
        if (std::abs(v[k + 1]) > 0.0 && v[k + 1].real() > 0.0) alpha = -alpha;
        v[k + 1] -= alpha;
        double vnorm2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) vnorm2 += std::norm(v[i]);
        if (vnorm2 == 0.0) continue;
        // H <- (I - 2 v v^H / v^H v) H (I - 2 v v^H / v^H v)
        for (std::size_t j = 0; j < n; ++j) {
            Cplx s = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) s += std::conj(v[i]) * H[i][j];
            s *= 2.0 / vnorm2;
            for (std::size_t i = k + 1; i < n; ++i) H[i][j] -= s * v[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            Cplx s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += H[i][j] * v[j];
            s *= 2.0 / vnorm2;
            for (std::size_t j = k + 1; j < n; ++j) H[i][j] -= s * std::conj(v[j]);
        }
    }

    std::vector<Cplx> eig(n);
    std::size_t hi = n;  // active block is rows/cols [0, hi)
    std::size_t iter_guard = 0;
    const std::size_t max_iters = 400 * n;

    auto wilkinson_shift = [&](std::size_t m) -> Cplx {
        // Eigenvalue of the trailing 2x2 closest to H[m-1][m-1].
        const Cplx a = H[m - 2][m - 2], b = H[m - 2][m - 1];
        const Cplx c = H[m - 1][m - 2], d = H[m - 1][m - 1];
        const Cplx tr = a + d;
        const Cplx disc = std::sqrt(tr * tr - 4.0 * (a * d - b * c));
        const Cplx l1 = (tr + disc) * 0.5, l2 = (tr - disc) * 0.5;
        return std::abs(l1 - d) < std::abs(l2 - d) ? l1 : l2;
    };

    while (hi > 0) {
        if (hi == 1) {
            eig[0] = H[0][0];
            break;
        }
        // Deflate converged trailing entries.
        const double tol = 1e-15;
        if (std::abs(H[hi - 1][hi - 2]) <=
            tol * (std::abs(H[hi - 2][hi - 2]) + std::abs(H[hi - 1][hi - 1]))) {
            eig[hi - 1] = H[hi - 1][hi - 1];
            --hi;
            continue;
        }
        if (++iter_guard > max_iters)
            throw std::runtime_error("eigenvalues_small: QR iteration did not converge");

        Cplx shift = wilkinson_shift(hi);
        // Exceptional shift now and then to break symmetry stalls.
        if (iter_guard % 31 == 0)
            shift += Cplx(std::abs(H[hi - 1][hi - 2]), std::abs(H[hi - 1][hi - 2]));

        // Explicit QR of (H - shift I) on the active block via Givens
        // rotations acting on the Hessenberg structure.
        for (std::size_t i = 0; i < hi; ++i) H[i][i] -= shift;
        std::vector<Cplx> cs(hi - 1), sn(hi - 1);
        for (std::size_t k = 0; k + 1 < hi; ++k) {
            const Cplx x = H[k][k], y = H[k + 1][k];
            const double r = std::hypot(std::abs(x), std::abs(y));
            if (r == 0.0) {
                cs[k] = 1.0;
                sn[k] = 0.0;
                continue;
            }
            cs[k] = x / r;
            sn[k] = y / r;
            for (std::size_t j = k; j < hi; ++j) {
                const Cplx t1 = H[k][j], t2 = H[k + 1][j];
                H[k][j] = std::conj(cs[k]) * t1 + std::conj(sn[k]) * t2;
                H[k + 1][j] = -sn[k] * t1 + cs[k] * t2;
            }
        }
        for (std::size_t k = 0; k + 1 < hi; ++k) {
            for (std::size_t i = 0; i <= std::min(k + 2, hi - 1); ++i) {
                const Cplx t1 = H[i][k], t2 = H[i][k + 1];
                H[i][k] = t1 * cs[k] + t2 * sn[k];
                H[i][k + 1] = -t1 * std::conj(sn[k]) + t2 * std::conj(cs[k]);
            }
        }
        for (std::size_t i = 0; i < hi; ++i) H[i][i] += shift;
    }
    return eig;
}

inline double spectral_radius(const std::vector<double>& A_rowmajor, std::size_t n) {
    double rho = 0.0;
    for (const Cplx& l : eigenvalues_small(A_rowmajor, n)) rho = std::max(rho, std::abs(l));
    return rho;
}

/// Spectral radius estimate by power iteration, tracking the geometric mean
/// of growth factors (robust to complex dominant pairs, where the plain
/// Rayleigh quotient oscillates).
inline double spectral_radius_power(const std::vector<double>& A_rowmajor, std::size_t n,
                                    std::size_t iters = 500, std::uint64_t seed = 12345) {
    if (A_rowmajor.size() != n * n) throw std::invalid_argument("spectral_radius_power: bad size");
    Rng rng(seed);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = rng.normal();
    double log_growth = 0.0;
    std::size_t counted = 0;
    const std::size_t warmup = iters / 5;
    for (std::size_t it = 0; it < iters; ++it) {
        double nx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += A_rowmajor[i * n + j] * x[j];
            y[i] = s;
            nx += s * s;
        }
        nx = std::sqrt(nx);
        if (nx == 0.0) return 0.0;
        if (it >= warmup) {
            log_growth += std::log(nx);
            ++counted;
        }
        for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / nx;
    }
    return std::exp(log_growth / static_cast<double>(counted));
}

/// Roots of the monic polynomial z^N + c[0] z^{N-1} + ... + c[N-1], computed
/// as eigenvalues of its companion matrix.
inline std::vector<Cplx> companion_roots(const std::vector<double>& c) {
    const std::size_t N = c.size();
    if (N == 0) return {};
    if (N == 1) return {Cplx(-c[0], 0.0)};
    std::vector<double> comp(N * N, 0.0);
    for (std::size_t j = 0; j < N; ++j) comp[0 * N + j] = -c[j];
    for (std::size_t i = 1; i < N; ++i) comp[i * N + (i - 1)] = 1.0;
    return eigenvalues_small(comp, N);
}

}  // namespace loja
