#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

// Small dense kernels for the low-dimensional systems that appear here:
// Newton steps in at most d-1 complex unknowns, singular values of the
// (d-1) x (2d-2) heights Jacobian, all roots of a degree-d polynomial.
// Sizes stay in the single digits, so plain O(n^3) routines are used.

namespace polyheights::detail {

using Cplx = std::complex<double>;

// Solves A x = b in place by Gaussian elimination with partial pivoting.
inline std::vector<Cplx> solve_complex(std::vector<std::vector<Cplx>> a,
                                       std::vector<Cplx> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-300)
            throw std::runtime_error("singular linear system");
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < n; ++r) {
            const Cplx m = a[r][col] / a[col][col];
            for (int c = col; c < n; ++c) a[r][c] -= m * a[col][c];
            b[r] -= m * b[col];
        }
    }
    std::vector<Cplx> x(n);
    for (int r = n - 1; r >= 0; --r) {
        Cplx s = b[r];
        for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return x;
}

// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(std::vector<std::vector<double>> s) {
    const int n = static_cast<int>(s.size());
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += s[p][q] * s[p][q];
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(s[p][q]) < 1e-300) continue;
                const double theta = (s[q][q] - s[p][p]) / (2 * s[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1);
                const double sn = t * c;
                for (int k = 0; k < n; ++k) {
                    const double skp = s[k][p], skq = s[k][q];
                    s[k][p] = c * skp - sn * skq;
                    s[k][q] = sn * skp + c * skq;
                }
                for (int k = 0; k < n; ++k) {
                    const double spk = s[p][k], sqk = s[q][k];
                    s[p][k] = c * spk - sn * sqk;
                    s[q][k] = sn * spk + c * sqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (int i = 0; i < n; ++i) ev[i] = s[i][i];
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

// Singular values (descending) of an m x n real matrix, via eigenvalues of
// the smaller Gram matrix.
inline std::vector<double> singular_values(const std::vector<std::vector<double>>& a) {
    const int m = static_cast<int>(a.size());
    const int n = m ? static_cast<int>(a[0].size()) : 0;
    const bool use_rows = m <= n;
    const int k = use_rows ? m : n;
    std::vector<std::vector<double>> gram(k, std::vector<double>(k, 0.0));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            double s = 0;
            if (use_rows)
                for (int t = 0; t < n; ++t) s += a[i][t] * a[j][t];
            else
                for (int t = 0; t < m; ++t) s += a[t][i] * a[t][j];
            gram[i][j] = s;
        }
    auto ev = symmetric_eigenvalues(std::move(gram));
    std::vector<double> sv(k);
    for (int i = 0; i < k; ++i) sv[i] = std::sqrt(std::max(0.0, ev[i]));
    return sv;
}

// All roots of sum coeffs[k] z^k by the Durand-Kerner iteration.  The leading
// coefficient must be nonzero; degree stays small so no deflation is needed.
inline std::vector<Cplx> polynomial_roots(const std::vector<Cplx>& coeffs) {
    int deg = static_cast<int>(coeffs.size()) - 1;
    while (deg > 0 && std::abs(coeffs[deg]) == 0.0) --deg;
    if (deg <= 0) return {};
    std::vector<Cplx> c(coeffs.begin(), coeffs.begin() + deg + 1);
    for (auto& ck : c) ck /= c[deg];

    double rad = 0;
    for (int k = 0; k < deg; ++k) rad = std::max(rad, std::pow(std::abs(c[k]), 1.0 / (deg - k)));
    rad = 2 * rad + 1;

    std::vector<Cplx> r(deg);
    const Cplx seed(0.4, 0.9);  // not a root of unity
    Cplx p = 1;
    for (int i = 0; i < deg; ++i) {
        p *= seed;
        r[i] = rad * p / std::abs(p);
    }
    for (int iter = 0; iter < 500; ++iter) {
        double shift = 0;
        for (int i = 0; i < deg; ++i) {
            Cplx num = 0;
            for (int k = deg; k >= 0; --k) num = num * r[i] + c[k];
            Cplx den = 1;
            for (int j = 0; j < deg; ++j)
                if (j != i) den *= r[i] - r[j];
            if (std::abs(den) < 1e-300) den = 1e-300;
            const Cplx delta = num / den;
            r[i] -= delta;
            shift = std::max(shift, std::abs(delta));
        }
        if (shift < 1e-13 * (1 + rad)) break;
    }
    return r;
}

// Exact determinant of a small integer matrix (Bareiss fraction-free
// elimination; all intermediates stay integral).
inline std::int64_t integer_determinant(std::vector<std::vector<std::int64_t>> m) {
    const int n = static_cast<int>(m.size());
    std::int64_t sign = 1, prev = 1;
    for (int k = 0; k < n - 1; ++k) {
        if (m[k][k] == 0) {
            int piv = -1;
            for (int r = k + 1; r < n; ++r)
                if (m[r][k] != 0) { piv = r; break; }
            if (piv < 0) return 0;
            std::swap(m[k], m[piv]);
            sign = -sign;
        }
        for (int i = k + 1; i < n; ++i)
            for (int j = k + 1; j < n; ++j)
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
        prev = m[k][k];
    }
    return sign * m[n - 1][n - 1];
}

}  // namespace polyheights::detail
