#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "polyheights/detail/linalg.hpp"
#include "polyheights/errors.hpp"
#include "polyheights/escape.hpp"
#include "polyheights/marked_polynomial.hpp"

namespace polyheights {

inline double wrap_angle(double a) {
    const double twopi = 2.0 * std::numbers::pi;
    a = std::fmod(a, twopi);
    if (a <= -std::numbers::pi) a += twopi;
    if (a > std::numbers::pi) a -= twopi;
    return a;
}

// log phi(z) for the Boettcher coordinate phi tangent to the identity at
// infinity, via the convergent product
//
//     phi(z) = z * prod_k (f(z_k)/z_k^d)^{1/d^{k+1}},   z_k = f^k(z).
//
// Every factor is taken with the principal log; a factor with nonpositive
// real part aborts with BranchAmbiguity.  The imaginary part is one
// deterministic representative of arg phi mod 2pi.  Factors are evaluated as
// series in 1/z_k, so the orbit is never raised to the d-th power directly.
inline Complex log_phi(const MarkedPolynomial& f, Complex z, double tol = 1e-13) {
    const int d = f.degree;
    const double coeff_sum = nonleading_coefficient_sum(f);
    if (z == Complex{0.0, 0.0}) throw BranchAmbiguity("log_phi: z = 0");

    Complex acc = std::log(z);
    double scale = 1.0 / d;
    for (int k = 0; k < 4096; ++k) {
        const double az = std::abs(z);
        if (az > coeff_sum + 2.0) {
            const double tail = scale * std::log1p(coeff_sum / (az - coeff_sum)) *
                                (static_cast<double>(d) / (d - 1));
            if (tail < tol || az > 1e20) return acc;
        }
        const Complex u = Complex{1.0, 0.0} / z;
        Complex factor{1.0, 0.0};
        Complex upow = u * u;
        for (int j = d - 2; j >= 0; --j) {
            factor += f.coefficients[j] * upow;
            upow *= u;
        }
        if (!(factor.real() > 0.0))
            throw BranchAmbiguity("log_phi: product factor left the right half-plane");
        acc += scale * std::log(factor);
        z = evaluate(f, z);
        scale /= d;
    }
    throw BranchAmbiguity("log_phi: product did not converge");
}

// d/dz log phi(z) = lim d^{-n} (f^n)'(z) / f^n(z).
inline Complex log_phi_derivative(const MarkedPolynomial& f, Complex z) {
    const int d = f.degree;
    Complex s = Complex{1.0, 0.0} / z;
    for (int k = 0; k < 4096; ++k) {
        const Complex fz = evaluate(f, z);
        if (fz == Complex{0.0, 0.0}) throw BranchAmbiguity("log_phi_derivative: orbit hit 0");
        const Complex ratio = z * evaluate_derivative(f, z) / (static_cast<double>(d) * fz);
        s *= ratio;
        z = fz;
        if (std::abs(z) > 1e16 && std::abs(ratio - Complex{1.0, 0.0}) < 1e-14) return s;
    }
    throw BranchAmbiguity("log_phi_derivative: did not converge");
}

struct BoettcherValue {
    Complex w{0.0, 0.0};
    Complex log_w{0.0, 0.0};
    double modulus_check = 0.0;    // |log|w| - G(z)|
    double conjugacy_defect = 0.0; // |phi(f(z)) - phi(z)^d| / |phi(z)^d|
};

// Boettcher coordinate at z; defined only strictly above the maximal
// critical level.
inline BoettcherValue boettcher(const MarkedPolynomial& f, Complex z, double tol = 1e-13) {
    const EscapeBudget budget = standard_budget(f, std::min(tol, 1e-12));
    const CriticalHeights ch = heights(f, budget);
    const EscapeValue gz = green(f, z, budget);
    if (!gz.escaped || !(gz.value > ch.M()))
        throw BelowCriticalLevel("boettcher: G(z) <= M(f), coordinate undefined here");

    BoettcherValue out;
    out.log_w = log_phi(f, z, tol);
    out.w = std::exp(out.log_w);
    out.modulus_check = std::abs(out.log_w.real() - gz.value);
    const Complex conj_diff = log_phi(f, evaluate(f, z), tol) -
                              static_cast<double>(f.degree) * out.log_w;
    out.conjugacy_defect =
        std::abs(std::exp(Complex{conj_diff.real(), wrap_angle(conj_diff.imag())}) -
                 Complex{1.0, 0.0});
    return out;
}

struct RayPoint {
    double height = 0.0;
    double angle = 0.0;
    Complex z{0.0, 0.0};
};

struct RayTrace {
    std::vector<RayPoint> points;
    bool obstructed = false;
    double failure_height = 0.0;
};

namespace detail_ray {

// One Newton solve of log phi(z) = h + i*theta from the given seed.
inline std::optional<Complex> ray_newton(const MarkedPolynomial& f, Complex z,
                                         double h, double theta, double tol = 1e-12) {
    for (int it = 0; it < 40; ++it) {
        Complex r;
        try {
            const Complex lp = log_phi(f, z);
            r = Complex{lp.real() - h, wrap_angle(lp.imag() - theta)};
        } catch (const DomainError&) {
            return std::nullopt;
        }
        if (std::abs(r) < tol) return z;
        Complex deriv;
        try {
            deriv = log_phi_derivative(f, z);
        } catch (const DomainError&) {
            return std::nullopt;
        }
        if (std::abs(deriv) < 1e-300) return std::nullopt;
        z -= r / deriv;
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace detail_ray

// Follows the external ray of the given angle from h_start down to h_end by
// Newton continuation on a descending height grid.  Near a critical level the
// coordinate degenerates; the step is halved and, failing that, the partial
// path is returned flagged as obstructed rather than choosing a continuation.
inline RayTrace trace_ray(const MarkedPolynomial& f, double theta, double h_start,
                          double h_end, int steps) {
    const EscapeBudget budget = standard_budget(f);
    const CriticalHeights ch = heights(f, budget);
    if (!(h_start > h_end) || !(h_end > ch.M()))
        throw BelowCriticalLevel("trace_ray: need h_start > h_end > M(f)");
    if (steps < 1) throw DomainError("trace_ray: need steps >= 1");

    RayTrace out;
    Complex z = std::exp(Complex{h_start, theta});
    auto first = detail_ray::ray_newton(f, z, h_start, theta);
    if (!first) {
        out.obstructed = true;
        out.failure_height = h_start;
        return out;
    }
    z = *first;
    out.points.push_back({h_start, theta, z});

    const double coarse = (h_start - h_end) / steps;
    double h = h_start;
    while (h > h_end + 1e-15) {
        double dh = std::min(coarse, h - h_end);
        bool advanced = false;
        for (int halving = 0; halving < 24 && !advanced; ++halving) {
            const double h_next = h - dh;
            Complex z_pred = z;
            try {
                z_pred = z - Complex{dh, 0.0} / log_phi_derivative(f, z);
            } catch (const DomainError&) {
            }
            if (auto zn = detail_ray::ray_newton(f, z_pred, h_next, theta)) {
                z = *zn;
                h = h_next;
                out.points.push_back({h, theta, z});
                advanced = true;
            } else {
                dh /= 2;
            }
        }
        if (!advanced) {
            out.obstructed = true;
            out.failure_height = h;
            return out;
        }
    }
    return out;
}

// Image of the coordinate map Phi_n in log form: log_w[i] with real part
// d^{n_i} G(c_i) (marking order) and imaginary part in (-pi, pi].  Kept in
// logs so deep targets never overflow; w_i itself is exp(log_w[i]).  Uniform
// levels n_i = n give the map Phi_n; the census pins each coordinate at its
// own minimal level instead, which indexes the same fiber with O(1) sheets
// per angle cell.
struct PhiImage {
    int d = 2;
    int n = 1;
    std::vector<int> levels;  // per-coordinate; uniform n when defaulted
    std::vector<Complex> log_w;

    int level_of(int i) const { return levels.empty() ? n : levels[i]; }
};

inline PhiImage psi_map(const MarkedPolynomial& f, int n, const std::vector<int>& levels,
                        const EscapeBudget& budget) {
    const int d = f.degree;
    const CriticalHeights ch = heights(f, budget);
    const double M = ch.M();
    if (d * M > 280.0) throw DomainError("psi_map: maximal height too large to iterate");

    PhiImage out;
    out.d = d;
    out.n = n;
    out.levels = levels;
    for (int i = 0; i < d - 1; ++i) {
        const int ni = levels.empty() ? n : levels[i];
        const EscapeValue& hv = ch.marked[i];
        if (!hv.escaped || hv.value <= 0.0)
            throw NotInDomain("psi_map: critical point does not escape", i);
        // least iterate whose image clears the maximal critical level
        int m = 1;
        double lifted = hv.value * d;
        while (!(lifted > M) && m <= ni + 1) {
            lifted *= d;
            ++m;
        }
        if (m > ni)
            throw NotInDomain("psi_map: G(f^n(c_i)) <= M(f), polynomial outside S_d(n)", i);
        Complex zi = f.critical_points[i];
        for (int k = 0; k < m; ++k) zi = evaluate(f, zi);
        const Complex psi = log_phi(f, zi);
        const double pw = std::pow(static_cast<double>(d), static_cast<double>(ni - m));
        out.log_w.push_back(Complex{pw * psi.real(), wrap_angle(pw * psi.imag())});
    }
    return out;
}

inline PhiImage phi_n_map(const MarkedPolynomial& f, int n, const EscapeBudget& budget) {
    if (n < 1) throw DomainError("phi_n_map: need n >= 1");
    return psi_map(f, n, {}, budget);
}

struct PhiInversion {
    MarkedPolynomial poly;
    double residual = 0.0;
    bool converged = false;
    bool left_domain = false;
    int iterations = 0;
};

namespace detail_newton {

struct MarkedChart {
    // Coordinates on the centered hyperplane times C: u = (t_1..t_{d-2}, a).
    std::vector<std::vector<double>> basis;
    int d;

    explicit MarkedChart(int degree) : basis(centered_hyperplane_basis(degree)), d(degree) {}

    std::vector<Complex> to_params(const MarkedPolynomial& f) const {
        std::vector<Complex> u;
        for (const auto& b : basis) {
            Complex t{0.0, 0.0};
            for (int i = 0; i < d - 1; ++i) t += f.critical_points[i] * b[i];
            u.push_back(t);
        }
        u.push_back(f.translation);
        return u;
    }

    MarkedPolynomial to_poly(const std::vector<Complex>& u) const {
        std::vector<Complex> c(d - 1, Complex{0.0, 0.0});
        for (std::size_t k = 0; k < basis.size(); ++k)
            for (int i = 0; i < d - 1; ++i) c[i] += u[k] * basis[k][i];
        // The basis spans the centered hyperplane; squash rounding residue.
        Complex mean{0.0, 0.0};
        for (const Complex& ci : c) mean += ci;
        mean /= static_cast<double>(d - 1);
        for (Complex& ci : c) ci -= mean;
        return from_critical_data(std::move(c), u.back());
    }
};

inline std::vector<Complex> cylinder_residual(const PhiImage& value, const PhiImage& target) {
    std::vector<Complex> r(value.log_w.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = Complex{value.log_w[i].real() - target.log_w[i].real(),
                       wrap_angle(value.log_w[i].imag() - target.log_w[i].imag())};
    return r;
}

inline double residual_norm(const std::vector<Complex>& r) {
    double m = 0;
    for (const Complex& ri : r) m = std::max(m, std::abs(ri));
    return m;
}

}  // namespace detail_newton

// Newton iteration on Phi_n(c; a) = target over the chart (t; a), with the
// step damped by halving until the residual decreases.  Returns the best
// iterate with flags; tests and the census re-verify by forward evaluation.
inline PhiInversion invert_phi_n(int d, int n, const PhiImage& target,
                                 const MarkedPolynomial& seed, double tol,
                                 const EscapeBudget& budget, int max_iter = 60) {
    if (seed.degree != d || static_cast<int>(target.log_w.size()) != d - 1)
        throw DomainError("invert_phi_n: degree mismatch");
    const detail_newton::MarkedChart chart(d);

    auto eval = [&](const std::vector<Complex>& u) {
        return detail_newton::cylinder_residual(
            psi_map(chart.to_poly(u), n, target.levels, budget), target);
    };

    std::vector<Complex> u = chart.to_params(seed);
    PhiInversion out;
    out.poly = seed;

    std::vector<Complex> r;
    try {
        r = eval(u);
    } catch (const DomainError&) {
        out.left_domain = true;
        out.residual = std::numeric_limits<double>::infinity();
        return out;
    }
    double rnorm = detail_newton::residual_norm(r);

    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it;
        if (rnorm < tol) {
            out.converged = true;
            break;
        }
        const int dim = d - 1;
        std::vector<std::vector<Complex>> jac(dim, std::vector<Complex>(dim));
        bool jac_ok = true;
        for (int j = 0; j < dim && jac_ok; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(u[j]));
            auto up = u, um = u;
            up[j] += h;
            um[j] -= h;
            try {
                const auto rp = eval(up);
                const auto rm = eval(um);
                for (int i = 0; i < dim; ++i) {
                    const Complex diff{rp[i].real() - rm[i].real(),
                                       wrap_angle(rp[i].imag() - rm[i].imag())};
                    jac[i][j] = diff / (2 * h);
                }
            } catch (const DomainError&) {
                jac_ok = false;
            }
        }
        if (!jac_ok) {
            out.left_domain = true;
            break;
        }
        std::vector<Complex> rhs(dim);
        for (int i = 0; i < dim; ++i) rhs[i] = -r[i];
        std::vector<Complex> delta;
        try {
            delta = detail::solve_complex(jac, rhs);
        } catch (const std::runtime_error&) {
            break;
        }

        bool accepted = false;
        double lambda = 1.0;
        for (int halving = 0; halving < 30; ++halving, lambda /= 2) {
            auto u_try = u;
            for (int j = 0; j < dim; ++j) u_try[j] += lambda * delta[j];
            try {
                auto r_try = eval(u_try);
                const double rn_try = detail_newton::residual_norm(r_try);
                if (rn_try < rnorm) {
                    u = std::move(u_try);
                    r = std::move(r_try);
                    rnorm = rn_try;
                    accepted = true;
                    break;
                }
            } catch (const DomainError&) {
                out.left_domain = true;  // damped retry follows
            }
        }
        if (!accepted) break;
    }
    if (rnorm < tol) out.converged = true;
    if (out.converged) out.left_domain = false;
    out.poly = chart.to_poly(u);
    out.residual = rnorm;
    return out;
}

}  // namespace polyheights
