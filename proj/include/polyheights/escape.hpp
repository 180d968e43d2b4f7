#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <utility>
#include <vector>

#include "polyheights/detail/linalg.hpp"
#include "polyheights/errors.hpp"
#include "polyheights/marked_polynomial.hpp"

namespace polyheights {

struct EscapeBudget {
    double escape_radius = 2.0;
    int max_iterations = 10000;
    double target_tolerance = 1e-10;
};

inline EscapeBudget standard_budget(const MarkedPolynomial& f, double tol = 1e-10,
                                    int max_iterations = 10000) {
    return EscapeBudget{escape_radius(f), max_iterations, tol};
}

struct EscapeValue {
    double value = 0.0;       // escape rate, natural-log units; 0 when not escaped
    int iterations_used = 0;
    double error_bound = 0.0; // tail bound if escaped, unresolved threshold otherwise
    bool escaped = false;
};

// Escape rate lim d^{-n} log|f^n(z)|.  Iterates until |z_n| clears the escape
// radius, then refines d^{-n} log|z_n| with the telescoping corrections
// d^{-(k+1)} log|f(z_k)/z_k^d| until the tail falls under the tolerance.  The
// correction factor is evaluated as a series in 1/z_k so nothing overflows.
template <class Cx>
EscapeValue green_with(const MarkedPolynomial& f, Cx z, const EscapeBudget& budget) {
    using std::abs;
    using std::log;
    const int d = f.degree;
    const double coeff_sum = nonleading_coefficient_sum(f);
    const double radius = std::max(budget.escape_radius, escape_radius(f));

    int n = 0;
    auto az = abs(z);
    while (!(az > radius)) {
        if (n >= budget.max_iterations) {
            EscapeValue ev;
            ev.iterations_used = n;
            ev.escaped = false;
            // Anything unresolved after n steps has G <= d^{-n} sup{G : |w| <= R}.
            ev.error_bound =
                std::max(std::pow(static_cast<double>(d), -static_cast<double>(n)) *
                             std::log(2.0 * radius + 2.0),
                         std::numeric_limits<double>::min());
            return ev;
        }
        z = evaluate_as(f, z);
        ++n;
        az = abs(z);
    }

    double scale = std::pow(static_cast<double>(d), -static_cast<double>(n));
    auto g = log(az) * scale;
    double err = 0.0;
    for (;;) {
        const double az_d = static_cast<double>(az);
        const double tail = (scale / d) * std::log1p(coeff_sum / (az_d - coeff_sum)) *
                            (static_cast<double>(d) / (d - 1));
        if (tail < budget.target_tolerance || az_d > 1e20 ||
            n >= budget.max_iterations + 64) {
            err = tail;
            break;
        }
        // factor = f(z)/z^d = 1 + sum_{k<=d-2} coeff[k] (1/z)^{d-k}
        const Cx u = Cx(1.0, 0.0) / z;
        Cx factor(1.0, 0.0);
        Cx upow = u * u;
        for (int k = d - 2; k >= 0; --k) {
            const Complex& co = f.coefficients[k];
            factor = factor + Cx(co.real(), co.imag()) * upow;
            upow = upow * u;
        }
        g += log(abs(factor)) * (scale / d);
        z = evaluate_as(f, z);
        az = abs(z);
        scale /= d;
        ++n;
    }
    EscapeValue ev;
    ev.value = static_cast<double>(g);
    ev.iterations_used = n;
    ev.error_bound = err;
    ev.escaped = true;
    return ev;
}

inline EscapeValue green(const MarkedPolynomial& f, Complex z, const EscapeBudget& budget) {
    if (std::isnan(z.real()) || std::isnan(z.imag()))
        throw DomainError("green: NaN input point");
    if (!(budget.target_tolerance > 0))
        throw DomainError("green: tolerance must be positive");
    return green_with<Complex>(f, z, budget);
}

// Value of the critical heights map: escape rates of the marked critical
// points, sorted descending (h_1 >= ... >= h_{d-1} >= 0).
struct HeightsVector {
    int d = 2;
    std::vector<double> heights;
    double M() const { return heights.empty() ? 0.0 : heights.front(); }
};

struct CriticalHeights {
    HeightsVector hv;
    std::vector<EscapeValue> marked;   // marking order, unsorted
    std::vector<char> escaped_sorted;  // aligned with hv.heights
    double M() const { return hv.M(); }
    bool all_escaped() const {
        for (const auto& ev : marked)
            if (!ev.escaped) return false;
        return true;
    }
};

inline CriticalHeights heights(const MarkedPolynomial& f, const EscapeBudget& budget) {
    CriticalHeights out;
    out.hv.d = f.degree;
    out.marked.reserve(f.critical_points.size());
    for (const Complex& c : f.critical_points) out.marked.push_back(green(f, c, budget));

    std::vector<std::pair<double, char>> rows;
    rows.reserve(out.marked.size());
    for (const auto& ev : out.marked) rows.emplace_back(ev.value, ev.escaped ? 1 : 0);
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [h, flag] : rows) {
        out.hv.heights.push_back(h);
        out.escaped_sorted.push_back(flag);
    }
    return out;
}

// Orthonormal basis of the centered hyperplane {sum c_i = 0} in C^{d-1},
// built from differences of consecutive standard basis vectors.  Vectors are
// real; the complex directions are v and i*v.
inline std::vector<std::vector<double>> centered_hyperplane_basis(int d) {
    const int dim = d - 1;
    std::vector<std::vector<double>> basis;
    for (int k = 0; k + 1 < dim; ++k) {
        std::vector<double> v(dim, 0.0);
        v[k] = 1.0;
        v[k + 1] = -1.0;
        for (const auto& b : basis) {
            double dot = 0;
            for (int i = 0; i < dim; ++i) dot += v[i] * b[i];
            for (int i = 0; i < dim; ++i) v[i] -= dot * b[i];
        }
        double mean = 0;
        for (double x : v) mean += x;
        mean /= dim;
        for (double& x : v) x -= mean;  // keep the zero-sum constraint exact
        double norm = 0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    return basis;
}

struct HeightsJacobianResult {
    // Row i: marked height i.  Columns: (Re, Im) pairs along each hyperplane
    // basis vector, then (Re a, Im a).  Size (d-1) x (2d-2).
    std::vector<std::vector<double>> matrix;
    std::vector<std::vector<double>> h_basis;  // recorded for reproducibility
    double step = 0.0;
};

// Central finite differences of the marked critical heights with respect to
// the real coordinates of (c; a) restricted to the centered hyperplane.
inline HeightsJacobianResult heights_jacobian(const MarkedPolynomial& f, double step,
                                              const EscapeBudget& budget) {
    const int d = f.degree;
    const int dim = d - 1;
    {
        const CriticalHeights base = heights(f, budget);
        if (!base.all_escaped() || base.hv.heights.back() <= 0.0)
            throw DomainError("heights_jacobian: polynomial is not in the shift locus");
    }

    const auto basis = centered_hyperplane_basis(d);
    auto marked_heights = [&](const std::vector<Complex>& c, Complex a) {
        const MarkedPolynomial g = from_critical_data(c, a);
        std::vector<double> h(dim);
        for (int i = 0; i < dim; ++i) {
            const EscapeValue ev = green(g, g.critical_points[i], budget);
            if (!ev.escaped)
                throw StepTooLarge("heights_jacobian: perturbation left the shift locus");
            h[i] = ev.value;
        }
        return h;
    };

    HeightsJacobianResult out;
    out.h_basis = basis;
    out.step = step;
    out.matrix.assign(dim, std::vector<double>(2 * dim, 0.0));

    std::vector<std::pair<std::vector<Complex>, Complex>> plus, minus;
    for (const auto& v : basis) {
        for (int part = 0; part < 2; ++part) {
            const Complex unit = part == 0 ? Complex{1.0, 0.0} : Complex{0.0, 1.0};
            std::vector<Complex> cp = f.critical_points, cm = f.critical_points;
            for (int i = 0; i < dim; ++i) {
                cp[i] += step * unit * v[i];
                cm[i] -= step * unit * v[i];
            }
            plus.emplace_back(std::move(cp), f.translation);
            minus.emplace_back(std::move(cm), f.translation);
        }
    }
    for (int part = 0; part < 2; ++part) {
        const Complex unit = part == 0 ? Complex{1.0, 0.0} : Complex{0.0, 1.0};
        plus.emplace_back(f.critical_points, f.translation + step * unit);
        minus.emplace_back(f.critical_points, f.translation - step * unit);
    }

    for (std::size_t col = 0; col < plus.size(); ++col) {
        const auto hp = marked_heights(plus[col].first, plus[col].second);
        const auto hm = marked_heights(minus[col].first, minus[col].second);
        for (int i = 0; i < dim; ++i)
            out.matrix[i][col] = (hp[i] - hm[i]) / (2 * step);
    }
    return out;
}

// Count of singular values above rel_threshold times the largest.
inline int numerical_rank(const std::vector<std::vector<double>>& matrix,
                          double rel_threshold = 1e-6) {
    const auto sv = detail::singular_values(matrix);
    if (sv.empty() || sv.front() <= 0) return 0;
    int rank = 0;
    for (double s : sv)
        if (s > rel_threshold * sv.front()) ++rank;
    return rank;
}

}  // namespace polyheights
