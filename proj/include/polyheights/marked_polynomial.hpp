#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "polyheights/errors.hpp"

namespace polyheights {

using Complex = std::complex<double>;

// Monic centered polynomial of degree d, parameterized by its d-1 marked
// critical points c_1..c_{d-1} (with sum zero) and the value a = f(0):
//
//     f(z) = integral_0^z d * prod (zeta - c_i) dzeta + a.
//
// Expanded coefficients are cached at construction; iteration always runs in
// Horner form.  Instances are immutable and safe to share across threads.
struct MarkedPolynomial {
    int degree = 0;
    std::vector<Complex> critical_points;
    Complex translation{0.0, 0.0};
    std::vector<Complex> coefficients;  // coefficients[k] multiplies z^k, size degree+1
};

inline constexpr double kCenteringTolerance = 1e-12;

inline MarkedPolynomial from_critical_data(std::vector<Complex> c, Complex a) {
    const int d = static_cast<int>(c.size()) + 1;
    if (d < 2) throw DomainError("need at least one critical point (degree >= 2)");

    Complex sum{0.0, 0.0};
    for (const Complex& ci : c) sum += ci;
    if (std::abs(sum) > kCenteringTolerance)
        throw NonCenteredInput("critical points do not sum to zero; project onto the centered hyperplane first");

    // prod (z - c_i) = sum elem[k] z^k
    std::vector<Complex> elem(1, Complex{1.0, 0.0});
    for (const Complex& ci : c) {
        std::vector<Complex> next(elem.size() + 1, Complex{0.0, 0.0});
        for (std::size_t k = 0; k < elem.size(); ++k) {
            next[k + 1] += elem[k];
            next[k] -= ci * elem[k];
        }
        elem = std::move(next);
    }

    MarkedPolynomial f;
    f.degree = d;
    f.critical_points = std::move(c);
    f.translation = a;
    f.coefficients.assign(d + 1, Complex{0.0, 0.0});
    f.coefficients[0] = a;
    for (int k = 0; k < d; ++k)
        f.coefficients[k + 1] = elem[k] * (static_cast<double>(d) / (k + 1));
    // Monic and centered hold exactly by construction; pin them against the
    // rounding of the expansion above.
    f.coefficients[d] = Complex{1.0, 0.0};
    f.coefficients[d - 1] = Complex{0.0, 0.0};
    return f;
}

inline Complex evaluate(const MarkedPolynomial& f, Complex z) {
    Complex acc = f.coefficients[f.degree];
    for (int k = f.degree - 1; k >= 0; --k) acc = acc * z + f.coefficients[k];
    return acc;
}

// f'(z) from the cached coefficients.
inline Complex evaluate_derivative(const MarkedPolynomial& f, Complex z) {
    Complex acc = static_cast<double>(f.degree) * f.coefficients[f.degree];
    for (int k = f.degree - 1; k >= 1; --k)
        acc = acc * z + static_cast<double>(k) * f.coefficients[k];
    return acc;
}

// f'(z) in product form d * prod (z - c_i); the independent route used by
// coefficient cross-checks.
inline Complex derivative_product_form(const MarkedPolynomial& f, Complex z) {
    Complex acc{static_cast<double>(f.degree), 0.0};
    for (const Complex& ci : f.critical_points) acc *= z - ci;
    return acc;
}

// Sum of |coefficients| below the leading term; controls how far f(z) can
// stray from z^d.
inline double nonleading_coefficient_sum(const MarkedPolynomial& f) {
    double s = 0;
    for (int k = 0; k < f.degree; ++k) s += std::abs(f.coefficients[k]);
    return s;
}

// R with |z| > R  =>  |f(z)| >= 2|z|, so orbits past R escape monotonically.
inline double escape_radius(const MarkedPolynomial& f) {
    return std::max(2.0, 2.0 * (1.0 + nonleading_coefficient_sum(f)));
}

// Evaluation over a caller-supplied complex type (used by the high-precision
// oracle checks; Cx must be constructible from (double, double)).
template <class Cx>
Cx evaluate_as(const MarkedPolynomial& f, Cx z) {
    Cx acc(1.0, 0.0);
    for (int k = f.degree - 1; k >= 0; --k) {
        const Complex& co = f.coefficients[k];
        acc = acc * z + Cx(co.real(), co.imag());
    }
    return acc;
}

}  // namespace polyheights
