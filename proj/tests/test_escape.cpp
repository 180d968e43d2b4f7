#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "polyheights/escape.hpp"
#include "support/highprec.hpp"

using namespace polyheights;

namespace {

MarkedPolynomial quadratic(Complex a) { return from_critical_data({Complex{0, 0}}, a); }

// Brute-force escape rate: d^{-n} log |f^n(z)| at 200 bits, no correction
// series.  Independent of the implementation's refinement path.
double green_oracle_200bit(const MarkedPolynomial& f, Complex z, int iterations) {
    testsupport::set_precision_bits(200);
    testsupport::MpComplex zz{z.real(), z.imag()};
    for (int k = 0; k < iterations; ++k) zz = evaluate_as(f, zz);
    testsupport::Real g = boost::multiprecision::log(testsupport::abs(zz));
    for (int k = 0; k < iterations; ++k) g /= f.degree;
    return static_cast<double>(g);
}

std::vector<Complex> random_centered(std::mt19937_64& rng, int d, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<Complex> c;
    Complex sum{0, 0};
    for (int i = 0; i + 1 < d - 1; ++i) {
        c.emplace_back(u(rng), u(rng));
        sum += c.back();
    }
    c.push_back(-sum);
    return c;
}

}  // namespace

TEST_CASE("pure power map has G(z) = log|z| exactly above the escape radius") {
    const auto f = quadratic(Complex{0, 0});
    const auto budget = standard_budget(f, 1e-12);
    const auto ev = green(f, Complex{2, 0}, budget);
    REQUIRE(ev.escaped);
    CHECK(ev.value == std::log(2.0));
    CHECK(ev.error_bound == 0.0);
    CHECK(std::abs(ev.value - 0.6931471805599453) < 1e-15);

    const auto cube = from_critical_data({Complex{0, 0}, Complex{0, 0}}, Complex{0, 0});
    const auto ev3 = green(cube, Complex{0, 7.5}, standard_budget(cube, 1e-12));
    CHECK(ev3.value == std::log(7.5));
}

TEST_CASE("bounded critical orbit of z^3 - 3z reports zero with a flag") {
    const auto f = from_critical_data({Complex{1, 0}, Complex{-1, 0}}, Complex{0, 0});
    const auto ev = green(f, Complex{1, 0}, standard_budget(f));
    CHECK_FALSE(ev.escaped);
    CHECK(ev.value == 0.0);
    CHECK(ev.error_bound > 0.0);  // the unresolved threshold

    const auto ch = heights(f, standard_budget(f));
    CHECK(ch.hv.heights == std::vector<double>{0.0, 0.0});
    CHECK_FALSE(ch.all_escaped());
}

TEST_CASE("G(0) for z^2 + 2 matches the 200-bit brute-force oracle") {
    const auto f = quadratic(Complex{2, 0});
    const double oracle = green_oracle_200bit(f, Complex{0, 0}, 60);
    // frozen from the oracle itself
    CHECK(std::abs(oracle - 0.45478480506111779) < 1e-12);
    const auto ev = green(f, Complex{0, 0}, standard_budget(f, 1e-12));
    REQUIRE(ev.escaped);
    CHECK(std::abs(ev.value - oracle) <= 1e-10);
}

TEST_CASE("heights of z^d vanish and z^2 + 100 matches the functional equation") {
    const auto pure = from_critical_data({Complex{0, 0}, Complex{0, 0}, Complex{0, 0}},
                                         Complex{0, 0});
    const auto ch = heights(pure, standard_budget(pure));
    CHECK(ch.hv.heights == std::vector<double>(3, 0.0));

    const auto f = quadratic(Complex{100, 0});
    const auto budget = standard_budget(f, 1e-12);
    const auto g0 = green(f, Complex{0, 0}, budget);
    REQUIRE(g0.escaped);
    CHECK(std::abs(g0.value - std::log(10.0)) < 0.01);  // ~ (1/2) log 100 + small
    const auto g1 = green(f, evaluate(f, Complex{0, 0}), budget);
    CHECK(std::abs(g1.value - 2 * g0.value) <= 1e-9);
    const double oracle = green_oracle_200bit(f, Complex{0, 0}, 50);
    CHECK(std::abs(oracle - 2.3050727982442845) < 1e-12);  // frozen
    CHECK(std::abs(g0.value - oracle) <= 1e-10);
}

TEST_CASE("the configurable-precision path reproduces the double result") {
    testsupport::set_precision_bits(200);
    const auto f = quadratic(Complex{2, 1});
    const auto budget = standard_budget(f, 1e-14);
    const auto fine = green_with<testsupport::MpComplex>(f, {0.3, 0.4}, budget);
    const auto coarse = green(f, Complex{0.3, 0.4}, budget);
    REQUIRE(fine.escaped);
    CHECK(std::abs(fine.value - coarse.value) <= 1e-13);
}

TEST_CASE("functional equation holds over random parameters and degrees") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int trial = 0; trial < 400; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 3);
        const auto f = from_critical_data(random_centered(rng, d), Complex{u(rng), u(rng)});
        const auto budget = standard_budget(f, 1e-12);
        const double R = escape_radius(f);
        const Complex z{R * (1.05 + std::abs(u(rng))), R * u(rng) * 0.3};
        const auto gz = green(f, z, budget);
        const auto gfz = green(f, evaluate(f, z), budget);
        REQUIRE(gz.escaped);
        REQUIRE(std::abs(gfz.value - d * gz.value) <= 1e-9);
    }
}

TEST_CASE("heights are always sorted descending") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + static_cast<int>(rng() % 3);
        const auto f = from_critical_data(random_centered(rng, d, 1.5), Complex{u(rng), u(rng)});
        const auto ch = heights(f, standard_budget(f));
        for (std::size_t i = 0; i + 1 < ch.hv.heights.size(); ++i)
            REQUIRE(ch.hv.heights[i] >= ch.hv.heights[i + 1]);
    }
}

TEST_CASE("heights vary at first order under halving parameter perturbations") {
    const auto f = quadratic(Complex{5, 1});
    const auto budget = standard_budget(f, 1e-13);
    const double base = green(f, Complex{0, 0}, budget).value;
    double prev_gap = 0;
    for (int k = 0; k < 6; ++k) {
        const double delta = 1e-2 / (1 << k);
        const auto g = quadratic(Complex{5 + delta, 1});
        const double gap = std::abs(green(g, Complex{0, 0}, budget).value - base);
        if (k > 0) {
            const double ratio = prev_gap / gap;
            CHECK(ratio > 1.7);
            CHECK(ratio < 2.3);
        }
        prev_gap = gap;
    }
}

TEST_CASE("degree-2 heights Jacobian matches the analytic gradient at large |a|") {
    const auto f = quadratic(Complex{100, 0});
    const auto jac = heights_jacobian(f, 1e-4, standard_budget(f, 1e-13));
    REQUIRE(jac.matrix.size() == 1);
    REQUIRE(jac.matrix[0].size() == 2);
    // G(0) ~ (1/2) log|a|: gradient (Re a, Im a) / (2 |a|^2)
    CHECK(std::abs(jac.matrix[0][0] - 0.005) < 0.005 * 0.05);
    CHECK(std::abs(jac.matrix[0][1] - 0.0) < 0.005 * 0.05);
}

TEST_CASE("central differences show second-order Richardson behaviour") {
    const auto f = from_critical_data({Complex{0.9, 0.1}, Complex{-0.9, -0.1}}, Complex{2, 1});
    const auto budget = standard_budget(f, 1e-13);
    const auto j1 = heights_jacobian(f, 5e-4, budget);
    const auto j2 = heights_jacobian(f, 1e-3, budget);
    const auto j4 = heights_jacobian(f, 2e-3, budget);
    double num = 0, den = 0;
    for (std::size_t r = 0; r < j1.matrix.size(); ++r)
        for (std::size_t c = 0; c < j1.matrix[r].size(); ++c) {
            num += std::pow(j4.matrix[r][c] - j2.matrix[r][c], 2);
            den += std::pow(j2.matrix[r][c] - j1.matrix[r][c], 2);
        }
    const double ratio = std::sqrt(num / den);
    CHECK(ratio > 2.0);
    CHECK(ratio < 8.0);
}

TEST_CASE("perturbations that leave the shift locus raise StepTooLarge") {
    const auto f = quadratic(Complex{0.2502, 0});  // barely escaping
    EscapeBudget budget = standard_budget(f, 1e-10);
    const auto ch = heights(f, budget);
    REQUIRE(ch.all_escaped());
    CHECK_THROWS_AS(heights_jacobian(f, 0.1, budget), StepTooLarge);
}

TEST_CASE("numerical rank of a known-rank matrix") {
    CHECK(numerical_rank({{1, 0, 0, 0}, {0, 1e-3, 0, 0}}) == 2);
    CHECK(numerical_rank({{1, 0, 0, 0}, {2, 0, 0, 0}}) == 1);
    CHECK(numerical_rank({{1, 0}, {0, 1e-9}}) == 1);
}
