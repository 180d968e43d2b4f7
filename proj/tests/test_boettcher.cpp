#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "polyheights/boettcher.hpp"
#include "support/highprec.hpp"

using namespace polyheights;

namespace {

// 200-bit evaluation of the Boettcher product log z + sum d^{-(k+1)} log(f(z_k)/z_k^d).
Complex log_phi_oracle_200bit(const MarkedPolynomial& f, Complex z, int terms) {
    testsupport::set_precision_bits(200);
    using testsupport::MpComplex;
    MpComplex zz{z.real(), z.imag()};
    MpComplex acc = testsupport::log_c(zz);
    testsupport::Real scale{1};
    for (int k = 0; k < terms; ++k) {
        scale /= f.degree;
        const MpComplex fz = evaluate_as(f, zz);
        MpComplex zpow{1.0, 0.0};
        for (int j = 0; j < f.degree; ++j) zpow = zpow * zz;
        const MpComplex lf = testsupport::log_c(fz / zpow);
        acc = acc + MpComplex{lf.real() * scale, lf.imag() * scale};
        zz = fz;
    }
    return {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
}

double param_distance(const MarkedPolynomial& f, const MarkedPolynomial& g) {
    double m = std::abs(f.translation - g.translation);
    for (std::size_t i = 0; i < f.critical_points.size(); ++i)
        m = std::max(m, std::abs(f.critical_points[i] - g.critical_points[i]));
    return m;
}

MarkedPolynomial random_shift_cubic(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (;;) {
        const Complex c1{u(rng), u(rng)};
        const auto f = from_critical_data({c1, -c1}, Complex{u(rng) * 2, u(rng) * 2});
        const auto ch = heights(f, standard_budget(f, 1e-12, 3000));
        if (ch.all_escaped() && ch.hv.heights.back() > 0.02) return f;
    }
}

}  // namespace

TEST_CASE("Boettcher coordinate of the power map is the identity") {
    for (int d : {2, 3, 4}) {
        const auto f = from_critical_data(std::vector<Complex>(d - 1, Complex{0, 0}),
                                          Complex{0, 0});
        const auto bv = boettcher(f, Complex{1.7, 2.2});
        CHECK(std::abs(bv.w - Complex{1.7, 2.2}) < 1e-13);
        CHECK(bv.modulus_check < 1e-12);
        CHECK(bv.conjugacy_defect < 1e-12);
    }
}

TEST_CASE("truncated product for z^2 + a matches the 200-bit oracle") {
    const auto f = from_critical_data({Complex{0, 0}}, Complex{0.05, 0.02});
    const Complex z{10, 0};
    const Complex oracle = log_phi_oracle_200bit(f, z, 40);
    // frozen from the oracle
    CHECK(std::abs(oracle.real() - 2.3028362895151386) < 1e-13);
    CHECK(std::abs(oracle.imag() - 0.00010044904712711233) < 1e-13);
    const Complex lp = log_phi(f, z);
    CHECK(std::abs(lp - oracle) <= 1e-12);
    const auto bv = boettcher(f, z);
    CHECK(std::abs(bv.w - std::exp(oracle)) <= 1e-12 * std::abs(bv.w));
}

TEST_CASE("conjugacy phi(f(z)) = phi(z)^d on random shift-locus cubics") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const auto f = random_shift_cubic(rng);
        const auto ch = heights(f, standard_budget(f, 1e-12));
        const double level = std::max(std::log(escape_radius(f)), ch.M()) + 0.5;
        std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
        const double t = angle(rng);
        const Complex z = std::exp(Complex{level, t});
        const auto bv = boettcher(f, z);
        CHECK(bv.conjugacy_defect <= 1e-8);
        CHECK(bv.modulus_check <= 1e-9);
        // log-modulus of Boettcher equals the escape rate
        const auto g = green(f, z, standard_budget(f, 1e-12));
        CHECK(std::abs(bv.log_w.real() - g.value) <= 1e-9);
    }
}

TEST_CASE("tangency to the identity near infinity") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int trial = 0; trial < 50; ++trial) {
        const Complex c1{u(rng), u(rng)};
        const auto f = from_critical_data({c1, -c1}, Complex{u(rng), u(rng)});
        const Complex z = std::exp(Complex{std::log(1e6), u(rng) * 2});
        const auto bv = boettcher(f, z);
        CHECK(std::abs(bv.w / z - Complex{1, 0}) <= 1e-4);
    }
}

TEST_CASE("Boettcher is rejected at or below the maximal critical level") {
    const auto f = from_critical_data({Complex{0, 0}}, Complex{100, 0});
    CHECK_THROWS_AS(boettcher(f, Complex{0, 0.5}), BelowCriticalLevel);
}

TEST_CASE("rays of the power map are straight") {
    const auto f = from_critical_data({Complex{0, 0}, Complex{0, 0}}, Complex{0, 0});
    const double theta = 1.1;
    const auto trace = trace_ray(f, theta, 4.0, 1.0, 16);
    REQUIRE_FALSE(trace.obstructed);
    REQUIRE(trace.points.size() == 17);
    for (const auto& p : trace.points)
        CHECK(std::abs(p.z - std::exp(Complex{p.height, theta})) < 1e-9);
}

TEST_CASE("ray of z^2 + 100 descends to twice the critical height") {
    const auto f = from_critical_data({Complex{0, 0}}, Complex{100, 0});
    const auto budget = standard_budget(f, 1e-12);
    const double g0 = green(f, Complex{0, 0}, budget).value;
    const auto trace = trace_ray(f, 0.0, 10.0, 2 * g0 + 0.01, 32);
    REQUIRE_FALSE(trace.obstructed);
    for (const auto& p : trace.points) {
        const auto g = green(f, p.z, budget);
        CHECK(std::abs(g.value - p.height) <= 1e-8);
        const Complex lp = log_phi(f, p.z);
        CHECK(std::abs(lp.real() - p.height) <= 1e-8);
        CHECK(std::abs(wrap_angle(lp.imag() - p.angle)) <= 1e-8);
    }
}

TEST_CASE("continuation down and back up returns to the start") {
    const auto f = from_critical_data({Complex{0.4, 0.2}, Complex{-0.4, -0.2}}, Complex{1, 1});
    const double theta = 0.75;
    const auto down = trace_ray(f, theta, 6.0, 3.0, 24);
    REQUIRE_FALSE(down.obstructed);
    // walk the same grid upward with Newton from each previous point
    Complex z = down.points.back().z;
    for (auto it = down.points.rbegin(); it != down.points.rend(); ++it) {
        const auto zn = detail_ray::ray_newton(f, z, it->height, theta);
        REQUIRE(zn.has_value());
        z = *zn;
    }
    CHECK(std::abs(z - down.points.front().z) <= 1e-9);
}

TEST_CASE("phi_n log images satisfy the functional equation across levels") {
    const auto f = from_critical_data({Complex{0, 0}}, Complex{100, 0});
    const auto budget = standard_budget(f, 1e-12);
    const auto img1 = phi_n_map(f, 1, budget);
    const double g0 = green(f, Complex{0, 0}, budget).value;
    CHECK(std::abs(img1.log_w[0].real() - 2 * g0) <= 1e-8);

    // membership in W_d(n): d^n log|w_i| > max_j log|w_j|
    const auto img2 = phi_n_map(f, 2, budget);
    double max_log = img2.log_w[0].real();
    CHECK(std::pow(2.0, 2) * img2.log_w[0].real() > max_log);

    // w^(n+1) = (w^(n))^d on the cylinder
    CHECK(std::abs(img2.log_w[0].real() - 2 * img1.log_w[0].real()) <= 1e-8);
    CHECK(std::abs(wrap_angle(img2.log_w[0].imag() - 2 * img1.log_w[0].imag())) <= 1e-8);
}

TEST_CASE("log-moduli of phi_n realize d^n times the marked heights") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const auto f = random_shift_cubic(rng);
        const auto budget = standard_budget(f, 1e-12);
        const auto ch = heights(f, budget);
        int n = 1;
        PhiImage img;
        for (; n <= 8; ++n) {
            try {
                img = phi_n_map(f, n, budget);
                break;
            } catch (const NotInDomain&) {
            }
        }
        REQUIRE(n <= 8);
        const double dn = std::pow(3.0, n);
        for (int i = 0; i < 2; ++i)
            CHECK(std::abs(img.log_w[i].real() - dn * ch.marked[i].value) <= 1e-8 * dn);
    }
}

TEST_CASE("membership and domain errors of phi_n") {
    // bounded critical orbit: z^3 - 3z is outside every S(n)
    const auto f = from_critical_data({Complex{1, 0}, Complex{-1, 0}}, Complex{0, 0});
    CHECK_THROWS_AS(phi_n_map(f, 3, standard_budget(f, 1e-10, 500)), NotInDomain);
}

TEST_CASE("invert_phi_n round trip recovers the polynomial") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        const auto f = random_shift_cubic(rng);
        const auto budget = standard_budget(f, 1e-12);
        int n = 1;
        PhiImage img;
        for (; n <= 8; ++n) {
            try {
                img = phi_n_map(f, n, budget);
                break;
            } catch (const NotInDomain&) {
            }
        }
        REQUIRE(n <= 8);
        const auto inv = invert_phi_n(3, n, img, f, 1e-11, budget);
        REQUIRE(inv.converged);
        CHECK(param_distance(inv.poly, f) <= 1e-9);
    }
}

TEST_CASE("degree-2 inversion hits the prescribed height at any angle") {
    const double h = 1.3;
    PhiImage target;
    target.d = 2;
    target.n = 1;
    target.log_w = {Complex{2 * h, 2.1}};
    const auto seed = from_critical_data({Complex{0, 0}}, Complex{20, 0});
    const auto budget = standard_budget(seed, 1e-12);
    const auto inv = invert_phi_n(2, 1, target, seed, 1e-11, budget);
    REQUIRE(inv.converged);
    const auto ch = heights(inv.poly, standard_budget(inv.poly, 1e-12));
    CHECK(std::abs(ch.M() - h) <= 1e-9);
}

TEST_CASE("solutions move continuously with the target angle") {
    const auto seed = from_critical_data({Complex{0, 0}}, Complex{20, 0});
    const auto budget = standard_budget(seed, 1e-12);
    const auto base = phi_n_map(seed, 1, budget);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    double max_ratio = 0, min_ratio = 1e300;
    for (int trial = 0; trial < 100; ++trial) {
        const double step = 1e-4 * u(rng);
        PhiImage target = base;
        target.log_w[0] += Complex{0, step};
        const auto inv = invert_phi_n(2, 1, target, seed, 1e-12, budget);
        REQUIRE(inv.converged);
        const double displacement = std::abs(inv.poly.translation - seed.translation);
        const double ratio = displacement / step;
        max_ratio = std::max(max_ratio, ratio);
        min_ratio = std::min(min_ratio, ratio);
    }
    // empirical Lipschitz behaviour: the displacement/step ratio is stable
    CHECK(max_ratio < 4 * min_ratio);
    CHECK(max_ratio < 1e3);
}
