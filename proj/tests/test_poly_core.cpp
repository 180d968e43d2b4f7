#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <random>

#include "polyheights/json_io.hpp"
#include "polyheights/marked_polynomial.hpp"

using namespace polyheights;

namespace {

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

TEST_CASE("quadratic and cubic families expand to the expected normal forms") {
    const auto quad = from_critical_data({Complex{0, 0}}, Complex{3, -1});
    REQUIRE(quad.degree == 2);
    CHECK(quad.coefficients[2] == Complex{1, 0});
    CHECK(quad.coefficients[1] == Complex{0, 0});
    CHECK(quad.coefficients[0] == Complex{3, -1});  // z^2 + a

    const auto cubic = from_critical_data({Complex{1, 0}, Complex{-1, 0}}, Complex{0, 0});
    REQUIRE(cubic.degree == 3);
    CHECK(std::abs(cubic.coefficients[3] - Complex{1, 0}) == 0.0);
    CHECK(std::abs(cubic.coefficients[2]) == 0.0);
    CHECK(std::abs(cubic.coefficients[1] - Complex{-3, 0}) < 1e-15);  // z^3 - 3z
    CHECK(std::abs(cubic.coefficients[0]) == 0.0);
}

TEST_CASE("quartic with critical points (1, i, -1-i) matches the differentiation oracle") {
    const auto f = from_critical_data({Complex{1, 0}, Complex{0, 1}, Complex{-1, -1}},
                                      Complex{5, 0});
    REQUIRE(f.degree == 4);
    // Expanding integral of 4(z-1)(z-i)(z+1+i): z^4 - 2i z^2 + (4i-4) z + 5
    CHECK(std::abs(f.coefficients[4] - Complex{1, 0}) == 0.0);
    CHECK(std::abs(f.coefficients[3]) == 0.0);
    CHECK(std::abs(f.coefficients[2] - Complex{0, -2}) < 1e-14);
    CHECK(std::abs(f.coefficients[1] - Complex{-4, 4}) < 1e-14);
    CHECK(std::abs(f.coefficients[0] - Complex{5, 0}) < 1e-14);

    // oracle: differentiate cached coefficients, compare against the product
    // form at sample points
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int k = 0; k < 50; ++k) {
        const Complex z{u(rng), u(rng)};
        const Complex lhs = evaluate_derivative(f, z);
        const Complex rhs = derivative_product_form(f, z);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * (1 + std::abs(rhs)));
    }
}

TEST_CASE("non-centered critical data is rejected, not repaired") {
    CHECK_THROWS_AS(from_critical_data({Complex{1, 0}, Complex{-0.5, 0}}, Complex{0, 0}),
                    NonCenteredInput);
    CHECK_THROWS_AS(from_critical_data({Complex{1e-9, 0}}, Complex{0, 0}), NonCenteredInput);
}

TEST_CASE("evaluate on the worked examples") {
    const auto cubic = from_critical_data({Complex{1, 0}, Complex{-1, 0}}, Complex{0, 0});
    CHECK(std::abs(evaluate(cubic, Complex{2, 0}) - Complex{2, 0}) < 1e-14);

    const auto quad = from_critical_data({Complex{0, 0}}, Complex{0.25, 2});
    CHECK(evaluate(quad, Complex{0, 0}) == Complex{0.25, 2});

    const auto quartic = from_critical_data({Complex{1, 0}, Complex{0, 1}, Complex{-1, -1}},
                                            Complex{5, 0});
    CHECK(std::abs(evaluate(quartic, Complex{0, 0}) - Complex{5, 0}) < 1e-14);
}

TEST_CASE("escape radius bounds and the sampled-circle oracle") {
    const auto pure = from_critical_data({Complex{0, 0}}, Complex{0, 0});
    CHECK(escape_radius(pure) == 2.0);

    const auto big = from_critical_data({Complex{0, 0}}, Complex{100, 0});
    CHECK(escape_radius(big) == 202.0);

    const auto cubic = from_critical_data({Complex{1, 0}, Complex{-1, 0}}, Complex{0, 0});
    CHECK(escape_radius(cubic) == 8.0);

    // triangle-inequality oracle on a sampled circle |z| = R(1+eps)
    std::mt19937_64 rng(11);
    auto check_circle = [](const MarkedPolynomial& f) {
        const double R = escape_radius(f) * 1.0000001;
        for (int k = 0; k < 512; ++k) {
            const double t = 2 * std::numbers::pi * k / 512.0;
            const Complex z{R * std::cos(t), R * std::sin(t)};
            REQUIRE(std::abs(evaluate(f, z)) >= 2 * std::abs(z) * (1 - 1e-9));
        }
    };
    check_circle(big);
    check_circle(cubic);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 4);
        std::uniform_real_distribution<double> u(-3, 3);
        check_circle(from_critical_data(random_centered(rng, d, 3.0), Complex{u(rng), u(rng)}));
    }
}

TEST_CASE("derivative of the expansion recovers the product form on random draws") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 5);
        const auto f = from_critical_data(random_centered(rng, d), Complex{u(rng), u(rng)});
        const Complex z{u(rng), u(rng)};
        const Complex lhs = evaluate_derivative(f, z);
        const Complex rhs = derivative_product_form(f, z);
        REQUIRE(std::abs(lhs - rhs) <= 1e-10 * (1 + std::abs(rhs)));
    }
}

TEST_CASE("evaluate agrees with quadrature of the product-form derivative") {
    // f(z) - a = integral_0^z f' by composite Simpson along the segment
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 3);
        const auto f = from_critical_data(random_centered(rng, d), Complex{u(rng), u(rng)});
        const Complex z{u(rng), u(rng)};
        const int nodes = 400;
        Complex integral{0, 0};
        const Complex dz = z / static_cast<double>(nodes);
        for (int k = 0; k < nodes; ++k) {
            const Complex z0 = dz * static_cast<double>(k);
            const Complex z1 = z0 + dz * 0.5;
            const Complex z2 = z0 + dz;
            integral += (derivative_product_form(f, z0) + 4.0 * derivative_product_form(f, z1) +
                         derivative_product_form(f, z2)) *
                        (dz / 6.0);
        }
        REQUIRE(std::abs(evaluate(f, z) - f.translation - integral) < 1e-8);
    }
}

TEST_CASE("JSON round trip is bit-exact for finite doubles") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<int> expo(-80, 80);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 5);
        auto c = random_centered(rng, d);
        for (auto& ci : c) ci *= std::ldexp(1.0, expo(rng) / 8);
        // keep the centering sum exactly zero after scaling
        Complex sum{0, 0};
        for (std::size_t i = 0; i + 1 < c.size(); ++i) sum += c[i];
        c.back() = -sum;
        const auto f = from_critical_data(c, Complex{std::ldexp(u(rng), expo(rng)), u(rng)});
        const auto g = polynomial_from_json(Json::parse(to_json(f).dump()));
        REQUIRE(g.degree == f.degree);
        for (std::size_t i = 0; i < c.size(); ++i)
            REQUIRE(g.critical_points[i] == f.critical_points[i]);
        REQUIRE(g.translation == f.translation);
    }
}
