#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "polyheights/census.hpp"
#include "polyheights/json_io.hpp"
#include "polyheights/store.hpp"

using namespace polyheights;

namespace {

HeightsVector hv(int d, std::vector<double> h) {
    HeightsVector v;
    v.d = d;
    std::sort(h.begin(), h.end(), std::greater<>());
    v.heights = std::move(h);
    return v;
}

CensusOptions fast_opts(bool trees = false) {
    CensusOptions opts;
    opts.with_trees = trees;
    opts.tree_resolution = 128;
    opts.workers = 2;
    return opts;
}

}  // namespace

TEST_CASE("degree-2 census: one component, closed loop, full coverage") {
    const auto census = fiber_census(2, hv(2, {1.0}), 1, 16, {}, fast_opts());
    CHECK(census.component_count() == 1);
    CHECK(census.unsolved_cells.empty());
    CHECK(census.solutions.size() == 16);  // degree-one covering of the circle
    REQUIRE(census.monodromy_checked[0]);
    CHECK(census.monodromy_closed[0][0]);
    CHECK(census.monodromy_order[0][0] == 1);

    for (const auto& sol : census.solutions)
        for (std::size_t i = 0; i < sol.heights.size(); ++i)
            CHECK(std::abs(sol.heights[i] - census.target.heights[i]) <=
                  1e-6 * census.target.heights[i]);
}

TEST_CASE("a seeded fiber point lands in its own component") {
    const auto target = hv(2, {0.8});
    const auto f = find_polynomial_with_heights(2, target);
    REQUIRE(f.has_value());
    const auto census = fiber_census(2, target, 1, 8, {*f}, fast_opts());
    REQUIRE(census.component_count() == 1);
    bool found = false;
    for (const auto& sol : census.solutions)
        if (detail_census::marked_distance(sol.poly, *f) < 1e-6) found = true;
    CHECK(found);
}

TEST_CASE("generic degree-3 torus: components close under monodromy into themselves") {
    const auto census = fiber_census(3, hv(3, {1.0, 0.37}), 1, 12, {}, fast_opts());
    CHECK(census.generic);
    CHECK(census.unsolved_cells.empty());
    REQUIRE(census.component_count() >= 1);
    for (int c = 0; c < census.component_count(); ++c) {
        REQUIRE(census.monodromy_checked[c]);
        for (int gen = 0; gen < 2; ++gen) {
            CHECK(census.monodromy_in_component[c][gen]);
            CHECK(census.monodromy_order[c][gen] >= 1);  // strict return after finitely many loops
        }
    }
}

TEST_CASE("monodromy forward then back returns to the start") {
    const auto census = fiber_census(3, hv(3, {1.0, 0.55}), 1, 12, {}, fast_opts());
    REQUIRE_FALSE(census.solutions.empty());
    const auto& rep = census.solutions.front();
    const double dtheta = 2 * std::numbers::pi / census.grid;

    // one step forward, one step back along generator 0
    const double dn = 3.0;  // d^(level of coordinate 0) with minimal level 1
    PhiImage fwd;
    fwd.d = 3;
    fwd.n = census.n;
    fwd.levels = {1, 1};
    fwd.log_w = {Complex{dn * census.target.heights[0], wrap_angle(dtheta * (rep.cell[0] + 1))},
                 Complex{dn * census.target.heights[1], wrap_angle(dtheta * rep.cell[1])}};
    const auto budget = fast_opts().budget;
    const auto step1 = invert_phi_n(3, census.n, fwd, rep.poly, 1e-11, budget);
    REQUIRE(step1.converged);
    PhiImage back = fwd;
    back.log_w[0].imag(wrap_angle(dtheta * rep.cell[0]));
    const auto step2 = invert_phi_n(3, census.n, back, step1.poly, 1e-11, budget);
    REQUIRE(step2.converged);
    CHECK(detail_census::marked_distance(step2.poly, rep.poly) <= 1e-8);
}

TEST_CASE("uniform heights give a single component sharing one tree") {
    const auto census = fiber_census(3, hv(3, {0.8, 0.8}), 1, 10, {}, fast_opts(true));
    CHECK_FALSE(census.generic);
    CHECK(census.component_count() == 1);
    const auto [tstar, t] = compare_projections(census, 1e-4);
    CHECK(tstar == 1);
    CHECK(t == 1);
}

TEST_CASE("compare_projections counts tree classes of the components") {
    const auto census = fiber_census(2, hv(2, {1.0}), 1, 8, {}, fast_opts(true));
    const auto [tstar, t] = compare_projections(census, 1e-4);
    CHECK(tstar == 1);
    CHECK(t == 1);
    CHECK(t <= tstar);
}

TEST_CASE("rank probe sees the stratum dimension") {
    const auto generic = fiber_census(3, hv(3, {1.0, 0.62}), 1, 8, {}, fast_opts());
    const auto report = rank_probe(generic, 1e-5, 6);
    CHECK(report.target_classes == 2);
    CHECK(report.checked > 0);
    CHECK(report.violations == 0);

    const auto d2 = fiber_census(2, hv(2, {1.0}), 1, 8, {}, fast_opts());
    const auto r2 = rank_probe(d2, 1e-5, 4);
    CHECK(r2.target_classes == 1);
    CHECK(r2.violations == 0);
    for (int r : r2.ranks) CHECK(r == 1);
}

TEST_CASE("census rejects bad targets") {
    CHECK_THROWS_AS(fiber_census(3, hv(3, {1.0, 0.0}), 2, 8, {}, fast_opts()),
                    TargetOutsideDomain);
    // n too small: 3^1 * 0.1 < 1
    CHECK_THROWS_AS(fiber_census(3, hv(3, {1.0, 0.1}), 1, 8, {}, fast_opts()),
                    TargetOutsideDomain);
    CHECK_THROWS_AS(fiber_census(3, hv(3, {1.0}), 2, 8, {}, fast_opts()),
                    TargetOutsideDomain);
}

TEST_CASE("census store round trip and key stability") {
    const auto target = hv(2, {1.0});
    const auto census = fiber_census(2, target, 1, 8, {}, fast_opts(true));

    const auto dir = std::filesystem::temp_directory_path() / "polyheights-store-test";
    std::filesystem::remove_all(dir);
    CensusStore store(dir);
    const std::string key = CensusStore::key(2, target, 1, 8);
    CHECK(key == CensusStore::key(2, target, 1, 8));
    CHECK(key != CensusStore::key(2, target, 2, 8));

    CHECK_FALSE(store.load(key).has_value());
    store.save(key, census);
    const auto loaded = store.load(key);
    REQUIRE(loaded.has_value());
    CHECK(loaded->component_count() == census.component_count());
    CHECK(loaded->solutions.size() == census.solutions.size());
    CHECK(loaded->component_trees.size() == census.component_trees.size());
    CHECK(detail_census::marked_distance(loaded->solutions[0].poly, census.solutions[0].poly) ==
          0.0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("wrong-size target is rejected") {
    CHECK_THROWS_AS(fiber_census(4, hv(4, {1.0, 0.5}), 2, 8, {}, fast_opts()),
                    TargetOutsideDomain);
}
