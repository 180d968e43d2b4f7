#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "polyheights/boettcher.hpp"
#include "polyheights/errors.hpp"
#include "polyheights/escape.hpp"
#include "polyheights/heights_space.hpp"
#include "polyheights/tree.hpp"

namespace polyheights {

struct CensusOptions {
    double newton_tol = 1e-11;
    double dedup_tol = 1e-8;
    int max_solutions_per_cell = 128;
    bool with_trees = true;
    int tree_resolution = 128;
    int tree_refinement_limit = 3;
    int workers = 1;
    EscapeBudget budget{2.0, 10000, 1e-12};
};

struct CensusSolution {
    MarkedPolynomial poly;
    std::vector<int> cell;         // angle grid indices per coordinate
    double residual = 0.0;
    std::vector<double> heights;   // marked heights
    int component = -1;
};

struct FiberCensus {
    int d = 2;
    int n = 1;
    int grid = 8;
    HeightsVector target;
    bool generic = true;  // all pairs of target coordinates independent
    std::vector<CensusSolution> solutions;
    std::vector<std::vector<int>> components;        // solution indices, after symmetry dedup
    std::vector<std::vector<char>> monodromy_closed; // strict return after one loop
    std::vector<std::vector<char>> monodromy_in_component;  // torus check: loop stays in component
    std::vector<std::vector<int>> monodromy_order;   // loops until strict return (0 = not seen)
    std::vector<char> monodromy_checked;             // per component
    std::vector<PolyTree> component_trees;           // representative trees (may be empty)
    std::vector<int> unsolved_cells;                 // coverage gaps, linear cell ids
    int capped_cells = 0;  // cells that hit the per-cell solution cap
    int component_count() const { return static_cast<int>(components.size()); }
};

namespace detail_census {

inline std::vector<Complex> zeta_orbit_roots(int d) {
    std::vector<Complex> out;
    for (int j = 0; j < d - 1; ++j) {
        const double t = 2.0 * std::numbers::pi * j / (d - 1);
        out.emplace_back(std::cos(t), std::sin(t));
    }
    return out;
}

// Coefficient vector of the conjugated polynomial zeta f(z/zeta): coeff_k
// picks up zeta^{1-k}.  Coefficients identify marking permutations for free
// and stay smooth across the locus where marked critical points collide
// (the marked chart is ramified there).
inline std::vector<Complex> rotated_coeffs(const MarkedPolynomial& f, Complex zeta) {
    std::vector<Complex> v;
    Complex pw = zeta;  // zeta^{1-k} for k = 0
    for (int k = 0; k <= f.degree - 2; ++k) {
        v.push_back(pw * f.coefficients[k]);
        pw /= zeta;
    }
    return v;
}

// Canonical form modulo conjugation: the lexicographically smallest rotation.
inline std::vector<Complex> canonical_coeffs(const MarkedPolynomial& f) {
    auto lex_less = [](const std::vector<Complex>& x, const std::vector<Complex>& y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i].real() != y[i].real()) return x[i].real() < y[i].real();
            if (x[i].imag() != y[i].imag()) return x[i].imag() < y[i].imag();
        }
        return false;
    };
    std::optional<std::vector<Complex>> best;
    for (const Complex& zeta : zeta_orbit_roots(f.degree)) {
        auto v = rotated_coeffs(f, zeta);
        if (!best || lex_less(v, *best)) best = std::move(v);
    }
    return *best;
}


inline double param_distance(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double param_scale(const std::vector<Complex>& a) {
    double m = 1.0;
    for (const Complex& x : a) m = std::max(m, std::abs(x));
    return m;
}

// min over rotations of the coefficient distance; zero exactly when f and g
// define the same point of moduli space.
inline double moduli_distance(const MarkedPolynomial& f, const MarkedPolynomial& g) {
    const auto gc = rotated_coeffs(g, Complex{1.0, 0.0});
    double best = 1e300;
    for (const Complex& zeta : zeta_orbit_roots(f.degree))
        best = std::min(best, param_distance(rotated_coeffs(f, zeta), gc));
    return best;
}

// Raw (marked, no symmetry) parameter distance.
inline double marked_distance(const MarkedPolynomial& f, const MarkedPolynomial& g) {
    double m = std::abs(f.translation - g.translation);
    for (std::size_t i = 0; i < f.critical_points.size(); ++i)
        m = std::max(m, std::abs(f.critical_points[i] - g.critical_points[i]));
    return m;
}

inline PhiImage make_target(int d, int n, const std::vector<int>& levels,
                            const std::vector<double>& log_radii,
                            const std::vector<double>& angles) {
    PhiImage img;
    img.d = d;
    img.n = n;
    img.levels = levels;
    for (std::size_t i = 0; i < log_radii.size(); ++i)
        img.log_w.emplace_back(log_radii[i], wrap_angle(angles[i]));
    return img;
}

// Newton solve with a retreat to adaptive homotopy along the straight path
// (in log radii, shortest-arc in angles) from the seed's own image.
inline PhiInversion solve_with_homotopy(int d, int n, const PhiImage& target,
                                        const MarkedPolynomial& seed,
                                        const CensusOptions& opts) {
    PhiInversion direct = invert_phi_n(d, n, target, seed, opts.newton_tol, opts.budget);
    if (direct.converged) return direct;

    PhiImage start;
    try {
        start = psi_map(seed, n, target.levels, opts.budget);
    } catch (const DomainError&) {
        return direct;
    }
    std::vector<double> r0, r1, a0, da;
    for (int i = 0; i < d - 1; ++i) {
        r0.push_back(start.log_w[i].real());
        r1.push_back(target.log_w[i].real());
        a0.push_back(start.log_w[i].imag());
        da.push_back(wrap_angle(target.log_w[i].imag() - start.log_w[i].imag()));
    }

    MarkedPolynomial cur = seed;
    double t = 0.0, step = 0.25;
    while (t < 1.0) {
        const double t_next = std::min(1.0, t + step);
        std::vector<double> lr(d - 1), an(d - 1);
        for (int i = 0; i < d - 1; ++i) {
            lr[i] = (1 - t_next) * r0[i] + t_next * r1[i];
            an[i] = a0[i] + t_next * da[i];
        }
        PhiInversion sol = invert_phi_n(d, n, make_target(d, n, target.levels, lr, an), cur,
                                        opts.newton_tol, opts.budget);
        if (sol.converged) {
            cur = sol.poly;
            t = t_next;
            step = std::min(0.25, step * 2);
            if (t >= 1.0) return sol;
        } else {
            step /= 2;
            if (step < 1.0 / 4096.0) return sol;  // best effort, not converged
        }
    }
    return invert_phi_n(d, n, target, cur, opts.newton_tol, opts.budget);
}

// Default seeds: small symmetric critical spread, translation sized so every
// critical value escapes immediately; heights come out roughly uniform.
inline std::vector<MarkedPolynomial> default_seeds(int d, double h1) {
    std::vector<MarkedPolynomial> seeds;
    const double lever = std::exp(d * std::max(h1, 0.4));
    for (double phase : {0.0, std::numbers::pi / 2, std::numbers::pi, -std::numbers::pi / 2}) {
        for (double spread : {0.05, 0.3}) {
            std::vector<Complex> c;
            if (d == 2) {
                c.push_back(Complex{0.0, 0.0});
            } else {
                for (int k = 0; k < d - 1; ++k) {
                    const double t = 2.0 * std::numbers::pi * k / (d - 1);
                    c.emplace_back(spread * std::cos(t), spread * std::sin(t));
                }
            }
            seeds.push_back(from_critical_data(
                std::move(c), Complex{lever * std::cos(phase), lever * std::sin(phase)}));
        }
    }
    return seeds;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) {
        for (int i = 0; i < n; ++i) parent[i] = i;
    }
    int find(int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail_census

// Truncation floor for a tree "slightly below the lowest critical height":
// the log-midpoint of the gap between that height and the next critical
// grand-orbit value below it, so no hairline level band appears.
inline double choose_tree_floor(const std::vector<double>& marked_heights, int d) {
    double min_crit = 0;
    for (double h : marked_heights)
        if (h > 0) min_crit = min_crit == 0 ? h : std::min(min_crit, h);
    if (!(min_crit > 0)) throw DomainError("choose_tree_floor: no escaping critical point");
    double lower = min_crit / d;
    for (double h : marked_heights) {
        if (!(h > 0)) continue;
        double v = h;
        while (v >= min_crit * (1 - 1e-9)) v /= d;
        lower = std::max(lower, v);
    }
    return std::sqrt(lower * min_crit);
}

// One polynomial with the prescribed critical heights (sorted descending),
// found by homotopy continuation from a roughly-uniform seed.  The angles
// argument fixes the Boettcher angles of the critical values at their
// minimal levels.
inline std::optional<MarkedPolynomial> find_polynomial_with_heights(
    int d, const HeightsVector& target, const std::vector<double>& angles = {},
    const CensusOptions& opts = {}) {
    const double M = target.M();
    std::vector<int> levels(d - 1);
    std::vector<double> log_radii(d - 1);
    int n = 1;
    for (int i = 0; i < d - 1; ++i) {
        int m = 1;
        double lifted = target.heights[i] * d;
        while (!(lifted > M) && m < 64) {
            lifted *= d;
            ++m;
        }
        levels[i] = m;
        log_radii[i] = lifted;
        n = std::max(n, m);
    }
    std::vector<double> theta(d - 1, 0.0);
    for (std::size_t i = 0; i < angles.size() && i < theta.size(); ++i) theta[i] = angles[i];
    const PhiImage tgt = detail_census::make_target(d, n, levels, log_radii, theta);
    for (const auto& seed : detail_census::default_seeds(d, target.heights.front())) {
        try {
            const PhiInversion sol = detail_census::solve_with_homotopy(d, n, tgt, seed, opts);
            if (sol.converged) return sol.poly;
        } catch (const DomainError&) {
        }
    }
    return std::nullopt;
}

// Sweeps the Boettcher angle torus over a fixed heights target, inverting
// Phi_n cell by cell with continuation from solved neighbors, and clusters
// the solutions into connected components of the fiber.  Solutions are
// deduplicated modulo conjugation by (d-1)-st roots of unity and relabeling
// of equal-height markings.
inline FiberCensus fiber_census(int d, const HeightsVector& target, int n, int grid,
                                const std::vector<MarkedPolynomial>& user_seeds,
                                const CensusOptions& opts = {}) {
    if (static_cast<int>(target.heights.size()) != d - 1)
        throw TargetOutsideDomain("fiber_census: target size does not match degree");
    for (double h : target.heights)
        if (!(h > 0)) throw TargetOutsideDomain("fiber_census: target heights must be positive");
    const double M = target.M();
    const double dn = std::pow(static_cast<double>(d), n);
    for (double h : target.heights)
        if (!(dn * h > M))
            throw TargetOutsideDomain("fiber_census: n too small, target outside H_d(n)");
    if (grid < 2) throw TargetOutsideDomain("fiber_census: angle grid too small");

    FiberCensus census;
    census.d = d;
    census.n = n;
    census.grid = grid;
    census.target = target;
    {
        const IndependencePartition part = independence_classes(target, 1e-9);
        census.generic = (part.N == d - 1);
    }

    const int dim = d - 1;
    long long cell_total = 1;
    for (int i = 0; i < dim; ++i) cell_total *= grid;

    // Per-coordinate minimal levels: the angle of coordinate i is pinned at
    // the level where the critical value first clears M, so each cell sees
    // only the finitely many twist sheets of the fiber.
    std::vector<int> levels(dim);
    std::vector<double> log_radii(dim);
    for (int i = 0; i < dim; ++i) {
        int m = 1;
        double lifted = target.heights[i] * d;
        while (!(lifted > M) && m <= n + 1) {
            lifted *= d;
            ++m;
        }
        if (m > n)
            throw TargetOutsideDomain("fiber_census: n too small for target level structure");
        levels[i] = m;
        log_radii[i] = lifted;
    }
    const double dtheta = 2.0 * std::numbers::pi / grid;

    auto linear_of_cell = [&](const std::vector<int>& cell) {
        long long id = 0;
        for (int i = dim - 1; i >= 0; --i) id = id * grid + cell[i];
        return id;
    };
    auto target_of_cell = [&](const std::vector<int>& cell) {
        std::vector<double> angles(dim);
        for (int i = 0; i < dim; ++i) angles[i] = dtheta * cell[i];
        return detail_census::make_target(d, n, levels, log_radii, angles);
    };

    std::vector<std::vector<int>> cell_solutions(cell_total);
    detail_census::UnionFind uf(0);

    auto heights_of = [&](const MarkedPolynomial& f) {
        std::vector<double> h;
        const CriticalHeights ch = heights(f, opts.budget);
        for (const auto& ev : ch.marked) h.push_back(ev.value);
        return h;
    };

    auto add_solution = [&](const std::vector<int>& cell, const MarkedPolynomial& poly,
                            double residual) -> int {
        const long long id = linear_of_cell(cell);
        const double scale =
            detail_census::param_scale(detail_census::canonical_coeffs(poly));
        for (int s : cell_solutions[id]) {
            if (detail_census::moduli_distance(census.solutions[s].poly, poly) <
                opts.dedup_tol * scale)
                return s;
        }
        if (static_cast<int>(cell_solutions[id].size()) >= opts.max_solutions_per_cell) {
            ++census.capped_cells;
            return -1;
        }
        CensusSolution sol;
        sol.poly = poly;
        sol.cell = cell;
        sol.residual = residual;
        sol.heights = heights_of(poly);
        const int idx = static_cast<int>(census.solutions.size());
        census.solutions.push_back(std::move(sol));
        cell_solutions[id].push_back(idx);
        uf.parent.push_back(idx);
        return idx;
    };

    // Seed the origin cell.
    std::vector<MarkedPolynomial> seeds = user_seeds;
    for (auto& s : detail_census::default_seeds(d, target.heights.front()))
        seeds.push_back(std::move(s));
    const std::vector<int> cell0(dim, 0);
    for (const auto& seed : seeds) {
        try {
            const PhiInversion sol =
                detail_census::solve_with_homotopy(d, n, target_of_cell(cell0), seed, opts);
            if (sol.converged) add_solution(cell0, sol.poly, sol.residual);
        } catch (const DomainError&) {
        }
    }

    // Wavefront continuation over the torus.  Neighbor targets differ by one
    // angle step; when a single damped Newton hop fails the step is walked in
    // up to 16 substeps.  The expensive full homotopy stays reserved for the
    // initial seeding.
    auto continue_to_cell = [&](const MarkedPolynomial& from, const std::vector<int>& from_cell,
                                const std::vector<int>& cell, int gen) -> PhiInversion {
        PhiInversion sol = invert_phi_n(d, n, target_of_cell(cell), from, opts.newton_tol,
                                        opts.budget);
        if (sol.converged) return sol;
        const double a0 = dtheta * from_cell[gen];
        double step_arc = wrap_angle(dtheta * cell[gen] - a0);
        for (int sub = 2; sub <= 16; sub *= 2) {
            MarkedPolynomial cur = from;
            bool ok = true;
            for (int s = 1; s <= sub && ok; ++s) {
                std::vector<double> angles(dim);
                for (int i = 0; i < dim; ++i) angles[i] = dtheta * cell[i];
                angles[gen] = a0 + step_arc * s / sub;
                sol = invert_phi_n(d, n,
                                   detail_census::make_target(d, n, levels, log_radii, angles),
                                   cur, opts.newton_tol, opts.budget);
                if (!sol.converged) ok = false;
                else cur = sol.poly;
            }
            if (ok) return sol;
        }
        return sol;
    };

    // Expand in waves: all pending solutions continue to their neighbors in
    // parallel, then results merge deterministically in work order.
    std::vector<int> wave;
    for (int s : cell_solutions[0]) wave.push_back(s);
    std::vector<char> expanded;
    while (!wave.empty()) {
        struct WorkItem {
            int from;
            std::vector<int> cell;
            int gen;
        };
        std::vector<WorkItem> work;
        for (int s : wave) {
            if (s >= static_cast<int>(expanded.size())) expanded.resize(census.solutions.size(), 0);
            if (expanded[s]) continue;
            expanded[s] = 1;
            for (int i = 0; i < dim; ++i)
                for (int dir : {1, -1}) {
                    auto nb = census.solutions[s].cell;
                    nb[i] = (nb[i] + dir + grid) % grid;
                    work.push_back({s, std::move(nb), i});
                }
        }
        struct LinkResult {
            PhiInversion sol;
            bool verified = false;
        };
        std::vector<std::optional<LinkResult>> results(work.size());
        detail::parallel_for(work.size(), opts.workers, [&](std::size_t w) {
            const auto& origin = census.solutions[work[w].from];
            const PhiInversion sol =
                continue_to_cell(origin.poly, origin.cell, work[w].cell, work[w].gen);
            if (!sol.converged) return;
            // continuation back must land on the origin, otherwise the hop
            // jumped between fiber sheets and must not join components
            const PhiInversion back =
                continue_to_cell(sol.poly, work[w].cell, origin.cell, work[w].gen);
            const double scale =
                detail_census::param_scale(detail_census::canonical_coeffs(origin.poly));
            results[w] = LinkResult{
                sol, back.converged &&
                         detail_census::moduli_distance(back.poly, origin.poly) < 1e-6 * scale};
        });
        std::vector<int> next_wave;
        for (std::size_t w = 0; w < work.size(); ++w) {
            if (!results[w]) continue;
            const int idx =
                add_solution(work[w].cell, results[w]->sol.poly, results[w]->sol.residual);
            if (idx < 0) continue;
            if (results[w]->verified) uf.unite(work[w].from, idx);
            if (idx >= static_cast<int>(expanded.size()) ||
                !expanded[static_cast<std::size_t>(idx)])
                next_wave.push_back(idx);
        }
        wave = std::move(next_wave);
    }

    // Merge components related by the zeta/marking symmetry: sort every
    // rotation of every solution and unite lexicographic neighbors that
    // coincide (all rotations are listed so ties in the canonical choice
    // cannot hide a match).
    {
        std::vector<std::pair<std::vector<Complex>, int>> canon;
        for (std::size_t s = 0; s < census.solutions.size(); ++s)
            for (const Complex& zeta : detail_census::zeta_orbit_roots(d))
                canon.emplace_back(
                    detail_census::rotated_coeffs(census.solutions[s].poly, zeta),
                    static_cast<int>(s));
        std::sort(canon.begin(), canon.end(), [](const auto& x, const auto& y) {
            for (std::size_t i = 0; i < x.first.size(); ++i) {
                if (x.first[i].real() != y.first[i].real())
                    return x.first[i].real() < y.first[i].real();
                if (x.first[i].imag() != y.first[i].imag())
                    return x.first[i].imag() < y.first[i].imag();
            }
            return false;
        });
        for (std::size_t i = 0; i + 1 < canon.size(); ++i) {
            const double scale = detail_census::param_scale(canon[i].first);
            if (detail_census::param_distance(canon[i].first, canon[i + 1].first) <
                10 * opts.dedup_tol * scale)
                uf.unite(canon[i].second, canon[i + 1].second);
        }
    }

    std::map<int, int> root_to_comp;
    for (std::size_t s = 0; s < census.solutions.size(); ++s) {
        const int root = uf.find(static_cast<int>(s));
        auto [it, inserted] = root_to_comp.try_emplace(root, static_cast<int>(census.components.size()));
        if (inserted) census.components.emplace_back();
        census.components[it->second].push_back(static_cast<int>(s));
        census.solutions[s].component = it->second;
    }

    for (long long id = 0; id < cell_total; ++id)
        if (cell_solutions[id].empty()) census.unsolved_cells.push_back(static_cast<int>(id));

    // Monodromy around each angle generator, from each component representative.
    // Strict return detects the covering degree of the component over the
    // angle torus; landing back in the component after one loop is the torus
    // check of the generic-fiber structure.
    census.monodromy_closed.assign(census.components.size(), std::vector<char>(dim, 0));
    census.monodromy_in_component.assign(census.components.size(), std::vector<char>(dim, 0));
    census.monodromy_order.assign(census.components.size(), std::vector<int>(dim, 0));
    census.monodromy_checked.assign(census.components.size(), 0);
    const int max_loops = 8;
    for (std::size_t comp = 0; comp < census.components.size(); ++comp) {
        if (!census.generic) continue;  // torus structure only asserted for generic targets
        census.monodromy_checked[comp] = 1;
        const int rep = census.components[comp].front();
        for (int gen = 0; gen < dim; ++gen) {
            MarkedPolynomial cur = census.solutions[rep].poly;
            auto cell = census.solutions[rep].cell;
            const double scale =
                detail_census::param_scale(detail_census::canonical_coeffs(cur));
            bool ok = true;
            for (int loop = 1; loop <= max_loops && ok; ++loop) {
                for (int step = 0; step < grid && ok; ++step) {
                    cell[gen] = (cell[gen] + 1) % grid;
                    const PhiInversion sol = invert_phi_n(d, n, target_of_cell(cell), cur,
                                                          opts.newton_tol, opts.budget);
                    if (!sol.converged) ok = false;
                    else cur = sol.poly;
                }
                if (!ok) break;
                if (loop == 1) {
                    // after one loop the endpoint is a fiber point over the
                    // same cell; membership in the component is by proximity
                    // to a recorded solution there
                    for (int s : cell_solutions[linear_of_cell(cell)])
                        if (census.solutions[s].component == static_cast<int>(comp) &&
                            detail_census::moduli_distance(census.solutions[s].poly, cur) <
                                1e-6 * scale)
                            census.monodromy_in_component[comp][gen] = 1;
                }
                if (detail_census::marked_distance(cur, census.solutions[rep].poly) <
                    1e-7 * scale) {
                    census.monodromy_order[comp][gen] = loop;
                    if (loop == 1) census.monodromy_closed[comp][gen] = 1;
                    break;
                }
            }
        }
    }

    if (opts.with_trees) {
        for (const auto& comp : census.components) {
            const auto& rep = census.solutions[comp.front()];
            GridSpec gs;
            gs.resolution = opts.tree_resolution;
            gs.refinement_limit = opts.tree_refinement_limit;
            gs.workers = opts.workers;
            census.component_trees.push_back(
                build_tree(rep.poly, choose_tree_floor(rep.heights, d), gs));
        }
    }
    return census;
}

// Number of fiber components versus number of epsilon-conjugacy classes of
// their trees (count_T <= count_Tstar by construction).
inline std::pair<int, int> compare_projections(const FiberCensus& census, double eps) {
    const int count_tstar = census.component_count();
    std::vector<const PolyTree*> reps;
    for (const auto& t : census.component_trees) {
        bool matched = false;
        for (const PolyTree* r : reps) {
            try {
                if (iso_test(*r, t, eps)) {
                    matched = true;
                    break;
                }
            } catch (const LevelMismatch&) {
            }
        }
        if (!matched) reps.push_back(&t);
    }
    return {count_tstar, static_cast<int>(reps.size())};
}

struct RankProbeReport {
    int checked = 0;
    int violations = 0;
    int target_classes = 0;  // N of the target heights vector
    std::vector<int> ranks;
};

// Verifies rank(heights Jacobian) >= N at every census solution.
inline RankProbeReport rank_probe(const FiberCensus& census, double fd_step = 1e-5,
                                  int max_solutions = 0) {
    RankProbeReport report;
    report.target_classes = independence_classes(census.target, 1e-9).N;
    EscapeBudget budget{2.0, 10000, 1e-12};
    int limit = max_solutions > 0 ? max_solutions : static_cast<int>(census.solutions.size());
    for (const auto& sol : census.solutions) {
        if (report.checked >= limit) break;
        budget.escape_radius = escape_radius(sol.poly);
        const auto jac = heights_jacobian(sol.poly, fd_step, budget);
        const int rank = numerical_rank(jac.matrix, 1e-6);
        report.ranks.push_back(rank);
        ++report.checked;
        if (rank < report.target_classes) ++report.violations;
    }
    return report;
}

}  // namespace polyheights
