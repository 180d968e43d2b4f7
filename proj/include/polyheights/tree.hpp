#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polyheights/detail/linalg.hpp"
#include "polyheights/detail/parallel.hpp"
#include "polyheights/errors.hpp"
#include "polyheights/escape.hpp"
#include "polyheights/marked_polynomial.hpp"

namespace polyheights {

struct GridSpec {
    int resolution = 256;     // cells per side at the first attempt (power of 2)
    int refinement_limit = 3; // how many doublings may be tried
    int workers = 1;
};

// Finite truncation of the polynomial tree: one vertex per connected
// component of a level set of G at the heights {d^k h_c} of the critical
// grand orbits, intersected with [floor, d M], plus leaf vertices where the
// truncation floor cuts the edges.  Equipped with the induced self-map F
// (partial: where the image height stays inside the window), local degrees,
// and annulus covering degrees on edges.
struct TreeVertex {
    int id = 0;
    int height_index = 0;  // into PolyTree::level_heights
    double height = 0.0;
    int height_class = -1;  // generating critical class; -1 for the floor
    int height_exp = 0;     // height = ladder(class, exp); F raises exp by one
    int local_degree = 1;   // 1 + marked critical points on the component
    int level = 0;          // iterates needed to land in [M, dM)
};

struct TreeEdge {
    int child = 0;
    int parent = 0;
    int degree = 1;  // covering degree of the annulus onto its image
};

struct PolyTree {
    int d = 2;
    double base_height = 0.0;
    double M = 0.0;
    bool trivial = false;
    bool stable = true;  // false when refinements kept disagreeing
    int resolution = 0;

    std::vector<double> critical_heights;  // escaping critical heights, descending
    std::vector<double> level_heights;     // ascending, level_heights[0] = base_height
    std::vector<TreeVertex> vertices;   // ordered by ascending height
    std::vector<TreeEdge> edges;
    std::vector<int> dynamics;       // vertex -> vertex, -1 undefined
    std::vector<int> edge_dynamics;  // edge -> edge, -1 undefined

    int parent_edge(int v) const {
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (edges[e].child == v) return static_cast<int>(e);
        return -1;
    }
    std::vector<int> child_edges(int v) const {
        std::vector<int> out;
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (edges[e].parent == v) out.push_back(static_cast<int>(e));
        return out;
    }
};

namespace detail_tree {

struct GridUnstable {
    std::string reason;
};

struct Grid {
    int res = 0;
    double half_width = 0.0;
    double cell = 0.0;
    std::vector<double> g;  // res*res escape rates at cell centers

    Complex center(int ix, int iy) const {
        return {-half_width + (ix + 0.5) * cell, -half_width + (iy + 0.5) * cell};
    }
    int index_of(Complex z) const {
        const int ix = static_cast<int>(std::floor((z.real() + half_width) / cell));
        const int iy = static_cast<int>(std::floor((z.imag() + half_width) / cell));
        if (ix < 0 || iy < 0 || ix >= res || iy >= res) return -1;
        return iy * res + ix;
    }
};

inline Grid sample_grid(const MarkedPolynomial& f, double half_width, int res,
                        double floor, int workers) {
    Grid grid;
    grid.res = res;
    grid.half_width = half_width;
    grid.cell = 2 * half_width / res;
    grid.g.assign(static_cast<std::size_t>(res) * res, 0.0);

    // A point with G >= 0.4*floor clears the escape radius well within this
    // many steps; anything unresolved is safely below the truncation window.
    EscapeBudget budget = standard_budget(f, 1e-12);
    const double g0 = 0.4 * floor;
    budget.max_iterations =
        static_cast<int>(std::ceil(std::log(std::max(std::log(2 * budget.escape_radius) / g0, 2.0)) /
                                   std::log(double(f.degree)))) + 48;

    detail::parallel_for(res, workers, [&](std::size_t iy) {
        for (int ix = 0; ix < res; ++ix) {
            const EscapeValue ev =
                green_with<Complex>(f, grid.center(ix, static_cast<int>(iy)), budget);
            grid.g[iy * res + ix] = ev.escaped ? ev.value : 0.0;
        }
    });
    return grid;
}

// 4-connected components of {G < threshold} on the grid.
inline std::pair<std::vector<int>, int> label_sublevel(const Grid& grid, double threshold) {
    const int res = grid.res;
    std::vector<int> label(grid.g.size(), -1);
    int next = 0;
    std::deque<int> queue;
    for (std::size_t start = 0; start < grid.g.size(); ++start) {
        if (label[start] >= 0 || grid.g[start] >= threshold) continue;
        const int id = next++;
        label[start] = id;
        queue.push_back(static_cast<int>(start));
        while (!queue.empty()) {
            const int cur = queue.front();
            queue.pop_front();
            const int ix = cur % res, iy = cur / res;
            const int nbr[4] = {ix > 0 ? cur - 1 : -1, ix + 1 < res ? cur + 1 : -1,
                                iy > 0 ? cur - res : -1, iy + 1 < res ? cur + res : -1};
            for (int nb : nbr) {
                if (nb < 0 || label[nb] >= 0 || grid.g[nb] >= threshold) continue;
                label[nb] = id;
                queue.push_back(nb);
            }
        }
    }
    return {std::move(label), next};
}

// Label of the component at or next to the given point; tolerates the point's
// own cell straddling the level curve by scanning a small neighborhood.
inline int locate(const Grid& grid, const std::vector<int>& label, Complex z) {
    const int idx = grid.index_of(z);
    if (idx >= 0 && label[idx] >= 0) return label[idx];
    if (idx < 0) return -1;
    const int res = grid.res;
    const int cx = idx % res;
    const int cy = idx / res;
    for (int r = 1; r <= 3; ++r)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                const int x = cx + dx, y = cy + dy;
                if (x < 0 || y < 0 || x >= res || y >= res) continue;
                if (label[y * res + x] >= 0) return label[y * res + x];
            }
    return -1;
}

struct HeightLadder {
    // lattice_heights[i] = ladder value of (cls[i], exp[i]); strictly
    // ascending; consecutive ladder entries of one class differ by an exact
    // factor d in the stored doubles.
    std::vector<double> values;
    std::vector<int> cls;
    std::vector<int> exp;
};

}  // namespace detail_tree

inline PolyTree trivial_tree(const MarkedPolynomial& f, double floor) {
    PolyTree t;
    t.d = f.degree;
    t.base_height = floor;
    t.M = 0.0;
    t.trivial = true;
    double h = floor;
    for (int k = 0; k < 4; ++k) {
        TreeVertex v;
        v.id = k;
        v.height_index = k;
        v.height = h;
        v.height_class = 0;
        v.height_exp = k;
        v.level = k;
        t.level_heights.push_back(h);
        t.vertices.push_back(v);
        if (k > 0) t.edges.push_back({k - 1, k, 1});
        h *= f.degree;
    }
    t.dynamics.assign(4, -1);
    for (int k = 0; k + 1 < 4; ++k) t.dynamics[k] = k + 1;
    t.edge_dynamics.assign(t.edges.size(), -1);
    for (int e = 0; e + 1 < static_cast<int>(t.edges.size()); ++e) t.edge_dynamics[e] = e + 1;
    return t;
}

namespace detail_tree {

inline PolyTree build_at_resolution(const MarkedPolynomial& f, double floor,
                                    const HeightLadder& ladder,
                                    const std::vector<double>& crit_heights_marked,
                                    double M, int res, int workers) {
    const int d = f.degree;

    // Height list: floor, then the lattice values in (floor, dM].
    std::vector<double> H{floor};
    std::vector<int> Hcls{-1}, Hexp{0};
    for (std::size_t i = 0; i < ladder.values.size(); ++i) {
        H.push_back(ladder.values[i]);
        Hcls.push_back(ladder.cls[i]);
        Hexp.push_back(ladder.exp[i]);
    }
    const int m = static_cast<int>(H.size());
    double min_gap = H[1] - H[0];
    for (int i = 1; i + 1 < m; ++i) min_gap = std::min(min_gap, H[i + 1] - H[i]);

    // For monic centered f the complement map at infinity is w + O(1/w), so
    // {G <= M} sits inside |z| <= 2 e^M; everything the grid must resolve
    // (level sets up to M, critical points, preimage roots) lives there.
    const double half_width = 2.2 * std::exp(M);
    const Grid grid = sample_grid(f, half_width, res, floor, workers);

    // Lipschitz allowance so a cell whose center clears the threshold by
    // delta lies entirely inside the sublevel set.
    double lip = 0.0;
    for (int iy = 1; iy + 1 < res; ++iy)
        for (int ix = 1; ix + 1 < res; ++ix) {
            const double gc = grid.g[iy * res + ix];
            if (gc < 0.3 * floor || gc > 1.2 * M) continue;
            const double gx = (grid.g[iy * res + ix + 1] - grid.g[iy * res + ix - 1]) / (2 * grid.cell);
            const double gy = (grid.g[(iy + 1) * res + ix] - grid.g[(iy - 1) * res + ix]) / (2 * grid.cell);
            lip = std::max(lip, std::hypot(gx, gy));
        }
    const double delta = std::min(1.5 * lip * grid.cell, min_gap / 2.5);
    if (!(delta > 0)) throw GridUnstable{"degenerate level gap"};

    // Sublevel labelings at H[i] for every band top at or below M; above M a
    // sublevel set is connected and needs no grid.
    std::vector<std::optional<std::pair<std::vector<int>, int>>> labelings(m + 1);
    for (int i = 1; i <= m; ++i) {
        if (H[i - 1] > M * (1 + 1e-12)) break;  // vertex heights above M: trivial
        if (i < m && H[i] <= M * (1 + 1e-12))
            labelings[i] = label_sublevel(grid, H[i] - delta);
    }
    auto vertices_at = [&](int i) -> int {
        // components of {G < H[i+1]}; connected once H[i+1] > M
        if (i + 1 >= m || H[i + 1] > M * (1 + 1e-12)) return 1;
        return labelings[i + 1]->second;
    };

    PolyTree t;
    t.d = d;
    t.base_height = floor;
    t.M = M;
    t.resolution = res;
    t.level_heights = H;

    // Vertex ids, ordered by ascending height then component label.
    std::vector<std::vector<int>> vid(m);  // per height index, per component label
    for (int i = 0; i < m; ++i) {
        const int count = vertices_at(i);
        vid[i].resize(count);
        for (int c = 0; c < count; ++c) {
            TreeVertex v;
            v.id = static_cast<int>(t.vertices.size());
            v.height_index = i;
            v.height = H[i];
            v.height_class = Hcls[i];
            v.height_exp = Hexp[i];
            vid[i][c] = v.id;
            t.vertices.push_back(v);
        }
    }
    for (auto& v : t.vertices) {
        int l = 0;
        double h = v.height;
        while (h < M * (1 - 1e-12)) {
            h *= d;
            ++l;
        }
        while (h >= d * M * (1 - 1e-12)) {
            h /= d;
            --l;
        }
        v.level = l;
    }

    // A representative core cell per component (highest G below the vertex
    // height), used for inclusion lookups and dynamics samples.
    std::vector<std::vector<int>> rep_cell(m);
    std::vector<std::vector<std::vector<int>>> core_cells(m);
    for (int i = 0; i < m; ++i) {
        const int count = vertices_at(i);
        rep_cell[i].assign(count, -1);
        core_cells[i].assign(count, {});
        if (count == 1 && (i + 1 >= m || H[i + 1] > M * (1 + 1e-12))) continue;
        const auto& [label, n_comp] = *labelings[i + 1];
        std::vector<double> best(count, -1.0);
        for (std::size_t cell = 0; cell < label.size(); ++cell) {
            const int c = label[cell];
            if (c < 0) continue;
            const double g = grid.g[cell];
            if (g < H[i]) {
                if (g > best[c]) {
                    best[c] = g;
                    rep_cell[i][c] = static_cast<int>(cell);
                }
                if (core_cells[i][c].size() < 64) core_cells[i][c].push_back(static_cast<int>(cell));
            }
        }
        for (int c = 0; c < count; ++c)
            if (rep_cell[i][c] < 0) throw GridUnstable{"component with empty core"};
    }

    // Edges: each vertex below the top has one parent, by inclusion.
    std::vector<int> parent(t.vertices.size(), -1);
    for (int i = 0; i + 1 < m; ++i) {
        for (int c = 0; c < static_cast<int>(vid[i].size()); ++c) {
            int parent_comp = 0;
            if (!(i + 2 >= m || H[i + 2] > M * (1 + 1e-12))) {
                const auto& [plabel, pn] = *labelings[i + 2];
                const int cell = rep_cell[i][c] >= 0 ? rep_cell[i][c] : rep_cell[i][0];
                parent_comp = cell >= 0 ? plabel[cell] : -1;
                if (parent_comp < 0) throw GridUnstable{"inclusion lookup failed"};
            }
            const int v = vid[i][c];
            const int p = vid[i + 1][parent_comp];
            parent[v] = p;
            t.edges.push_back({v, p, 1});
        }
    }

    // Local degrees from the marked critical points on each level-set component.
    for (std::size_t k = 0; k < f.critical_points.size(); ++k) {
        const double hc = crit_heights_marked[k];
        if (!(hc > floor * (1 + 1e-12))) continue;  // bounded or below the window
        int i = -1;
        for (int j = 1; j < m; ++j)
            if (std::abs(H[j] - hc) <= 1e-6 * M + 1e-9 * hc) {
                i = j;
                break;
            }
        if (i < 0) throw GridUnstable{"critical height missing from ladder"};
        int comp = 0;
        if (!(i + 1 >= m || H[i + 1] > M * (1 + 1e-12))) {
            comp = locate(grid, labelings[i + 1]->first, f.critical_points[k]);
            if (comp < 0) throw GridUnstable{"could not locate critical point component"};
        }
        t.vertices[vid[i][comp]].local_degree += 1;
    }

    // Vertex dynamics: F(v) sits at height d * H[i], located through the
    // image of core samples (validated on up to three samples).
    t.dynamics.assign(t.vertices.size(), -1);
    auto height_index_of = [&](int cls, int exp) -> int {
        for (int j = 0; j < m; ++j)
            if (Hcls[j] == cls && Hexp[j] == exp) return j;
        return -1;
    };
    for (int i = 0; i < m; ++i) {
        if (Hcls[i] < 0) continue;  // floor leaves have no image vertex
        const int j = height_index_of(Hcls[i], Hexp[i] + 1);
        if (j < 0) continue;  // image height above the window
        for (int c = 0; c < static_cast<int>(vid[i].size()); ++c) {
            int image = 0;
            if (!(j + 1 >= m || H[j + 1] > M * (1 + 1e-12))) {
                const auto& jl = labelings[j + 1]->first;
                int found = -1;
                const auto& cores = core_cells[i][c];
                int checked = 0;
                for (std::size_t s = 0; s < cores.size() && checked < 3;
                     s += std::max<std::size_t>(1, cores.size() / 3), ++checked) {
                    const int cell = cores[s];
                    const Complex w = evaluate(f, grid.center(cell % res, cell / res));
                    const int lbl = locate(grid, jl, w);
                    if (lbl < 0) throw GridUnstable{"image sample off the grid"};
                    if (found >= 0 && lbl != found)
                        throw GridUnstable{"dynamics samples disagree"};
                    found = lbl;
                }
                if (found < 0) throw GridUnstable{"no dynamics sample"};
                image = found;
            }
            t.dynamics[vid[i][c]] = vid[j][image];
        }
    }

    // Edge degrees: count the f-preimages of a sample in the image annulus
    // that land back in this annulus.  Bands above M cover with full degree d.
    std::map<std::pair<int, int>, int> edge_index;
    for (std::size_t e = 0; e < t.edges.size(); ++e)
        edge_index[{t.edges[e].child, t.edges[e].parent}] = static_cast<int>(e);

    t.edge_dynamics.assign(t.edges.size(), -1);
    for (std::size_t e = 0; e < t.edges.size(); ++e) {
        TreeEdge& edge = t.edges[e];
        const TreeVertex& vc = t.vertices[edge.child];
        const int i = vc.height_index;
        const bool above_M = H[i] > M * (1 - 1e-12);
        Complex annulus_sample{0.0, 0.0};
        bool have_sample = false;
        if (above_M) {
            edge.degree = d;
        } else {
            // cells of the child's labeling component with G inside the band
            const auto& [label, n_comp] = *labelings[i + 1];
            const int comp = static_cast<int>(
                std::find(vid[i].begin(), vid[i].end(), edge.child) - vid[i].begin());
            const double lo = H[i] + 0.15 * (H[i + 1] - H[i]);
            const double hi = H[i + 1] - delta - 0.1 * (H[i + 1] - H[i]);
            const double mid = 0.5 * (H[i] + H[i + 1]);
            int best_cell = -1;
            double best_dist = 1e300;
            for (std::size_t cell = 0; cell < label.size(); ++cell) {
                if (label[cell] != comp) continue;
                const double g = grid.g[cell];
                if (g <= lo || g >= hi) continue;
                const double dist = std::abs(g - mid);
                if (dist < best_dist) {
                    best_dist = dist;
                    best_cell = static_cast<int>(cell);
                }
            }
            if (best_cell < 0) throw GridUnstable{"annulus too thin for the grid"};
            annulus_sample = grid.center(best_cell % res, best_cell / res);
            have_sample = true;

            const Complex w = evaluate(f, annulus_sample);
            auto shifted = f.coefficients;
            shifted[0] -= w;
            const auto roots = detail::polynomial_roots(shifted);
            int count = 0;
            for (const Complex& r : roots)
                if (locate(grid, label, r) == comp) ++count;
            if (count < 1) throw GridUnstable{"edge degree count failed"};
            edge.degree = count;
        }

        // Edge dynamics: the image annulus lies directly below F(parent).
        const int p = edge.parent;
        const int fp = t.dynamics[p];
        if (fp < 0) continue;
        int fchild = -1;
        if (t.dynamics[edge.child] >= 0) {
            fchild = t.dynamics[edge.child];
        } else if (have_sample) {
            // dangling edge: follow the sample into the image band
            const Complex w = evaluate(f, annulus_sample);
            const EscapeValue gw = green_with<Complex>(f, w, standard_budget(f, 1e-12));
            int j = -1;
            for (int q = 0; q + 1 < m; ++q)
                if (gw.value > H[q] && gw.value < H[q + 1]) {
                    j = q;
                    break;
                }
            if (j < 0) continue;
            int comp_img = 0;
            if (!(j + 1 >= m || H[j + 1] > M * (1 + 1e-12)))
                comp_img = locate(grid, labelings[j + 1]->first, w);
            if (comp_img < 0) continue;
            fchild = vid[j][comp_img];
        }
        if (fchild < 0) continue;
        const auto it = edge_index.find({fchild, fp});
        if (it != edge_index.end()) t.edge_dynamics[e] = it->second;
    }
    return t;
}

}  // namespace detail_tree

bool trees_isomorphic(const PolyTree& a, const PolyTree& b, double eps,
                      bool check_dynamics = true);

// Builds the truncated tree, refining the grid until two successive
// resolutions produce the same combinatorial output.  A disagreement at the
// refinement limit returns the finest result flagged unstable.
inline PolyTree build_tree(const MarkedPolynomial& f, double floor, const GridSpec& grid) {
    if (!(floor > 0)) throw DomainError("build_tree: floor must be positive");
    const EscapeBudget budget = standard_budget(f);
    const CriticalHeights ch = heights(f, budget);

    std::vector<double> crit_marked(f.critical_points.size(), 0.0);
    for (std::size_t i = 0; i < crit_marked.size(); ++i)
        crit_marked[i] = ch.marked[i].escaped ? ch.marked[i].value : 0.0;

    double M = 0.0;
    for (double h : crit_marked) M = std::max(M, h);
    if (M <= 0.0) return trivial_tree(f, floor);

    // Distinct generating heights: one per lattice class (heights agreeing up
    // to a power of d generate the same grand-orbit lattice).
    std::vector<double> gens;
    for (double h : crit_marked) {
        if (!(h > 0)) continue;
        double lifted = h;
        while (lifted < M * (1 - 1e-9)) lifted *= f.degree;
        bool known = false;
        for (double g0 : gens) {
            double lg = g0;
            while (lg < M * (1 - 1e-9)) lg *= f.degree;
            if (std::abs(lg - lifted) <= 1e-9 * M) known = true;
        }
        if (!known) gens.push_back(h);
    }

    // Ladder of lattice heights in (floor, dM], exact under multiplication by d.
    detail_tree::HeightLadder ladder;
    {
        std::vector<std::tuple<double, int, int>> entries;
        for (std::size_t c = 0; c < gens.size(); ++c) {
            int e = 0;
            double h = gens[c];
            while (h > floor * (1 + 1e-12) * f.degree) {
                h /= f.degree;
                --e;
            }
            // ascend from below the floor so every stored step is one multiply
            while (h <= floor * (1 + 1e-12)) {
                h *= f.degree;
                ++e;
            }
            for (; h <= f.degree * M * (1 + 1e-9); h *= f.degree, ++e)
                entries.emplace_back(h, static_cast<int>(c), e);
        }
        std::sort(entries.begin(), entries.end());
        for (const auto& [h, c, e] : entries) {
            if (!ladder.values.empty() && h - ladder.values.back() <= 1e-9 * M) continue;
            ladder.values.push_back(h);
            ladder.cls.push_back(c);
            ladder.exp.push_back(e);
        }
    }
    if (ladder.values.empty()) throw DomainError("build_tree: floor lies above all critical heights");

    PolyTree previous;
    bool have_previous = false;
    int res = grid.resolution;
    for (int attempt = 0; attempt <= grid.refinement_limit; ++attempt, res *= 2) {
        PolyTree t;
        try {
            t = detail_tree::build_at_resolution(f, floor, ladder, crit_marked, M, res,
                                                 grid.workers);
        } catch (const detail_tree::GridUnstable&) {
            have_previous = false;
            continue;
        }
        t.critical_heights = crit_marked;
        std::sort(t.critical_heights.begin(), t.critical_heights.end(), std::greater<>());
        while (!t.critical_heights.empty() && !(t.critical_heights.back() > 0))
            t.critical_heights.pop_back();
        if (have_previous && trees_isomorphic(previous, t, 1e-9 * M, true)) {
            t.stable = true;
            return t;
        }
        previous = std::move(t);
        have_previous = true;
    }
    if (!have_previous) throw DomainError("build_tree: grid labeling failed at every resolution");
    previous.stable = false;
    return previous;
}

// Restriction to vertices with |level| < N.
inline PolyTree truncate(const PolyTree& t, int N) {
    if (N < 1) throw DomainError("truncate: need N >= 1");
    PolyTree out;
    out.d = t.d;
    out.M = t.M;
    out.trivial = t.trivial;
    out.stable = t.stable;
    out.resolution = t.resolution;
    out.critical_heights = t.critical_heights;

    std::vector<int> remap(t.vertices.size(), -1);
    for (const auto& v : t.vertices) {
        if (std::abs(v.level) >= N) continue;
        TreeVertex nv = v;
        nv.id = static_cast<int>(out.vertices.size());
        remap[v.id] = nv.id;
        out.vertices.push_back(nv);
    }
    std::set<double> kept_heights;
    for (const auto& v : out.vertices) kept_heights.insert(v.height);
    out.level_heights.assign(kept_heights.begin(), kept_heights.end());
    for (auto& v : out.vertices)
        v.height_index = static_cast<int>(
            std::lower_bound(out.level_heights.begin(), out.level_heights.end(), v.height) -
            out.level_heights.begin());
    out.base_height = out.level_heights.empty() ? t.base_height : out.level_heights.front();

    std::vector<int> edge_remap(t.edges.size(), -1);
    for (std::size_t e = 0; e < t.edges.size(); ++e) {
        const auto& ed = t.edges[e];
        if (remap[ed.child] < 0 || remap[ed.parent] < 0) continue;
        edge_remap[e] = static_cast<int>(out.edges.size());
        out.edges.push_back({remap[ed.child], remap[ed.parent], ed.degree});
    }
    out.dynamics.assign(out.vertices.size(), -1);
    for (std::size_t v = 0; v < t.dynamics.size(); ++v)
        if (remap[v] >= 0 && t.dynamics[v] >= 0 && remap[t.dynamics[v]] >= 0)
            out.dynamics[remap[v]] = remap[t.dynamics[v]];
    out.edge_dynamics.assign(out.edges.size(), -1);
    for (std::size_t e = 0; e < t.edge_dynamics.size(); ++e)
        if (edge_remap[e] >= 0 && t.edge_dynamics[e] >= 0 &&
            edge_remap[t.edge_dynamics[e]] >= 0)
            out.edge_dynamics[edge_remap[e]] = edge_remap[t.edge_dynamics[e]];
    return out;
}

namespace detail_tree {

// Canonical AHU-style key of the subtree below v; heights enter only through
// their rank so epsilon-near trees share keys.
inline std::string subtree_key(const PolyTree& t, int v, int parent_edge_degree,
                               const std::vector<std::vector<int>>& children,
                               const std::vector<int>& height_rank) {
    std::vector<std::string> child_keys;
    for (int e : children[v]) {
        const auto& ed = t.edges[e];
        child_keys.push_back(subtree_key(t, ed.child, ed.degree, children, height_rank));
    }
    std::sort(child_keys.begin(), child_keys.end());
    std::string key = "(" + std::to_string(height_rank[v]) + "," +
                      std::to_string(t.vertices[v].local_degree) + "," +
                      std::to_string(parent_edge_degree) + ";";
    for (const auto& ck : child_keys) key += ck;
    key += ")";
    return key;
}

struct IsoSearch {
    const PolyTree& a;
    const PolyTree& b;
    const std::vector<std::vector<int>>& ca;
    const std::vector<std::vector<int>>& cb;
    const std::vector<std::string>& keys_a;
    const std::vector<std::string>& keys_b;
    bool check_dynamics;
    std::vector<int> phi;  // a-vertex -> b-vertex

    bool extend(int va, int vb) {
        phi[va] = vb;
        if (check_dynamics) {
            const int fa = a.dynamics[va], fb = b.dynamics[vb];
            if ((fa < 0) != (fb < 0)) return false;
            // F raises height, so the image was assigned before its preimage.
            if (fa >= 0 && phi[fa] != fb) return false;
        }
        return match_children(va, vb);
    }

    bool match_children(int va, int vb) {
        const auto& ea = ca[va];
        const auto& eb = cb[vb];
        if (ea.size() != eb.size()) return false;
        std::vector<int> used(eb.size(), 0);
        return assign(va, vb, 0, used);
    }

    bool assign(int va, int vb, std::size_t i, std::vector<int>& used) {
        const auto& ea = ca[va];
        const auto& eb = cb[vb];
        if (i == ea.size()) return true;
        const int child_a = a.edges[ea[i]].child;
        for (std::size_t j = 0; j < eb.size(); ++j) {
            if (used[j]) continue;
            const int child_b = b.edges[eb[j]].child;
            if (a.edges[ea[i]].degree != b.edges[eb[j]].degree) continue;
            if (keys_a[child_a] != keys_b[child_b]) continue;
            used[j] = 1;
            const std::vector<int> saved = phi;
            if (extend(child_a, child_b) && assign(va, vb, i + 1, used)) return true;
            phi = saved;
            used[j] = 0;
        }
        return false;
    }
};

}  // namespace detail_tree

// Tree isomorphism respecting local degrees, edge degrees and (optionally)
// the induced dynamics, with matched vertex heights differing by at most eps.
inline bool trees_isomorphic(const PolyTree& a, const PolyTree& b, double eps,
                             bool check_dynamics) {
    if (a.trivial || b.trivial) {
        if (a.trivial != b.trivial) return false;
        if (a.vertices.size() != b.vertices.size()) return false;
        for (std::size_t i = 0; i < a.vertices.size(); ++i)
            if (std::abs(a.vertices[i].height - b.vertices[i].height) > eps) return false;
        return true;
    }
    if (a.d != b.d || a.vertices.size() != b.vertices.size() ||
        a.edges.size() != b.edges.size())
        return false;

    // Height ranks (descending); counts and values must agree within eps.
    auto ranks = [](const PolyTree& t) {
        std::vector<double> hs = t.level_heights;
        std::sort(hs.begin(), hs.end(), std::greater<>());
        std::vector<int> rank(t.vertices.size());
        for (const auto& v : t.vertices)
            rank[v.id] = static_cast<int>(
                std::find(hs.begin(), hs.end(), v.height) - hs.begin());
        return std::make_pair(hs, rank);
    };
    const auto [ha, rank_a] = ranks(a);
    const auto [hb, rank_b] = ranks(b);
    if (ha.size() != hb.size()) return false;
    for (std::size_t i = 0; i < ha.size(); ++i)
        if (std::abs(ha[i] - hb[i]) > eps) return false;

    auto children_of = [](const PolyTree& t) {
        std::vector<std::vector<int>> ch(t.vertices.size());
        for (std::size_t e = 0; e < t.edges.size(); ++e) ch[t.edges[e].parent].push_back(static_cast<int>(e));
        return ch;
    };
    const auto ca = children_of(a);
    const auto cb = children_of(b);

    auto root_of = [](const PolyTree& t) {
        int root = -1;
        for (const auto& v : t.vertices) {
            bool is_child = false;
            for (const auto& e : t.edges)
                if (e.child == v.id) is_child = true;
            if (!is_child) {
                if (root >= 0) return -1;  // forest: no unique root
                root = v.id;
            }
        }
        return root;
    };
    const int root_a = root_of(a), root_b = root_of(b);
    if (root_a < 0 || root_b < 0) return false;

    std::vector<std::string> keys_a(a.vertices.size()), keys_b(b.vertices.size());
    for (const auto& v : a.vertices)
        keys_a[v.id] = detail_tree::subtree_key(a, v.id, 0, ca, rank_a);
    for (const auto& v : b.vertices)
        keys_b[v.id] = detail_tree::subtree_key(b, v.id, 0, cb, rank_b);
    if (keys_a[root_a] != keys_b[root_b]) return false;

    detail_tree::IsoSearch search{a, b, ca, cb, keys_a, keys_b, check_dynamics,
                                  std::vector<int>(a.vertices.size(), -1)};
    return search.extend(root_a, root_b);
}

// Epsilon-conjugacy test of two truncations at the same level.
inline bool iso_test(const PolyTree& t1, const PolyTree& t2, double eps) {
    auto level_span = [](const PolyTree& t) {
        int lo = 0, hi = 0;
        for (const auto& v : t.vertices) {
            lo = std::min(lo, v.level);
            hi = std::max(hi, v.level);
        }
        return std::make_pair(lo, hi);
    };
    if (!t1.trivial && !t2.trivial && level_span(t1) != level_span(t2))
        throw LevelMismatch("iso_test: trees truncated to different level ranges");
    return trees_isomorphic(t1, t2, eps, true);
}

// Lattice periods of the fundamental subannuli: for the subannulus edge e_j
// (child vertex in [M, dM)), the lcm of its own covering degree and of the
// composite degrees of every tree edge whose iterated edge-image reaches it.
inline std::vector<long long> twist_periods(const PolyTree& t) {
    if (t.trivial) throw InsufficientDepth("twist_periods: trivial tree has no subannuli");
    double min_crit = t.M;
    for (double hc : t.critical_heights) min_crit = std::min(min_crit, hc);
    if (!(t.base_height < min_crit))
        throw InsufficientDepth("twist_periods: truncation floor sits above the lowest critical height");

    // Subannulus edges: child height in [M, dM), ordered by height.
    std::vector<std::pair<double, int>> band_edges;
    for (std::size_t e = 0; e < t.edges.size(); ++e) {
        const double h = t.vertices[t.edges[e].child].height;
        if (h >= t.M * (1 - 1e-12) && h < t.d * t.M * (1 - 1e-12))
            band_edges.emplace_back(h, static_cast<int>(e));
    }
    std::sort(band_edges.begin(), band_edges.end());

    std::vector<long long> periods;
    for (const auto& [h, ej] : band_edges) {
        long long l = t.edges[ej].degree;
        for (std::size_t e = 0; e < t.edges.size(); ++e) {
            if (static_cast<int>(e) == ej) continue;
            long long product = 1;
            int cur = static_cast<int>(e);
            for (int hops = 0; hops < 128 && cur >= 0; ++hops) {
                product *= t.edges[cur].degree;
                cur = t.edge_dynamics[cur];
                if (cur == ej) {
                    l = std::lcm(l, product);
                    break;
                }
            }
        }
        periods.push_back(l);
    }
    return periods;
}

}  // namespace polyheights
