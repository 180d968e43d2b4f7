#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "polyheights/boettcher.hpp"
#include "polyheights/census.hpp"
#include "polyheights/errors.hpp"
#include "polyheights/escape.hpp"
#include "polyheights/heights_space.hpp"
#include "polyheights/marked_polynomial.hpp"
#include "polyheights/tree.hpp"

namespace polyheights {

using Json = nlohmann::json;

inline Json to_json(Complex z) { return Json::array({z.real(), z.imag()}); }

inline Complex complex_from_json(const Json& j) {
    return Complex{j.at(0).get<double>(), j.at(1).get<double>()};
}

// Wire schema: { "d": int, "c": [[re,im],...], "a": [re,im] }.
// nlohmann prints shortest round-trip decimals, so finite doubles survive a
// write/read cycle bit for bit.
inline Json to_json(const MarkedPolynomial& f) {
    Json j;
    j["d"] = f.degree;
    j["c"] = Json::array();
    for (const Complex& c : f.critical_points) j["c"].push_back(to_json(c));
    j["a"] = to_json(f.translation);
    return j;
}

inline MarkedPolynomial polynomial_from_json(const Json& j) {
    std::vector<Complex> c;
    for (const auto& ci : j.at("c")) c.push_back(complex_from_json(ci));
    const MarkedPolynomial f = from_critical_data(std::move(c), complex_from_json(j.at("a")));
    if (j.contains("d") && j.at("d").get<int>() != f.degree)
        throw DomainError("polynomial_from_json: declared degree does not match critical points");
    return f;
}

inline MarkedPolynomial load_polynomial(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open polynomial file: " + path);
    Json j;
    in >> j;
    return polynomial_from_json(j);
}

inline Json to_json(const CriticalHeights& ch) {
    Json j;
    j["heights"] = ch.hv.heights;
    j["M"] = ch.M();
    Json flags = Json::array();
    for (char e : ch.escaped_sorted) flags.push_back(e ? "escaped" : "unresolved");
    j["flags"] = flags;
    return j;
}

inline Json to_json(const PhiImage& img) {
    Json j;
    j["d"] = img.d;
    j["n"] = img.n;
    j["log_w"] = Json::array();
    Json w = Json::array();
    bool representable = true;
    for (const Complex& lw : img.log_w) {
        j["log_w"].push_back(Json::array({lw.real(), lw.imag()}));
        if (lw.real() < 700.0)
            w.push_back(to_json(std::exp(lw)));
        else
            representable = false;
    }
    if (representable) j["w"] = w;
    return j;
}

inline PhiImage phi_image_from_json(const Json& j) {
    PhiImage img;
    img.d = j.at("d").get<int>();
    img.n = j.at("n").get<int>();
    for (const auto& lw : j.at("log_w"))
        img.log_w.push_back(Complex{lw.at(0).get<double>(), lw.at(1).get<double>()});
    return img;
}

inline Json to_json(const PolyTree& t) {
    Json j;
    j["d"] = t.d;
    j["base_height"] = t.base_height;
    j["M"] = t.M;
    j["trivial"] = t.trivial;
    j["stable"] = t.stable;
    j["resolution"] = t.resolution;
    j["critical_heights"] = t.critical_heights;
    j["vertices"] = Json::array();
    for (const auto& v : t.vertices)
        j["vertices"].push_back(Json{{"id", v.id},
                                     {"height", v.height},
                                     {"height_class", v.height_class},
                                     {"height_exp", v.height_exp},
                                     {"local_degree", v.local_degree},
                                     {"level", v.level}});
    j["edges"] = Json::array();
    for (const auto& e : t.edges)
        j["edges"].push_back(Json{{"child", e.child}, {"parent", e.parent}, {"degree", e.degree}});
    Json dyn = Json::object();
    for (std::size_t v = 0; v < t.dynamics.size(); ++v)
        if (t.dynamics[v] >= 0) dyn[std::to_string(v)] = t.dynamics[v];
    j["dynamics"] = dyn;
    return j;
}

inline PolyTree tree_from_json(const Json& j) {
    PolyTree t;
    t.d = j.at("d").get<int>();
    t.base_height = j.at("base_height").get<double>();
    t.M = j.at("M").get<double>();
    t.trivial = j.at("trivial").get<bool>();
    t.stable = j.at("stable").get<bool>();
    t.resolution = j.at("resolution").get<int>();
    if (j.contains("critical_heights"))
        t.critical_heights = j.at("critical_heights").get<std::vector<double>>();
    for (const auto& vj : j.at("vertices")) {
        TreeVertex v;
        v.id = vj.at("id").get<int>();
        v.height = vj.at("height").get<double>();
        v.height_class = vj.at("height_class").get<int>();
        v.height_exp = vj.at("height_exp").get<int>();
        v.local_degree = vj.at("local_degree").get<int>();
        v.level = vj.at("level").get<int>();
        t.vertices.push_back(v);
    }
    std::set<double> hs;
    for (const auto& v : t.vertices) hs.insert(v.height);
    t.level_heights.assign(hs.begin(), hs.end());
    for (auto& v : t.vertices)
        v.height_index = static_cast<int>(
            std::lower_bound(t.level_heights.begin(), t.level_heights.end(), v.height) -
            t.level_heights.begin());
    for (const auto& ej : j.at("edges"))
        t.edges.push_back({ej.at("child").get<int>(), ej.at("parent").get<int>(),
                           ej.at("degree").get<int>()});
    t.dynamics.assign(t.vertices.size(), -1);
    for (const auto& [k, v] : j.at("dynamics").items()) t.dynamics[std::stoul(k)] = v.get<int>();
    t.edge_dynamics.assign(t.edges.size(), -1);
    return t;
}

// Graphviz rendering with heights and degrees as attributes; dynamics drawn
// as dashed arcs.
inline std::string tree_to_dot(const PolyTree& t) {
    std::ostringstream out;
    out << "digraph polytree {\n  rankdir=BT;\n";
    out << "  graph [base_height=" << t.base_height << ", M=" << t.M
        << ", trivial=" << (t.trivial ? "true" : "false") << "];\n";
    for (const auto& v : t.vertices)
        out << "  v" << v.id << " [height=" << v.height << ", local_degree=" << v.local_degree
            << ", level=" << v.level << ", label=\"h=" << v.height << "\\nd=" << v.local_degree
            << "\"];\n";
    for (const auto& e : t.edges)
        out << "  v" << e.child << " -> v" << e.parent << " [degree=" << e.degree
            << ", label=\"" << e.degree << "\"];\n";
    for (std::size_t v = 0; v < t.dynamics.size(); ++v)
        if (t.dynamics[v] >= 0)
            out << "  v" << v << " -> v" << t.dynamics[v]
                << " [style=dashed, constraint=false, color=gray];\n";
    out << "}\n";
    return out.str();
}

inline Json to_json(const SubannuliDecomposition& dec) {
    Json j;
    j["d"] = dec.d;
    j["N"] = dec.N;
    j["M"] = dec.M;
    j["representatives"] = dec.representatives;
    j["levels"] = dec.levels;
    j["lifted"] = dec.lifted;
    j["moduli"] = dec.moduli;
    return j;
}

inline Json to_json(const HeightComplex& complex) {
    Json j;
    j["d"] = complex.d;
    j["depth"] = complex.depth;
    Json cells = Json::array();
    for (std::size_t i = 0; i < complex.cells.size(); ++i) {
        const HeightCell& cell = complex.cells[i];
        Json cj;
        cj["id"] = i;
        cj["dimension"] = cell.dimension();
        cj["classes"] = cell.class_of;
        cj["levels"] = cell.level_of;
        cj["faces"] = complex.facets[i];
        cj["chart_sample"] = cell_sample(cell, complex.d).heights;
        cells.push_back(std::move(cj));
    }
    j["cells"] = cells;
    int max_dim = 0;
    for (const auto& cell : complex.cells) max_dim = std::max(max_dim, cell.dimension());
    Json counts = Json::array();
    for (int dim = 0; dim <= max_dim; ++dim) counts.push_back(complex.cell_count(dim));
    j["cell_counts"] = counts;
    return j;
}

inline Json to_json(const FiberCensus& census) {
    Json j;
    j["d"] = census.d;
    j["n"] = census.n;
    j["grid"] = census.grid;
    j["target"] = census.target.heights;
    j["generic"] = census.generic;
    j["component_count"] = census.component_count();
    j["unsolved_cells"] = census.unsolved_cells.size();
    j["capped_cells"] = census.capped_cells;

    Json comps = Json::array();
    for (std::size_t c = 0; c < census.components.size(); ++c) {
        Json cj;
        cj["id"] = c;
        cj["size"] = census.components[c].size();
        const auto& rep = census.solutions[census.components[c].front()];
        cj["representative"] = to_json(rep.poly);
        cj["residual"] = rep.residual;
        cj["heights"] = rep.heights;
        if (!census.monodromy_checked.empty() && census.monodromy_checked[c]) {
            Json m = Json::array(), mc = Json::array();
            for (char closed : census.monodromy_closed[c]) m.push_back(static_cast<bool>(closed));
            for (char in : census.monodromy_in_component[c]) mc.push_back(static_cast<bool>(in));
            cj["monodromy_closed"] = m;
            cj["monodromy_in_component"] = mc;
            cj["monodromy_order"] = census.monodromy_order[c];
        }
        if (c < census.component_trees.size()) cj["tree"] = to_json(census.component_trees[c]);
        comps.push_back(std::move(cj));
    }
    j["components"] = comps;

    Json sols = Json::array();
    for (const auto& s : census.solutions) {
        Json sj;
        sj["poly"] = to_json(s.poly);
        sj["cell"] = s.cell;
        sj["residual"] = s.residual;
        sj["heights"] = s.heights;
        sj["component"] = s.component;
        sols.push_back(std::move(sj));
    }
    j["solutions"] = sols;
    return j;
}

inline FiberCensus census_from_json(const Json& j) {
    FiberCensus census;
    census.d = j.at("d").get<int>();
    census.n = j.at("n").get<int>();
    census.grid = j.at("grid").get<int>();
    census.target.d = census.d;
    census.target.heights = j.at("target").get<std::vector<double>>();
    census.generic = j.at("generic").get<bool>();
    if (j.contains("capped_cells")) census.capped_cells = j.at("capped_cells").get<int>();
    for (const auto& sj : j.at("solutions")) {
        CensusSolution s;
        s.poly = polynomial_from_json(sj.at("poly"));
        s.cell = sj.at("cell").get<std::vector<int>>();
        s.residual = sj.at("residual").get<double>();
        s.heights = sj.at("heights").get<std::vector<double>>();
        s.component = sj.at("component").get<int>();
        census.solutions.push_back(std::move(s));
    }
    census.components.resize(j.at("component_count").get<int>());
    for (std::size_t s = 0; s < census.solutions.size(); ++s)
        census.components[census.solutions[s].component].push_back(static_cast<int>(s));
    for (const auto& cj : j.at("components")) {
        if (cj.contains("monodromy_closed")) {
            std::vector<char> m, mc;
            for (bool b : cj.at("monodromy_closed")) m.push_back(b ? 1 : 0);
            for (bool b : cj.at("monodromy_in_component")) mc.push_back(b ? 1 : 0);
            census.monodromy_closed.push_back(std::move(m));
            census.monodromy_in_component.push_back(std::move(mc));
            census.monodromy_order.push_back(cj.at("monodromy_order").get<std::vector<int>>());
            census.monodromy_checked.push_back(1);
        } else {
            census.monodromy_closed.emplace_back();
            census.monodromy_in_component.emplace_back();
            census.monodromy_order.emplace_back();
            census.monodromy_checked.push_back(0);
        }
        if (cj.contains("tree")) census.component_trees.push_back(tree_from_json(cj.at("tree")));
    }
    return census;
}

}  // namespace polyheights
