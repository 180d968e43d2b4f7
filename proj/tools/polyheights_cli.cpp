// Command-line front end: every library operation as a subcommand, with a
// shared key=value config file (flags win), deterministic seeds, and the
// on-disk census store.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polyheights/boettcher.hpp"
#include "polyheights/census.hpp"
#include "polyheights/errors.hpp"
#include "polyheights/escape.hpp"
#include "polyheights/heights_space.hpp"
#include "polyheights/json_io.hpp"
#include "polyheights/marked_polynomial.hpp"
#include "polyheights/store.hpp"
#include "polyheights/tree.hpp"
#include "polyheights/version.hpp"

namespace ph = polyheights;

namespace {

struct Config {
    double tol = 1e-10;
    int maxiter = 10000;
    int grid_res = 256;
    int angle_grid = 64;
    int workers = 1;
    unsigned long seed = 12345;
    std::string cache_dir;

    std::string resolve_cache_dir() const {
        if (!cache_dir.empty()) return cache_dir;
        if (const char* env = std::getenv("POLYHEIGHTS_CACHE")) return env;
        return ".polyheights-cache";
    }
};

void load_config_file(const std::string& path, Config& cfg) {
    std::ifstream in(path);
    if (!in) throw ph::DomainError("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "tol") cfg.tol = std::stod(value);
        else if (key == "maxiter") cfg.maxiter = std::stoi(value);
        else if (key == "grid_res") cfg.grid_res = std::stoi(value);
        else if (key == "angle_grid") cfg.angle_grid = std::stoi(value);
        else if (key == "workers") cfg.workers = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoul(value);
        else if (key == "cache_dir") cfg.cache_dir = value;
        // unknown keys are ignored so configs can be shared across versions
    }
}

std::vector<double> parse_heights_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    if (out.empty()) throw ph::DomainError("empty heights list");
    return out;
}

void emit(const ph::Json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(1) << "\n";
    } else {
        std::ofstream out(out_path);
        out << j.dump(1) << "\n";
    }
}

int run_selftest(const Config& cfg);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"critical heights toolkit for one-variable complex polynomial dynamics"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    Config cfg;
    std::string config_path;
    app.add_option("--config", config_path, "key=value config file (flags win)");
    app.add_option("--workers", cfg.workers, "worker thread count");
    app.add_option("--cache", cfg.cache_dir, "census cache directory");
    app.add_option("--tol", cfg.tol, "escape-rate tolerance");
    app.add_option("--maxiter", cfg.maxiter, "escape iteration budget");
    app.add_option("--seed", cfg.seed, "rng seed for randomized subcommands");

    // heights
    auto* cmd_heights = app.add_subcommand("heights", "critical heights of a polynomial");
    std::string poly_path, out_path;
    cmd_heights->add_option("--poly", poly_path, "polynomial JSON file")->required();
    cmd_heights->add_option("--out", out_path, "output file (default stdout)");

    // green
    auto* cmd_green = app.add_subcommand("green", "escape rate at a point");
    std::string green_poly, green_z;
    cmd_green->add_option("--poly", green_poly)->required();
    cmd_green->add_option("--z", green_z, "point as re,im")->required();

    // ray
    auto* cmd_ray = app.add_subcommand("ray", "trace an external ray (CSV)");
    std::string ray_poly, ray_out;
    double ray_angle = 0, ray_from = 0, ray_to = 0;
    int ray_steps = 64;
    cmd_ray->add_option("--poly", ray_poly)->required();
    cmd_ray->add_option("--angle", ray_angle)->required();
    cmd_ray->add_option("--from", ray_from)->required();
    cmd_ray->add_option("--to", ray_to)->required();
    cmd_ray->add_option("--steps", ray_steps);
    cmd_ray->add_option("--out", ray_out);

    // phin
    auto* cmd_phin = app.add_subcommand("phin", "coordinate map Phi_n of the marked shift locus");
    std::string phin_poly, phin_out;
    int phin_n = 1;
    cmd_phin->add_option("--poly", phin_poly)->required();
    cmd_phin->add_option("--n", phin_n)->required();
    cmd_phin->add_option("--out", phin_out);

    // tree
    auto* cmd_tree = app.add_subcommand("tree", "truncated polynomial tree");
    std::string tree_poly, tree_out, tree_dot;
    double tree_floor = 0;
    int tree_res = 0;
    cmd_tree->add_option("--poly", tree_poly)->required();
    cmd_tree->add_option("--floor", tree_floor, "truncation floor")->required();
    cmd_tree->add_option("--res", tree_res, "grid resolution (cells per side)");
    cmd_tree->add_option("--out", tree_out);
    cmd_tree->add_option("--dot", tree_dot, "also write a Graphviz file");

    // strata
    auto* cmd_strata = app.add_subcommand("strata", "independence classes and subannuli of a heights vector");
    std::string strata_heights, strata_out;
    int strata_d = 0;
    cmd_strata->add_option("--heights", strata_heights, "comma-separated heights")->required();
    cmd_strata->add_option("--d", strata_d, "degree")->required();
    cmd_strata->add_option("--out", strata_out);

    // complex
    auto* cmd_complex = app.add_subcommand("complex", "simplicial complex of projectivized heights");
    int cx_d = 0, cx_depth = 1;
    std::string cx_out;
    cmd_complex->add_option("--d", cx_d)->required();
    cmd_complex->add_option("--depth", cx_depth)->required();
    cmd_complex->add_option("--out", cx_out);

    // census
    auto* cmd_census = app.add_subcommand("census", "numerical fiber census of the heights map");
    std::string census_heights, census_seeds, census_out, census_in;
    int census_d = 0, census_n = 0, census_grid = 0;
    bool census_no_cache = false, census_no_trees = false;
    double compare_eps = 1e-4;
    cmd_census->add_option("--d", census_d);
    cmd_census->add_option("--heights", census_heights);
    cmd_census->add_option("--n", census_n);
    cmd_census->add_option("--grid", census_grid);
    cmd_census->add_option("--seeds", census_seeds, "JSON array of polynomial seeds");
    cmd_census->add_option("--out", census_out);
    cmd_census->add_flag("--no-cache", census_no_cache);
    cmd_census->add_flag("--no-trees", census_no_trees);
    auto* cmd_compare = cmd_census->add_subcommand("compare",
                                                   "count components vs tree classes of a census");
    cmd_compare->add_option("--in", census_in)->required();
    cmd_compare->add_option("--eps", compare_eps);

    // selftest
    app.add_subcommand("selftest", "run the built-in invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2, --help exits 0
    }

    try {
        if (!config_path.empty()) {
            Config file_cfg;
            load_config_file(config_path, file_cfg);
            // flags win: only take file values the user did not override
            if (app.count("--workers") == 0) cfg.workers = file_cfg.workers;
            if (app.count("--cache") == 0) cfg.cache_dir = file_cfg.cache_dir;
            if (app.count("--tol") == 0) cfg.tol = file_cfg.tol;
            if (app.count("--maxiter") == 0) cfg.maxiter = file_cfg.maxiter;
            if (app.count("--seed") == 0) cfg.seed = file_cfg.seed;
            if (!cmd_tree->count("--res")) cfg.grid_res = file_cfg.grid_res;
            if (!cmd_census->count("--grid")) cfg.angle_grid = file_cfg.angle_grid;
        }

        if (cmd_heights->parsed()) {
            const auto f = ph::load_polynomial(poly_path);
            const auto budget = ph::standard_budget(f, cfg.tol, cfg.maxiter);
            emit(ph::to_json(ph::heights(f, budget)), out_path);
        } else if (cmd_green->parsed()) {
            const auto f = ph::load_polynomial(green_poly);
            const auto parts = parse_heights_list(green_z);
            if (parts.size() != 2) throw ph::DomainError("--z expects re,im");
            const auto ev = ph::green(f, ph::Complex{parts[0], parts[1]},
                                      ph::standard_budget(f, cfg.tol, cfg.maxiter));
            ph::Json j{{"value", ev.value},
                       {"iterations", ev.iterations_used},
                       {"error_bound", ev.error_bound},
                       {"escaped", ev.escaped}};
            emit(j, "");
        } else if (cmd_ray->parsed()) {
            const auto f = ph::load_polynomial(ray_poly);
            const auto trace = ph::trace_ray(f, ray_angle, ray_from, ray_to, ray_steps);
            std::ostringstream csv;
            csv << "h,angle,re,im\n";
            for (const auto& p : trace.points)
                csv << p.height << "," << p.angle << "," << p.z.real() << "," << p.z.imag()
                    << "\n";
            if (trace.obstructed)
                std::cerr << "ray obstructed at height " << trace.failure_height << "\n";
            if (ray_out.empty())
                std::cout << csv.str();
            else
                std::ofstream(ray_out) << csv.str();
            return trace.obstructed ? 1 : 0;
        } else if (cmd_phin->parsed()) {
            const auto f = ph::load_polynomial(phin_poly);
            emit(ph::to_json(ph::phi_n_map(f, phin_n, ph::standard_budget(f, cfg.tol, cfg.maxiter))),
                 phin_out);
        } else if (cmd_tree->parsed()) {
            const auto f = ph::load_polynomial(tree_poly);
            ph::GridSpec grid;
            grid.resolution = tree_res > 0 ? tree_res : cfg.grid_res;
            grid.workers = cfg.workers;
            const auto t = ph::build_tree(f, tree_floor, grid);
            emit(ph::to_json(t), tree_out);
            if (!tree_dot.empty()) std::ofstream(tree_dot) << ph::tree_to_dot(t);
            if (!t.stable) std::cerr << "warning: combinatorics unstable at the refinement limit\n";
        } else if (cmd_strata->parsed()) {
            ph::HeightsVector h;
            h.d = strata_d;
            h.heights = parse_heights_list(strata_heights);
            std::sort(h.heights.begin(), h.heights.end(), std::greater<>());
            const auto part = ph::independence_classes(h);
            const auto dec = ph::subannuli(h);
            ph::Json j;
            j["d"] = h.d;
            j["heights"] = h.heights;
            j["N"] = part.N;
            j["classes"] = part.classes;
            j["subannuli"] = ph::to_json(dec);
            if (std::abs(h.M() - 1.0) <= 1e-12) j["simplex_coords"] = ph::simplex_coords(dec);
            emit(j, strata_out);
        } else if (cmd_complex->parsed()) {
            emit(ph::to_json(ph::build_height_complex(cx_d, cx_depth)), cx_out);
        } else if (cmd_compare->parsed()) {
            std::ifstream in(census_in);
            if (!in) throw ph::DomainError("cannot open census file: " + census_in);
            ph::Json j;
            in >> j;
            const auto census = ph::census_from_json(j);
            const auto [tstar, t] = ph::compare_projections(census, compare_eps);
            emit(ph::Json{{"count_Tstar", tstar}, {"count_T", t}}, "");
        } else if (cmd_census->parsed()) {
            if (census_d < 2 || census_heights.empty() || census_n < 1)
                throw CLI::ValidationError("census", "census requires --d, --heights and --n");
            ph::HeightsVector target;
            target.d = census_d;
            target.heights = parse_heights_list(census_heights);
            std::sort(target.heights.begin(), target.heights.end(), std::greater<>());
            const int grid = census_grid > 0 ? census_grid : cfg.angle_grid;

            ph::CensusStore store(cfg.resolve_cache_dir());
            const std::string key = ph::CensusStore::key(census_d, target, census_n, grid);
            if (!census_no_cache) {
                if (auto cached = store.load(key)) {
                    std::cerr << "census: reusing cached run " << key << "\n";
                    emit(ph::to_json(*cached), census_out);
                    return 0;
                }
            }
            std::vector<ph::MarkedPolynomial> seeds;
            if (!census_seeds.empty()) {
                std::ifstream in(census_seeds);
                if (!in) throw ph::DomainError("cannot open seeds file: " + census_seeds);
                ph::Json j;
                in >> j;
                for (const auto& sj : j) seeds.push_back(ph::polynomial_from_json(sj));
            }
            ph::CensusOptions opts;
            opts.workers = cfg.workers;
            opts.with_trees = !census_no_trees;
            const auto census = ph::fiber_census(census_d, target, census_n, grid, seeds, opts);
            if (!census_no_cache) store.save(key, census);
            emit(ph::to_json(census), census_out);
            if (!census.unsolved_cells.empty())
                std::cerr << "census: " << census.unsolved_cells.size()
                          << " angle cells unsolved (coverage gaps)\n";
        } else if (app.get_subcommand("selftest")->parsed()) {
            return run_selftest(cfg);
        }
    } catch (const ph::DomainError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}

namespace {

int run_selftest(const Config& cfg) {
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "\n";
        if (!ok) ++failures;
    };
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    // moduli matrix determinant and sum identity
    {
        bool det_ok = true;
        for (int d = 2; d <= 12 && det_ok; ++d)
            for (int N = 2; N <= 8 && det_ok; ++N) {
                const auto K = ph::moduli_matrix(N, d);
                const long long expect = (N % 2 == 1 ? 1 : -1) * (d - 1);
                det_ok = ph::detail::integer_determinant(K) == expect;
            }
        check("moduli matrix determinant", det_ok);

        bool sum_ok = true;
        for (int trial = 0; trial < 200 && sum_ok; ++trial) {
            const int d = 3 + static_cast<int>(rng() % 4);
            ph::HeightsVector h;
            h.d = d;
            for (int i = 0; i < d - 1; ++i) h.heights.push_back(0.1 + 0.9 * std::abs(unit(rng)));
            std::sort(h.heights.begin(), h.heights.end(), std::greater<>());
            const auto dec = ph::subannuli(h);
            double sum = 0;
            for (double m : dec.moduli) sum += m;
            sum_ok = std::abs(sum - (d - 1) * h.M() / (2 * std::numbers::pi)) <= 1e-12 * (d - 1) * h.M();
        }
        check("subannuli moduli sum", sum_ok);
    }

    // functional equation of the escape rate
    {
        bool ok = true;
        for (int trial = 0; trial < 200 && ok; ++trial) {
            const int d = 2 + static_cast<int>(rng() % 3);
            std::vector<ph::Complex> c;
            ph::Complex sum{0, 0};
            for (int i = 0; i + 1 < d - 1; ++i) {
                c.emplace_back(unit(rng), unit(rng));
                sum += c.back();
            }
            c.push_back(-sum);
            const auto f = ph::from_critical_data(c, ph::Complex{2 * unit(rng), 2 * unit(rng)});
            const auto budget = ph::standard_budget(f, 1e-12);
            const double r = ph::escape_radius(f);
            const ph::Complex z{r * (1.1 + std::abs(unit(rng))), r * unit(rng)};
            const auto gz = ph::green(f, z, budget);
            const auto gfz = ph::green(f, ph::evaluate(f, z), budget);
            ok = std::abs(gfz.value - d * gz.value) <= 1e-9;
        }
        check("escape rate functional equation", ok);
    }

    // Boettcher conjugacy on shift-locus quadratics
    {
        bool ok = true;
        for (int trial = 0; trial < 40 && ok; ++trial) {
            const auto f = ph::from_critical_data({ph::Complex{0, 0}},
                                                  ph::Complex{3 + std::abs(unit(rng)), unit(rng)});
            const double r = ph::escape_radius(f);
            const auto bv = ph::boettcher(f, ph::Complex{1.5 * r, 0.3 * r});
            ok = bv.modulus_check <= 1e-9 && bv.conjugacy_defect <= 1e-8;
        }
        check("Boettcher conjugacy", ok);
    }

    // degree-3 heights complex is a path
    {
        const auto complex = ph::build_height_complex(3, 5);
        check("degree-3 complex path", complex.cell_count(0) == 6 && complex.cell_count(1) == 5);
    }

    // Phi_n round trip
    {
        const auto f = ph::from_critical_data({ph::Complex{0, 0}}, ph::Complex{50, 20});
        const auto budget = ph::standard_budget(f, 1e-12);
        const auto img = ph::phi_n_map(f, 1, budget);
        const auto inv = ph::invert_phi_n(2, 1, img, f, 1e-11, budget);
        check("Phi_n Newton round trip",
              inv.converged && std::abs(inv.poly.translation - f.translation) < 1e-9);
    }

    std::cout << (failures == 0 ? "selftest clean" : "selftest FAILED") << "\n";
    return failures == 0 ? 0 : 1;
}

}  // namespace
