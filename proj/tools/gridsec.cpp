// gridsec command-line front end: inspect, solve, sweep, uncertainty.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridsec/gridsec.hpp"

using namespace gridsec;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kCapacity = 2, kIo = 3 };

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string join_levels(const std::vector<int>& levels) {
    std::string s;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (i) s += ';';
        s += std::to_string(levels[i]);
    }
    return s;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

/// Writes to --out if given, stdout otherwise.
void emit(const std::string& text, const std::string& out) {
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("cannot open output file '" + out + "'");
    f << text;
    if (!f) throw IoError("failed writing '" + out + "'");
}

/// Parses "start:step:stop", a comma list, or a single value.
std::vector<double> parse_axis(const std::string& spec, const std::string& flag) {
    auto number = [&](const std::string& tok) {
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("grid_spec", flag + ": cannot parse '" + tok + "'");
        }
    };
    std::vector<double> out;
    if (spec.empty()) return out;
    if (spec.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(spec);
        for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
        if (parts.size() != 3) throw ValidationError("grid_spec", flag + ": expected start:step:stop");
        const double start = number(parts[0]), step = number(parts[1]), stop = number(parts[2]);
        if (step <= 0.0) throw ValidationError("grid_spec", flag + ": step must be positive");
        if (stop < start) return out;
        const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
        for (long i = 0; i < n; ++i)
            out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
        return out;
    }
    std::stringstream ss(spec);
    for (std::string tok; std::getline(ss, tok, ',');) out.push_back(number(tok));
    return out;
}

struct Options {
    std::string case_path;
    std::string method = "cbbi";
    double gamma_a = 0.0;
    double gamma_d = 0.0;
    std::optional<double> gamma_a_est;
    std::vector<int> levels{3, 3};
    std::uint64_t seed = 42;
    int jobs = 1;
    std::vector<int> ga_pop{30, 20};
    double ga_pc = 0.85;
    double ga_pm = 0.05;
    int ga_gens = 30;
    std::int64_t mc_samples = 100000;
    std::string out;
    std::string trace;
    std::string rd_engine = "traversal";
    bool clip_at_model_nominal = false;

    GameConfig config(double ga, double gd) const {
        GameConfig cfg;
        cfg.gamma_a = ga;
        cfg.gamma_d = gd;
        cfg.levels_a = levels.at(0);
        cfg.levels_d = levels.at(1);
        cfg.mc_samples = mc_samples;
        cfg.seed = seed;
        cfg.clip_at_model_nominal = clip_at_model_nominal;
        cfg.validate();
        return cfg;
    }

    GAParams ga() const {
        GAParams p;
        p.S_a = ga_pop.at(0);
        p.S_d = ga_pop.at(1);
        p.P_c = ga_pc;
        p.P_m = ga_pm;
        p.T = ga_gens;
        p.seed = seed;
        p.validate();
        return p;
    }

    RdEngine engine() const {
        if (rd_engine == "traversal") return RdEngine::traversal();
        if (rd_engine == "bpega") return RdEngine::bpega(ga());
        throw ValidationError("method", "--rd-engine must be traversal or bpega");
    }
};

void add_game_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--levels", o.levels, "Investment levels La Ld")->expected(2);
    cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    cmd->add_option("--mc-samples", o.mc_samples, "Monte Carlo samples per utility")->capture_default_str();
    cmd->add_option("--ga-pop", o.ga_pop, "GA population sizes Sa Sd")->expected(2);
    cmd->add_option("--ga-pc", o.ga_pc, "GA crossover probability")->capture_default_str();
    cmd->add_option("--ga-pm", o.ga_pm, "GA mutation rate")->capture_default_str();
    cmd->add_option("--ga-gens", o.ga_gens, "GA generation limit")->capture_default_str();
    cmd->add_option("--rd-engine", o.rd_engine, "Search engine for rd: traversal or bpega")
        ->capture_default_str();
    cmd->add_option("--out", o.out, "Output file (default stdout)");
}

// ---------------------------------------------------------------- inspect

int cmd_inspect(const Options& o) {
    const GridCase grid = load_case(o.case_path);
    const StiffnessModel model = build_stiffness(grid);
    std::ostringstream s;
    s << "case            " << grid.name << "\n";
    if (!grid.provenance.empty()) s << "provenance      " << grid.provenance << "\n";
    s << "loads (K)       " << grid.n_loads << "\n";
    s << "generators (G)  " << grid.n_gens << "\n";
    s << "controlled (N)  " << grid.ctrl_buses.size() << "\n";
    s << "ctrl_buses      {";
    const auto ids = grid.ctrl_bus_ids();
    for (std::size_t i = 0; i < ids.size(); ++i) s << (i ? "," : "") << ids[i];
    s << "}\n";
    s << "delta_nominal   " << fmt(model.nominal_index()) << "\n";
    s << "cond(B_LL)      " << fmt(model.b_ll_condition()) << "\n";
    s << "cond(Q_crit)    " << fmt(model.q_crit_condition()) << "\n";
    emit(s.str(), o.out);
    return kOk;
}

// ---------------------------------------------------------------- solve

void write_trace(const EquilibriumResult& r, const std::string& path) {
    std::ostringstream s;
    s << "generation,best_fit_a,best_fit_d,u_attacker_of_incumbent\n";
    for (const auto& t : r.trace)
        s << t.generation << ',' << fmt(t.best_fit_a) << ',' << fmt(t.best_fit_d) << ','
          << fmt(t.u_attacker_incumbent) << '\n';
    emit(s.str(), path);
}

int cmd_solve(const Options& o) {
    const Method method = parse_method(o.method);
    if (method == Method::rd && !o.gamma_a_est)
        throw ValidationError("flags", "solve rd requires --gamma-a-est");
    const GridCase grid = load_case(o.case_path);
    const GameConfig cfg = o.config(o.gamma_a, o.gamma_d);
    const Evaluator eval(grid, build_stiffness(grid), cfg);

    EquilibriumResult r;
    std::optional<EquilibriumResult> reference;
    switch (method) {
        case Method::cbbi: r = solve_cbse(eval, o.jobs); break;
        case Method::bpega: r = run_bpega(eval, o.ga()); break;
        case Method::rd: {
            const RdEngine engine = o.engine();
            r = solve_rd(eval, *o.gamma_a_est, engine, o.jobs);
            reference = engine.ga ? run_bpega(eval, *engine.ga) : solve_cbse(eval, o.jobs);
            break;
        }
    }
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";

    nlohmann::json j = to_json(r, grid, cfg);
    if (reference) {
        j["metadata"]["cbse_u_defender"] = reference->u_defender;
        j["metadata"]["mu_rd"] = rd_mismatch(r, *reference);
        const auto ratio = overpayment_ratio(r, *reference);
        j["metadata"]["overpayment"] = ratio ? nlohmann::json(*ratio) : nlohmann::json(nullptr);
        j["metadata"]["rd_engine"] = o.rd_engine;
    }
    emit(j.dump(2) + "\n", o.out);
    if (!o.trace.empty()) write_trace(r, o.trace);
    return kOk;
}

// ---------------------------------------------------------------- sweep

struct SweepPoint {
    double gamma_a = 0.0;
    double gamma_d = 0.0;
    std::optional<double> gamma_a_est;
};

struct SweepRow {
    std::optional<EquilibriumResult> result;
    std::optional<double> mu_rd;
    std::optional<double> overpayment;
    std::string error;
};

/// Runs `work` over indices [0, n) on up to `jobs` threads. Each index writes
/// only its own slot, so the output order is the index order.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& work) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) work(i);
        });
    for (auto& t : pool) t.join();
}

template <typename F>
void record(SweepRow& row, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        row.result.reset();
        row.mu_rd.reset();
        row.overpayment.reset();
        row.error = e.what();
    }
}

int cmd_sweep(const Options& o, const std::string& spec_a, const std::string& spec_d,
              const std::string& spec_est) {
    const Method method = parse_method(o.method);
    const auto axis_a = parse_axis(spec_a, "--gamma-a");
    const auto axis_d = parse_axis(spec_d, "--gamma-d");
    const auto axis_est = parse_axis(spec_est, "--gamma-a-est");
    if (method == Method::rd && spec_est.empty())
        throw ValidationError("flags", "sweep rd requires --gamma-a-est");

    std::vector<SweepPoint> points;
    for (double ga : axis_a)
        for (double gd : axis_d) {
            if (method != Method::rd) {
                points.push_back({ga, gd, std::nullopt});
                continue;
            }
            for (double ge : axis_est) points.push_back({ga, gd, ge});
        }

    const GridCase grid = load_case(o.case_path);
    const StiffnessModel model = build_stiffness(grid);
    const GameConfig base = o.config(0.0, 0.0);
    std::vector<SweepRow> rows(points.size());

    // Exhaustive methods share one payoff table across the grid when the
    // unconstrained lattices fit under the cap.
    std::optional<CbbiSolver> table;
    const bool traversal = method == Method::cbbi || (method == Method::rd && o.rd_engine == "traversal");
    if (traversal && !points.empty()) {
        try {
            table.emplace(CbbiSolver::full_lattice(Evaluator(grid, model, base), o.jobs));
        } catch (const CapacityError&) {
        }
    }

    parallel_for(points.size(), o.jobs, [&](std::size_t i) {
        const SweepPoint& p = points[i];
        SweepRow& row = rows[i];
        record(row, [&] {
            const GameConfig cfg = o.config(p.gamma_a, p.gamma_d);
            const double dn = model.nominal_index();
            if (method == Method::cbbi) {
                row.result = table ? table->result(table->solve(p.gamma_a, p.gamma_d), p.gamma_a,
                                                   p.gamma_d, dn)
                                   : solve_cbse(Evaluator(grid, model, cfg));
            } else if (method == Method::bpega) {
                row.result = run_bpega(Evaluator(grid, model, cfg), o.ga());
            } else if (table) {
                row.result = rd_result(*table, table->solve_rd(p.gamma_a, p.gamma_d, *p.gamma_a_est),
                                       p.gamma_a, p.gamma_d, *p.gamma_a_est, dn);
                const EquilibriumResult ref = table->result(table->solve(p.gamma_a, p.gamma_d), p.gamma_a,
                                                            p.gamma_d, dn);
                row.mu_rd = rd_mismatch(*row.result, ref);
                row.overpayment = overpayment_ratio(*row.result, ref);
            } else {
                const Evaluator eval(grid, model, cfg);
                const RdEngine engine = o.engine();
                row.result = solve_rd(eval, *p.gamma_a_est, engine);
                const EquilibriumResult ref = engine.ga ? run_bpega(eval, *engine.ga) : solve_cbse(eval);
                row.mu_rd = rd_mismatch(*row.result, ref);
                row.overpayment = overpayment_ratio(*row.result, ref);
            }
        });
    });

    std::ostringstream s;
    s << "gamma_a,gamma_d,gamma_a_est,u_attacker,u_defender,cost_a,cost_d,a_vector,d_vector,method,seed";
    if (method == Method::rd) s << ",mu_rd,overpayment";
    s << ",error\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        const SweepPoint& p = points[i];
        const SweepRow& row = rows[i];
        s << fmt(p.gamma_a) << ',' << fmt(p.gamma_d) << ','
          << (p.gamma_a_est ? fmt(*p.gamma_a_est) : "") << ',';
        if (row.result) {
            const EquilibriumResult& r = *row.result;
            s << fmt(r.u_attacker) << ',' << fmt(r.u_defender) << ',' << fmt(r.cost_a) << ','
              << fmt(r.cost_d) << ',' << join_levels(r.attack.levels()) << ','
              << join_levels(r.defense.levels()) << ',';
        } else {
            s << ",,,,,,";
        }
        s << to_string(method) << ',' << o.seed;
        if (method == Method::rd)
            s << ',' << (row.mu_rd ? fmt(*row.mu_rd) : "") << ',' << (row.overpayment ? fmt(*row.overpayment) : "");
        s << ',' << csv_quote(row.error) << '\n';
        for (const auto& w : row.result ? row.result->warnings : std::vector<std::string>{})
            std::cerr << "warning: " << w << "\n";
    }
    emit(s.str(), o.out);
    return kOk;
}

// ---------------------------------------------------------------- uncertainty

nlohmann::json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("parse", path + ": " + e.what());
    }
}

int cmd_uncertainty(const Options& o, const std::vector<std::string>& equilibria, double sigma,
                    int M) {
    const GridCase grid = load_case(o.case_path);
    const StiffnessModel model = build_stiffness(grid);
    const UncertainModelSet set = generate_models(grid, model, sigma, M, o.seed);
    for (std::size_t i = 0; i < set.redraws.size(); ++i)
        if (set.redraws[i] > 0)
            std::cerr << "note: model " << i << " redrawn " << set.redraws[i]
                      << " time(s) to keep its nominal index below 1\n";

    std::ostringstream s;
    s << "gamma_a,gamma_d,model,mu_percent,min,q1,median,q3,max,mean,clip\n";
    const char* clip = o.clip_at_model_nominal ? "model" : "nominal";
    for (const auto& path : equilibria) {
        const LoadedEquilibrium eq = equilibrium_from_json(read_json(path), grid);
        GameConfig cfg = eq.config;
        cfg.clip_at_model_nominal = o.clip_at_model_nominal;
        cfg.validate();
        const auto mu = utility_mismatch(set, grid, model, cfg, eq.result);
        const std::string pair = fmt(eq.result.gamma_a) + ',' + fmt(eq.result.gamma_d) + ',';
        for (std::size_t i = 0; i < mu.size(); ++i)
            s << pair << i << ',' << fmt(mu[i]) << ",,,,,,," << clip << '\n';
        const SummaryStats st = summary_stats(mu);
        s << pair << "summary,," << fmt(st.min) << ',' << fmt(st.q1) << ',' << fmt(st.median) << ','
          << fmt(st.q3) << ',' << fmt(st.max) << ',' << fmt(st.mean) << ',' << clip << '\n';
    }
    emit(s.str(), o.out);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Security-investment games on power grids under covert reactive-load attacks"};
    app.require_subcommand(1);
    Options o;

    auto* inspect = app.add_subcommand("inspect", "Summarize a case file");
    inspect->add_option("case", o.case_path, "Case JSON")->required();
    inspect->add_option("--out", o.out, "Output file (default stdout)");

    auto* solve = app.add_subcommand("solve", "Solve one cost pair");
    solve->add_option("case", o.case_path, "Case JSON")->required();
    solve->add_option("method,--method", o.method, "cbbi, bpega or rd")->capture_default_str();
    solve->add_option("--gamma-a", o.gamma_a, "Attacker cost per load")->capture_default_str();
    solve->add_option("--gamma-d", o.gamma_d, "Defender cost per load")->capture_default_str();
    solve->add_option("--gamma-a-est", o.gamma_a_est, "Defender's lower bound on gamma_a (rd)");
    solve->add_option("--jobs", o.jobs, "Worker threads")->capture_default_str();
    solve->add_option("--trace", o.trace, "Write the GA convergence trace to this CSV");
    add_game_flags(solve, o);

    std::string spec_a = "0:0.075:1.5", spec_d = "0:0.075:1.5", spec_est;
    auto* sweep = app.add_subcommand("sweep", "Solve every point of a cost grid, one CSV row each");
    sweep->add_option("case", o.case_path, "Case JSON")->required();
    sweep->add_option("method,--method", o.method, "cbbi, bpega or rd")->capture_default_str();
    sweep->add_option("--gamma-a", spec_a, "start:step:stop, comma list or value")->capture_default_str();
    sweep->add_option("--gamma-d", spec_d, "start:step:stop, comma list or value")->capture_default_str();
    sweep->add_option("--gamma-a-est", spec_est, "start:step:stop, comma list or value (rd)");
    sweep->add_option("--jobs", o.jobs, "Concurrent grid points")->capture_default_str();
    add_game_flags(sweep, o);

    std::vector<std::string> equilibria;
    double sigma = 0.1;
    int M = 20;
    auto* unc = app.add_subcommand("uncertainty", "Utility mismatch of fixed equilibria under load noise");
    unc->add_option("case", o.case_path, "Case JSON")->required();
    unc->add_option("equilibrium", equilibria, "Equilibrium JSON files from solve")->required();
    unc->add_option("--sigma", sigma, "Relative load noise std")->capture_default_str();
    unc->add_option("--models", M, "Number of uncertain models")->capture_default_str();
    unc->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    unc->add_flag("--clip-at-model-nominal", o.clip_at_model_nominal,
                  "Clip each model at its own nominal index");
    unc->add_option("--out", o.out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    try {
        if (*inspect) return cmd_inspect(o);
        if (*solve) return cmd_solve(o);
        if (*sweep) return cmd_sweep(o, spec_a, spec_d, spec_est);
        if (*unc) return cmd_uncertainty(o, equilibria, sigma, M);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const CapacityError& e) {
        std::cerr << "error [capacity]: " << e.what() << "\n";
        return kCapacity;
    } catch (const IoError& e) {
        std::cerr << "error [io]: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kOk;
}
