#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridsec/errors.hpp"
#include "gridsec/game_core.hpp"

namespace gridsec {

enum class Method { cbbi, bpega, rd };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::cbbi: return "cbbi";
        case Method::bpega: return "bpega";
        case Method::rd: return "rd";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "cbbi") return Method::cbbi;
    if (s == "bpega") return Method::bpega;
    if (s == "rd") return Method::rd;
    throw ValidationError("method", "unknown method '" + s + "' (expected cbbi, bpega or rd)");
}

/// One row of the co-evolution trace.
struct TracePoint {
    int generation = 0;
    double best_fit_a = 0.0;
    double best_fit_d = 0.0;
    /// Attacker utility of the leading defender against its in-population best response.
    double u_attacker_incumbent = 0.0;
};

struct EquilibriumResult {
    AttackAction attack;
    DefenseAction defense;
    double u_attacker = 0.0;
    double u_defender = 0.0;
    double cost_a = 0.0;  // gamma_a * ||a||_1
    double cost_d = 0.0;  // gamma_d * ||d||_1
    Method method = Method::cbbi;

    double gamma_a = 0.0;
    double gamma_d = 0.0;
    double delta_nominal = 0.0;

    // Robust defense only.
    std::optional<double> gamma_a_est;
    std::optional<double> estimated_u_defender;

    // Evolutionary solver only.
    std::optional<int> generations;
    std::optional<std::uint64_t> seed;
    std::vector<TracePoint> trace;

    std::size_t utility_evaluations = 0;
    std::vector<std::string> warnings;
};

inline void finalize_costs(EquilibriumResult& r) {
    r.cost_a = r.gamma_a * r.attack.norm1();
    r.cost_d = r.gamma_d * r.defense.norm1();
}

/// Serialized form: strategy vectors as integer level indices plus level count.
inline nlohmann::json to_json(const EquilibriumResult& r, const GridCase& grid,
                              const GameConfig& cfg) {
    nlohmann::json j;
    j["case"] = {{"name", grid.name},
                 {"n_loads", grid.n_loads},
                 {"ctrl_buses", grid.ctrl_bus_ids()},
                 {"delta_nominal", r.delta_nominal}};
    j["method"] = to_string(r.method);
    j["gamma_a"] = r.gamma_a;
    j["gamma_d"] = r.gamma_d;
    j["attack"] = {{"levels", r.attack.levels()}, {"level_count", r.attack.level_count()}};
    j["defense"] = {{"levels", r.defense.levels()}, {"level_count", r.defense.level_count()}};
    j["u_attacker"] = r.u_attacker;
    j["u_defender"] = r.u_defender;
    j["cost_a"] = r.cost_a;
    j["cost_d"] = r.cost_d;
    j["config"] = {{"mc_support_threshold", cfg.mc_support_threshold},
                   {"mc_samples", cfg.mc_samples},
                   {"seed", cfg.seed}};
    nlohmann::json meta = nlohmann::json::object();
    if (r.gamma_a_est) meta["gamma_a_est"] = *r.gamma_a_est;
    if (r.estimated_u_defender) meta["estimated_u_defender"] = *r.estimated_u_defender;
    if (r.generations) meta["generations"] = *r.generations;
    if (r.seed) meta["seed"] = *r.seed;
    meta["utility_evaluations"] = r.utility_evaluations;
    if (!r.warnings.empty()) meta["warnings"] = r.warnings;
    j["metadata"] = meta;
    return j;
}

struct LoadedEquilibrium {
    EquilibriumResult result;
    GameConfig config;
    std::string case_name;
};

/// Parses a result file and checks it against the grid it claims to describe.
inline LoadedEquilibrium equilibrium_from_json(const nlohmann::json& j, const GridCase& grid) {
    LoadedEquilibrium out;
    try {
        const auto& c = j.at("case");
        out.case_name = c.at("name").get<std::string>();
        if (c.at("n_loads").get<int>() != grid.n_loads ||
            c.at("ctrl_buses").get<std::vector<int>>() != grid.ctrl_bus_ids() ||
            (!out.case_name.empty() && !grid.name.empty() && out.case_name != grid.name))
            throw ValidationError("case_mismatch",
                                  "equilibrium was computed for case '" + out.case_name +
                                      "', not '" + grid.name + "'");
        EquilibriumResult& r = out.result;
        r.method = parse_method(j.at("method").get<std::string>());
        r.gamma_a = j.at("gamma_a").get<double>();
        r.gamma_d = j.at("gamma_d").get<double>();
        r.attack = AttackAction(j.at("attack").at("levels").get<std::vector<int>>(),
                                j.at("attack").at("level_count").get<int>());
        r.defense = DefenseAction(j.at("defense").at("levels").get<std::vector<int>>(),
                                  j.at("defense").at("level_count").get<int>());
        if (r.attack.size() != grid.n_loads || r.defense.size() != grid.n_loads)
            throw ValidationError("case_mismatch", "strategy length differs from n_loads");
        for (int k = 0; k < grid.n_loads; ++k)
            if (r.defense[k] != 0 && !grid.is_controllable(k))
                throw ValidationError("case_mismatch", "defense invests off the control set");
        r.u_attacker = j.at("u_attacker").get<double>();
        r.u_defender = j.at("u_defender").get<double>();
        r.cost_a = j.at("cost_a").get<double>();
        r.cost_d = j.at("cost_d").get<double>();
        r.delta_nominal = c.at("delta_nominal").get<double>();
        const auto& meta = j.at("metadata");
        if (meta.contains("gamma_a_est")) r.gamma_a_est = meta["gamma_a_est"].get<double>();
        if (meta.contains("estimated_u_defender"))
            r.estimated_u_defender = meta["estimated_u_defender"].get<double>();
        if (meta.contains("generations")) r.generations = meta["generations"].get<int>();
        if (meta.contains("seed")) r.seed = meta["seed"].get<std::uint64_t>();

        GameConfig& cfg = out.config;
        cfg.gamma_a = r.gamma_a;
        cfg.gamma_d = r.gamma_d;
        cfg.levels_a = r.attack.level_count();
        cfg.levels_d = r.defense.level_count();
        if (j.contains("config")) {
            const auto& jc = j.at("config");
            cfg.mc_support_threshold = jc.value("mc_support_threshold", cfg.mc_support_threshold);
            cfg.mc_samples = jc.value("mc_samples", cfg.mc_samples);
            cfg.seed = jc.value("seed", cfg.seed);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("parse", std::string("equilibrium file: ") + e.what());
    }
    return out;
}

}  // namespace gridsec
