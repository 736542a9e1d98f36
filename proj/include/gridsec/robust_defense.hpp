#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "gridsec/bpega_solver.hpp"
#include "gridsec/cbbi_solver.hpp"
#include "gridsec/equilibrium.hpp"

namespace gridsec {

/// Search engine for the robust-defense method. Without GA parameters the
/// action spaces are traversed exhaustively.
struct RdEngine {
    std::optional<GAParams> ga;

    static RdEngine traversal() { return {}; }
    static RdEngine bpega(GAParams p) { return {p}; }
};

inline std::optional<std::string> rd_estimate_warning(double gamma_a, double gamma_a_est) {
    if (gamma_a_est <= gamma_a) return std::nullopt;
    return "gamma_a_est (" + std::to_string(gamma_a_est) + ") exceeds gamma_a (" +
           std::to_string(gamma_a) + "); the robust-defense guarantee does not hold";
}

/// Packs a robust-defense choice from a tabulated solver.
inline EquilibriumResult rd_result(const CbbiSolver& solver, const RdChoice& c, double gamma_a,
                                   double gamma_d, double gamma_a_est, double delta_nominal) {
    EquilibriumResult r;
    r.attack = solver.attacks()[c.attack];
    r.defense = solver.defenses()[c.defense];
    r.u_attacker = c.u_attacker;
    r.u_defender = -c.u_attacker;
    r.method = Method::rd;
    r.gamma_a = gamma_a;
    r.gamma_d = gamma_d;
    r.gamma_a_est = gamma_a_est;
    r.estimated_u_defender = -c.estimated_u_attacker;
    r.delta_nominal = delta_nominal;
    r.utility_evaluations = solver.evaluations();
    if (auto w = rd_estimate_warning(gamma_a, gamma_a_est)) r.warnings.push_back(*w);
    finalize_costs(r);
    return r;
}

/// The defender plans its investment against an attacker whose per-load cost
/// is gamma_a_est; the attacker then answers with its true cost cfg.gamma_a.
inline EquilibriumResult solve_rd(const Evaluator& eval, double gamma_a_est,
                                  const RdEngine& engine = RdEngine::traversal(), int jobs = 1) {
    const GridCase& grid = eval.grid();
    const GameConfig& cfg = eval.config();
    if (gamma_a_est < 0.0) throw ValidationError("game_config", "gamma_a_est must be >= 0");

    if (!engine.ga) {
        // The attack set feasible under the smaller cost contains both budgets.
        const double widest = std::min(gamma_a_est, cfg.gamma_a);
        CbbiSolver solver(
            enumerate_actions<Player::attacker>(grid, cfg.levels_a, widest, cfg.enumeration_cap),
            enumerate_actions<Player::defender>(grid, cfg), eval, jobs);
        return rd_result(solver, solver.solve_rd(cfg.gamma_a, cfg.gamma_d, gamma_a_est),
                         cfg.gamma_a, cfg.gamma_d, gamma_a_est, eval.model().nominal_index());
    }

    const GAParams& params = *engine.ga;
    const EquilibriumResult planned =
        run_bpega(eval, params, {.attacker_gamma = gamma_a_est, .fixed_defense = std::nullopt});

    EquilibriumResult r = planned;
    const int na = static_cast<int>(genes(grid, Player::attacker).size());
    const std::uint64_t attack_space =
        count_feasible(na, cfg.levels_a, max_level_sum(cfg.gamma_a, cfg.levels_a, na));
    if (attack_space <= cfg.enumeration_cap) {
        r.attack = best_response(eval, planned.defense, cfg.gamma_a);
        r.u_attacker = eval.attacker_utility(r.attack, planned.defense);
        r.utility_evaluations += static_cast<std::size_t>(attack_space);
    } else {
        const EquilibriumResult answer =
            run_bpega(eval, params, {.attacker_gamma = cfg.gamma_a, .fixed_defense = planned.defense});
        r.attack = answer.attack;
        r.u_attacker = answer.u_attacker;
        r.utility_evaluations += answer.utility_evaluations;
    }
    r.u_defender = -r.u_attacker;
    r.method = Method::rd;
    r.gamma_a = cfg.gamma_a;
    r.gamma_a_est = gamma_a_est;
    r.estimated_u_defender = planned.u_defender;
    if (auto w = rd_estimate_warning(cfg.gamma_a, gamma_a_est)) r.warnings.push_back(*w);
    finalize_costs(r);
    return r;
}

inline EquilibriumResult solve_rd(const GridCase& grid, const GameConfig& cfg, double gamma_a_est,
                                  const RdEngine& engine = RdEngine::traversal()) {
    return solve_rd(Evaluator(grid, build_stiffness(grid), cfg), gamma_a_est, engine);
}

/// Relative defender-utility loss of the robust defense, in percent.
inline double rd_mismatch(double u_defender_rd, double u_defender_cbse) {
    return std::abs((u_defender_rd - u_defender_cbse) / u_defender_cbse) * 100.0;
}

inline double rd_mismatch(const EquilibriumResult& rd, const EquilibriumResult& cbse) {
    return rd_mismatch(rd.u_defender, cbse.u_defender);
}

/// ||d_rd||_1 / ||d_cbse||_1, or nothing when the CBSE defender stays idle.
inline std::optional<double> overpayment_ratio(const EquilibriumResult& rd, const EquilibriumResult& cbse) {
    if (cbse.defense.is_zero()) return std::nullopt;
    return rd.defense.norm1() / cbse.defense.norm1();
}

}  // namespace gridsec
