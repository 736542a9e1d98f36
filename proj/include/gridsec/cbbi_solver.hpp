#pragma once

// Cost-based backward induction over explicit action sets.
//
// The payoff table U[a][d] does not depend on the per-load costs, so one
// table serves every point of a cost sweep; only the budget filters change.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

#include "gridsec/equilibrium.hpp"
#include "gridsec/errors.hpp"
#include "gridsec/game_core.hpp"

namespace gridsec {

/// Absolute tolerance under which two utilities are treated as equal.
inline constexpr double kUtilityTieTolerance = 1e-9;

struct CbbiChoice {
    std::size_t attack = 0;
    std::size_t defense = 0;
    double u_attacker = 0.0;
};

struct RdChoice {
    std::size_t estimated_attack = 0;  // g_o(gamma_est, d_RD)
    std::size_t defense = 0;
    std::size_t attack = 0;  // actual best response under the true gamma_a
    double estimated_u_attacker = 0.0;
    double u_attacker = 0.0;
};

class CbbiSolver {
public:
    using Payoff = std::function<double(const AttackAction&, const DefenseAction&)>;

    /// Tabulates `payoff` over the given action sets. Both sets are sorted
    /// lexicographically and deduplicated first, so index order is the
    /// tie-break order. `genes_a`/`genes_d` are the gene counts used by the
    /// budget filter.
    CbbiSolver(std::vector<AttackAction> attacks, std::vector<DefenseAction> defenses,
               const Payoff& payoff, int genes_a, int genes_d, int jobs = 1)
        : attacks_(canonical(std::move(attacks))),
          defenses_(canonical(std::move(defenses))),
          genes_a_(genes_a),
          genes_d_(genes_d) {
        if (attacks_.empty() || defenses_.empty())
            throw ValidationError("action", "CBBI needs non-empty action sets");
        tabulate(payoff, jobs);
    }

    CbbiSolver(std::vector<AttackAction> attacks, std::vector<DefenseAction> defenses,
               const Evaluator& eval, int jobs = 1)
        : CbbiSolver(
              std::move(attacks), std::move(defenses),
              [&eval](const AttackAction& a, const DefenseAction& d) {
                  return eval.attacker_utility(a, d);
              },
              eval.grid().n_loads, static_cast<int>(eval.grid().ctrl_buses.size()), jobs) {}

    /// Full level lattices of both players, budget filters disabled. Use this
    /// when the same table serves many cost pairs.
    static CbbiSolver full_lattice(const Evaluator& eval, int jobs = 1) {
        const GameConfig& cfg = eval.config();
        return CbbiSolver(
            enumerate_actions<Player::attacker>(eval.grid(), cfg.levels_a, 0.0, cfg.enumeration_cap),
            enumerate_actions<Player::defender>(eval.grid(), cfg.levels_d, 0.0, cfg.enumeration_cap),
            eval, jobs);
    }

    const std::vector<AttackAction>& attacks() const { return attacks_; }
    const std::vector<DefenseAction>& defenses() const { return defenses_; }
    double payoff(std::size_t i, std::size_t j) const { return table_[i * defenses_.size() + j]; }
    std::size_t evaluations() const { return table_.size(); }

    /// Attacker's lowest-cost best response to defense j under cost gamma.
    std::size_t best_response(std::size_t j, double gamma) const {
        const int cap = max_level_sum(gamma, attacks_.front().level_count(), genes_a_);
        return argbest(attacks_.size(), [&](std::size_t i) { return attacks_[i].level_sum() <= cap; },
                       [&](std::size_t i) { return payoff(i, j); },
                       [&](std::size_t i) { return attacks_[i].level_sum(); });
    }

    CbbiChoice solve(double gamma_a, double gamma_d) const {
        const auto response = responses(gamma_a, gamma_d);
        const std::size_t j = leader_choice(response, gamma_d);
        return {response[j], j, payoff(response[j], j)};
    }

    /// Defender plans against gamma_est; the attacker then answers with gamma_a.
    RdChoice solve_rd(double gamma_a, double gamma_d, double gamma_est) const {
        const auto estimated = responses(gamma_est, gamma_d);
        RdChoice out;
        out.defense = leader_choice(estimated, gamma_d);
        out.estimated_attack = estimated[out.defense];
        out.estimated_u_attacker = payoff(out.estimated_attack, out.defense);
        out.attack = best_response(out.defense, gamma_a);
        out.u_attacker = payoff(out.attack, out.defense);
        return out;
    }

    EquilibriumResult result(const CbbiChoice& c, double gamma_a, double gamma_d,
                             double delta_nominal) const {
        EquilibriumResult r;
        r.attack = attacks_[c.attack];
        r.defense = defenses_[c.defense];
        r.u_attacker = c.u_attacker;
        r.u_defender = -c.u_attacker;
        r.method = Method::cbbi;
        r.gamma_a = gamma_a;
        r.gamma_d = gamma_d;
        r.delta_nominal = delta_nominal;
        r.utility_evaluations = evaluations();
        finalize_costs(r);
        return r;
    }

private:
    template <typename T>
    static std::vector<T> canonical(std::vector<T> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    }

    // Index maximizing value() among admissible entries; near-ties go to the
    // smallest cost(), then the smallest index.
    template <typename Admissible, typename Value, typename Cost>
    static std::size_t argbest(std::size_t n, Admissible admissible, Value value, Cost cost) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            if (admissible(i)) best = std::max(best, value(i));
        if (best == -std::numeric_limits<double>::infinity())
            throw ValidationError("action", "no budget-feasible action in the candidate set");
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!admissible(i) || value(i) < best - kUtilityTieTolerance) continue;
            if (pick == n || cost(i) < cost(pick)) pick = i;
        }
        return pick;
    }

    std::vector<std::size_t> responses(double gamma_a, double gamma_d) const {
        const int cap_d = max_level_sum(gamma_d, defenses_.front().level_count(), genes_d_);
        std::vector<std::size_t> out(defenses_.size(), attacks_.size());
        for (std::size_t j = 0; j < defenses_.size(); ++j)
            if (defenses_[j].level_sum() <= cap_d) out[j] = best_response(j, gamma_a);
        return out;
    }

    std::size_t leader_choice(const std::vector<std::size_t>& response, double gamma_d) const {
        const int cap_d = max_level_sum(gamma_d, defenses_.front().level_count(), genes_d_);
        return argbest(
            defenses_.size(), [&](std::size_t j) { return defenses_[j].level_sum() <= cap_d; },
            [&](std::size_t j) { return -payoff(response[j], j); },
            [&](std::size_t j) { return defenses_[j].level_sum(); });
    }

    void tabulate(const Payoff& payoff, int jobs) {
        const std::size_t nd = defenses_.size();
        table_.assign(attacks_.size() * nd, 0.0);
        auto fill_rows = [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i)
                for (std::size_t j = 0; j < nd; ++j) table_[i * nd + j] = payoff(attacks_[i], defenses_[j]);
        };
        const std::size_t workers =
            std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, attacks_.size());
        if (workers == 1) {
            fill_rows(0, attacks_.size());
            return;
        }
        std::vector<std::thread> pool;
        const std::size_t chunk = (attacks_.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(attacks_.size(), begin + chunk);
            if (begin < end) pool.emplace_back(fill_rows, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    std::vector<AttackAction> attacks_;
    std::vector<DefenseAction> defenses_;
    int genes_a_;
    int genes_d_;
    std::vector<double> table_;  // row-major, attacks x defenses
};

/// Lowest-cost best response to a fixed defense by exhaustive scan of the
/// attacks feasible under `gamma`.
inline AttackAction best_response(const Evaluator& eval, const DefenseAction& d, double gamma) {
    const GameConfig& cfg = eval.config();
    CbbiSolver solver(enumerate_actions<Player::attacker>(eval.grid(), cfg.levels_a, gamma,
                                                          cfg.enumeration_cap),
                      {d}, eval);
    return solver.attacks()[solver.best_response(0, gamma)];
}

inline AttackAction best_response(const GridCase& grid, const GameConfig& cfg,
                                  const DefenseAction& d, double gamma) {
    return best_response(Evaluator(grid, build_stiffness(grid), cfg), d, gamma);
}

inline EquilibriumResult solve_cbse(const Evaluator& eval, int jobs = 1) {
    const GameConfig& cfg = eval.config();
    CbbiSolver solver(enumerate_actions<Player::attacker>(eval.grid(), cfg),
                      enumerate_actions<Player::defender>(eval.grid(), cfg), eval, jobs);
    return solver.result(solver.solve(cfg.gamma_a, cfg.gamma_d), cfg.gamma_a, cfg.gamma_d,
                         eval.model().nominal_index());
}

inline EquilibriumResult solve_cbse(const GridCase& grid, const GameConfig& cfg, int jobs = 1) {
    return solve_cbse(Evaluator(grid, build_stiffness(grid), cfg), jobs);
}

}  // namespace gridsec
