#pragma once

// Bidirectional co-evolution of attacker and defender populations, closed by
// a CBBI pass restricted to the final populations.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridsec/cbbi_solver.hpp"
#include "gridsec/equilibrium.hpp"
#include "gridsec/errors.hpp"
#include "gridsec/game_core.hpp"
#include "gridsec/rng.hpp"

namespace gridsec {

struct GAParams {
    int S_a = 30;
    int S_d = 20;
    double P_c = 0.85;
    double P_m = 0.05;
    int T = 30;
    std::uint64_t seed = 42;

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw ValidationError("ga_params", what);
        };
        require(S_a > 0 && S_a % 2 == 0, "S_a must be a positive even integer");
        require(S_d > 0 && S_d % 2 == 0, "S_d must be a positive even integer");
        require(P_c > 0.0 && P_c <= 1.0, "P_c must lie in (0, 1]");
        require(P_m > 0.0 && P_m <= 1.0, "P_m must lie in (0, 1]");
        require(T >= 0, "T must be >= 0");
    }
};

template <Player P>
struct Individual {
    LevelVector<P> action;
    double fitness = 0.0;
    double cost = 0.0;
    int first_seen = 0;
};

/// Generation at which each distinct action first entered a population.
template <Player P>
class SeniorityRegistry {
public:
    int admit(const LevelVector<P>& x, int generation) {
        auto [it, inserted] = first_.try_emplace(x.levels(), generation);
        return it->second;
    }

private:
    std::map<std::vector<int>, int> first_;
};

struct Populations {
    std::vector<Individual<Player::attacker>> attackers;
    std::vector<Individual<Player::defender>> defenders;
    int generation = 0;
    SeniorityRegistry<Player::attacker> seen_a;
    SeniorityRegistry<Player::defender> seen_d;

    /// Defender d' of the latest fitness pass and the attacker best response to it.
    std::size_t leader = 0;
    std::size_t leader_response = 0;
};

namespace detail {

/// Draws uniformly from {x in {0..L-1}^n : sum(x) <= budget} by counting
/// completions, so no rejection loop is needed.
class LatticeSampler {
public:
    LatticeSampler(int n_genes, int level_count, int budget)
        : n_(n_genes), L_(level_count), budget_(budget) {
        // ways_[g][s]: completions of genes g..n-1 using at most s more units.
        ways_.assign(static_cast<std::size_t>(n_ + 1), std::vector<double>(budget_ + 1, 1.0));
        for (int g = n_ - 1; g >= 0; --g)
            for (int s = 0; s <= budget_; ++s) {
                double total = 0.0;
                for (int l = 0; l < L_ && l <= s; ++l) total += at(g + 1, s - l);
                ways_[static_cast<std::size_t>(g)][static_cast<std::size_t>(s)] = total;
            }
    }

    std::vector<int> draw(Rng& rng) const {
        std::vector<int> out(static_cast<std::size_t>(n_), 0);
        int s = budget_;
        for (int g = 0; g < n_; ++g) {
            double u = rng.uniform() * at(g, s);
            int l = 0;
            for (; l < L_ - 1 && l < s; ++l) {
                u -= at(g + 1, s - l);
                if (u < 0.0) break;
            }
            out[static_cast<std::size_t>(g)] = l;
            s -= l;
        }
        return out;
    }

private:
    double at(int g, int s) const {
        return ways_[static_cast<std::size_t>(g)][static_cast<std::size_t>(s)];
    }

    int n_, L_, budget_;
    std::vector<std::vector<double>> ways_;
};

template <Player P>
LevelVector<P> from_genes(const std::vector<int>& support, const std::vector<int>& g, int n_loads,
                          int level_count) {
    std::vector<int> levels(static_cast<std::size_t>(n_loads), 0);
    for (std::size_t i = 0; i < support.size(); ++i)
        levels[static_cast<std::size_t>(support[i])] = g[i];
    return LevelVector<P>(std::move(levels), level_count);
}

template <Player P>
std::vector<int> to_genes(const std::vector<int>& support, const LevelVector<P>& x) {
    std::vector<int> g(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) g[i] = x[support[i]];
    return g;
}

template <Player P>
bool precedes(const Individual<P>& x, const Individual<P>& y) {
    if (x.fitness != y.fitness) return x.fitness > y.fitness;
    if (x.cost != y.cost) return x.cost < y.cost;
    if (x.first_seen != y.first_seen) return x.first_seen < y.first_seen;
    return x.action < y.action;
}

template <Player P>
bool homogeneous(const std::vector<Individual<P>>& pop) {
    return std::all_of(pop.begin(), pop.end(),
                       [&](const Individual<P>& x) { return x.action == pop.front().action; });
}

/// Top S of a ranked pool. Distinct actions are taken first in rank order;
/// copies only fill the slots left when the pool has fewer than S distinct
/// actions.
template <Player P>
std::vector<Individual<P>> survivors(std::vector<Individual<P>> ranked, std::size_t S) {
    std::vector<Individual<P>> out;
    std::vector<Individual<P>> copies;
    std::set<std::vector<int>> taken;
    for (auto& x : ranked) {
        if (taken.insert(x.action.levels()).second) {
            if (out.size() < S) out.push_back(std::move(x));
        } else {
            copies.push_back(std::move(x));
        }
    }
    for (std::size_t i = 0; out.size() < S && i < copies.size(); ++i) out.push_back(std::move(copies[i]));
    std::stable_sort(out.begin(), out.end(), precedes<P>);
    return out;
}

/// Index of the largest value; near-ties go to the lowest cost, then the
/// lexicographically smallest action.
template <typename Actions, typename Value>
std::size_t argbest(const Actions& actions, Value value) {
    std::vector<double> v(actions.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < actions.size(); ++i) best = std::max(best, v[i] = value(i));
    std::size_t pick = actions.size();
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (v[i] < best - kUtilityTieTolerance) continue;
        if (pick == actions.size()) {
            pick = i;
            continue;
        }
        const auto& a = actions[i].action;
        const auto& b = actions[pick].action;
        if (a.level_sum() < b.level_sum() || (a.level_sum() == b.level_sum() && a < b)) pick = i;
    }
    return pick;
}

}  // namespace detail

/// Budget used for the attacker population. Robust defense plans against an
/// estimated cost instead of the true one.
struct GaBudgets {
    double gamma_a;
    double gamma_d;
};

namespace detail {

/// S uniform draws from the feasible lattice, rejecting repeats while the
/// lattice still has unseen points. Repeats are accepted once the lattice is
/// exhausted or the draw budget runs out.
template <Player P>
std::vector<Individual<P>> sample_population(const GridCase& grid, int level_count, double gamma,
                                             int S, SeniorityRegistry<P>& seen, Rng& rng) {
    const auto support = genes(grid, P);
    const int n = static_cast<int>(support.size());
    const int cap = max_level_sum(gamma, level_count, n);
    const LatticeSampler sampler(n, level_count, cap);
    const std::uint64_t lattice = count_feasible(n, level_count, cap);
    std::set<std::vector<int>> drawn;
    std::vector<Individual<P>> pop;
    int attempts = 0;
    while (static_cast<int>(pop.size()) < S) {
        std::vector<int> g = sampler.draw(rng);
        const bool fresh = drawn.insert(g).second;
        if (!fresh && drawn.size() < lattice && ++attempts <= 100 * S) continue;
        auto x = from_genes<P>(support, g, grid.n_loads, level_count);
        seen.admit(x, 0);
        pop.push_back({x, 0.0, gamma * x.norm1(), 0});
    }
    return pop;
}

}  // namespace detail

inline Populations init_populations(const GridCase& grid, const GameConfig& cfg,
                                    const GAParams& params, const GaBudgets& budgets, Rng& rng) {
    Populations pops;
    pops.attackers = detail::sample_population(grid, cfg.levels_a, budgets.gamma_a, params.S_a,
                                               pops.seen_a, rng);
    pops.defenders = detail::sample_population(grid, cfg.levels_d, budgets.gamma_d, params.S_d,
                                               pops.seen_d, rng);
    return pops;
}

inline Populations init_populations(const GridCase& grid, const GameConfig& cfg,
                                    const GAParams& params) {
    Rng rng(params.seed);
    return init_populations(grid, cfg, params, {cfg.gamma_a, cfg.gamma_d}, rng);
}

/// Defender fitness is the defender utility against the best attacker in the
/// current attacker population. The fittest defender d' then sets the
/// attacker fitness U^a(a, d').
inline void evaluate_fitness(Populations& pops, UtilityMemo& memo) {
    auto& A = pops.attackers;
    auto& D = pops.defenders;
    if (A.empty() || D.empty()) throw ValidationError("population", "populations must be non-empty");

    std::vector<std::size_t> response(D.size());
    for (std::size_t j = 0; j < D.size(); ++j) {
        response[j] = detail::argbest(A, [&](std::size_t i) { return memo.attacker(A[i].action, D[j].action); });
        D[j].fitness = memo.defender(A[response[j]].action, D[j].action);
    }
    pops.leader = detail::argbest(D, [&](std::size_t j) { return D[j].fitness; });
    pops.leader_response = response[pops.leader];
    for (auto& a : A) a.fitness = memo.attacker(a.action, D[pops.leader].action);
}

namespace detail {

template <Player P, typename Fitness>
void reproduce(std::vector<Individual<P>>& pop, SeniorityRegistry<P>& seen, const GridCase& grid,
               int level_count, double gamma, const GAParams& params, int next_generation, Rng& rng,
               Fitness fitness) {
    const auto support = genes(grid, P);
    const int n = static_cast<int>(support.size());
    const int cap = max_level_sum(gamma, level_count, n);
    const double P_m = params.P_m;

    double lo = pop.front().fitness;
    for (const auto& x : pop) lo = std::min(lo, x.fitness);
    std::vector<double> cumulative(pop.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pop.size(); ++i) cumulative[i] = total += pop[i].fitness - lo + 1e-6;
    auto spin = [&] {
        const double u = rng.uniform() * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return it == cumulative.end() ? pop.size() - 1 : static_cast<std::size_t>(it - cumulative.begin());
    };

    std::vector<Individual<P>> children;
    for (std::size_t pair = 0; pair < pop.size() / 2; ++pair) {
        const std::size_t p1 = spin();
        const std::size_t p2 = spin();
        std::vector<int> c1 = to_genes(support, pop[p1].action);
        std::vector<int> c2 = to_genes(support, pop[p2].action);
        if (rng.uniform() < params.P_c && n >= 2) {
            const auto point = static_cast<std::size_t>(1 + rng.below(static_cast<std::uint64_t>(n - 1)));
            std::swap_ranges(c1.begin() + static_cast<std::ptrdiff_t>(point), c1.end(),
                             c2.begin() + static_cast<std::ptrdiff_t>(point));
        }
        for (auto* c : {&c1, &c2}) {
            for (int& gene : *c)
                if (rng.uniform() < P_m) gene = static_cast<int>(rng.below(static_cast<std::uint64_t>(level_count)));
            if (std::accumulate(c->begin(), c->end(), 0) > cap) continue;
            auto x = from_genes<P>(support, *c, grid.n_loads, level_count);
            const int born = seen.admit(x, next_generation);
            children.push_back({x, 0.0, gamma * x.norm1(), born});
        }
    }
    for (auto& c : children) c.fitness = fitness(c.action);

    const std::size_t S = pop.size();
    pop.insert(pop.end(), children.begin(), children.end());
    std::stable_sort(pop.begin(), pop.end(), precedes<P>);
    pop = survivors(std::move(pop), S);
}

}  // namespace detail

/// One generation: roulette selection, single-point crossover, per-gene
/// mutation, feasibility filter, then elitist truncation of parents plus
/// children. Children are scored against the opponents of the current
/// fitness pass, so fitness must have been evaluated beforehand.
inline void evolve_generation(Populations& pops, const GridCase& grid, const GameConfig& cfg,
                              const GAParams& params, const GaBudgets& budgets, Rng& rng,
                              UtilityMemo& memo, bool evolve_defender = true) {
    const int next = pops.generation + 1;
    const DefenseAction leader = pops.defenders[pops.leader].action;
    const auto attackers = pops.attackers;
    detail::reproduce(pops.attackers, pops.seen_a, grid, cfg.levels_a, budgets.gamma_a, params, next,
                      rng, [&](const AttackAction& a) { return memo.attacker(a, leader); });
    if (evolve_defender)
        detail::reproduce(pops.defenders, pops.seen_d, grid, cfg.levels_d, budgets.gamma_d, params,
                          next, rng, [&](const DefenseAction& d) {
                              const std::size_t i = detail::argbest(
                                  attackers, [&](std::size_t k) { return memo.attacker(attackers[k].action, d); });
                              return memo.defender(attackers[i].action, d);
                          });
    pops.generation = next;
}

struct BpegaOptions {
    /// Attacker cost used inside the co-evolution; defaults to cfg.gamma_a.
    std::optional<double> attacker_gamma;
    /// Keep the defender population fixed at this single action.
    std::optional<DefenseAction> fixed_defense;
};

inline EquilibriumResult run_bpega(const Evaluator& eval, const GAParams& params,
                                   const BpegaOptions& opts = {}) {
    params.validate();
    const GridCase& grid = eval.grid();
    const GameConfig& cfg = eval.config();
    const GaBudgets budgets{opts.attacker_gamma.value_or(cfg.gamma_a), cfg.gamma_d};

    Rng rng(params.seed);
    Populations pops = init_populations(grid, cfg, params, budgets, rng);
    if (opts.fixed_defense) {
        pops.defenders.assign(static_cast<std::size_t>(params.S_d),
                              {*opts.fixed_defense, 0.0, cfg.gamma_d * opts.fixed_defense->norm1(), 0});
    }
    UtilityMemo memo(eval);

    EquilibriumResult r;
    auto record = [&] {
        const auto best_a = std::max_element(pops.attackers.begin(), pops.attackers.end(),
                                             [](const auto& x, const auto& y) { return x.fitness < y.fitness; });
        const auto best_d = std::max_element(pops.defenders.begin(), pops.defenders.end(),
                                             [](const auto& x, const auto& y) { return x.fitness < y.fitness; });
        r.trace.push_back({pops.generation, best_a->fitness, best_d->fitness,
                           -pops.defenders[pops.leader].fitness});
    };

    evaluate_fitness(pops, memo);
    record();
    while (pops.generation < params.T &&
           !(detail::homogeneous(pops.attackers) && detail::homogeneous(pops.defenders))) {
        evolve_generation(pops, grid, cfg, params, budgets, rng, memo, !opts.fixed_defense);
        evaluate_fitness(pops, memo);
        record();
    }

    std::vector<AttackAction> final_a;
    std::vector<DefenseAction> final_d;
    for (const auto& x : pops.attackers) final_a.push_back(x.action);
    for (const auto& x : pops.defenders) final_d.push_back(x.action);
    const CbbiSolver closing(
        std::move(final_a), std::move(final_d),
        [&memo](const AttackAction& a, const DefenseAction& d) { return memo.attacker(a, d); },
        grid.n_loads, static_cast<int>(grid.ctrl_buses.size()));
    const CbbiChoice c = closing.solve(budgets.gamma_a, budgets.gamma_d);

    r.attack = closing.attacks()[c.attack];
    r.defense = closing.defenses()[c.defense];
    r.u_attacker = c.u_attacker;
    r.u_defender = -c.u_attacker;
    r.method = Method::bpega;
    r.gamma_a = budgets.gamma_a;
    r.gamma_d = cfg.gamma_d;
    r.delta_nominal = eval.model().nominal_index();
    r.generations = pops.generation;
    r.seed = params.seed;
    r.utility_evaluations = memo.evaluations();
    finalize_costs(r);
    return r;
}

inline EquilibriumResult run_bpega(const GridCase& grid, const GameConfig& cfg,
                                   const GAParams& params) {
    return run_bpega(Evaluator(grid, build_stiffness(grid), cfg), params);
}

}  // namespace gridsec
