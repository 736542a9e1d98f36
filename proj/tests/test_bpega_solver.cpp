#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"

using namespace gridsec;

namespace {

class Ieee9Ga : public ::testing::Test {
protected:
    Ieee9Ga() : grid(load_case(oracle::data("ieee9.json"))), model(build_stiffness(grid)) {}

    GameConfig config(double ga, double gd) const {
        GameConfig cfg;
        cfg.gamma_a = ga;
        cfg.gamma_d = gd;
        return cfg;
    }

    GridCase grid;
    StiffnessModel model;
};

template <Player P>
Individual<P> individual(std::vector<int> levels, int L, double fitness = 0.0) {
    LevelVector<P> x(std::move(levels), L);
    return {x, fitness, static_cast<double>(x.level_sum()), 0};
}

}  // namespace

TEST(GAParams, DefaultsAndValidation) {
    const GAParams p;
    EXPECT_EQ(p.S_a, 30);
    EXPECT_EQ(p.S_d, 20);
    EXPECT_EQ(p.P_c, 0.85);
    EXPECT_EQ(p.P_m, 0.05);
    EXPECT_EQ(p.T, 30);
    EXPECT_NO_THROW(p.validate());
    for (auto broken : {GAParams{.S_a = 31}, GAParams{.S_d = 0}, GAParams{.P_c = 0.0},
                        GAParams{.P_m = 1.5}, GAParams{.T = -1}})
        EXPECT_THROW(broken.validate(), ValidationError);
}

TEST(LatticeSampler, UniformOverFeasiblePoints) {
    // n = 2, L = 3, level sum <= 2: six points.
    const detail::LatticeSampler sampler(2, 3, 2);
    Rng rng(3);
    std::map<std::vector<int>, int> hits;
    constexpr int draws = 60000;
    for (int i = 0; i < draws; ++i) ++hits[sampler.draw(rng)];
    ASSERT_EQ(hits.size(), 6u);
    for (const auto& [x, count] : hits) {
        EXPECT_LE(x[0] + x[1], 2);
        EXPECT_NEAR(static_cast<double>(count) / draws, 1.0 / 6.0, 0.01);
    }
}

TEST_F(Ieee9Ga, PricedOutPlayersStartAtZero) {
    const Populations pops = init_populations(grid, config(100.0, 100.0), GAParams{});
    ASSERT_EQ(pops.attackers.size(), 30u);
    ASSERT_EQ(pops.defenders.size(), 20u);
    for (const auto& x : pops.attackers) EXPECT_TRUE(x.action.is_zero());
    for (const auto& x : pops.defenders) EXPECT_TRUE(x.action.is_zero());
}

TEST_F(Ieee9Ga, SeededInitIsReproducible) {
    const GAParams p{.seed = 99};
    const Populations a = init_populations(grid, config(0.45, 0.75), p);
    const Populations b = init_populations(grid, config(0.45, 0.75), p);
    for (std::size_t i = 0; i < a.attackers.size(); ++i) EXPECT_EQ(a.attackers[i].action, b.attackers[i].action);
    for (std::size_t i = 0; i < a.defenders.size(); ++i) EXPECT_EQ(a.defenders[i].action, b.defenders[i].action);
}

TEST_F(Ieee9Ga, InitialPopulationsAreFeasible) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const GameConfig cfg = config(0.75, 0.45);
        const Populations pops = init_populations(grid, cfg, GAParams{.seed = seed});
        ASSERT_EQ(pops.attackers.size(), 30u);
        for (const auto& x : pops.attackers) {
            EXPECT_LE(cfg.gamma_a * x.action.norm1(), 1.0 + 1e-9);
            EXPECT_EQ(x.first_seen, 0);
        }
        for (const auto& x : pops.defenders) {
            EXPECT_LE(cfg.gamma_d * x.action.norm1(), 1.0 + 1e-9);
            EXPECT_TRUE(oracle::affordable(x.action.levels(), 3, cfg.gamma_d));
            for (int k : {3, 5}) EXPECT_EQ(x.action[k], 0) << "defense off the control set";
        }
    }
}

TEST_F(Ieee9Ga, ZeroAttackerFixesDefenderFitness) {
    const Evaluator eval(grid, model, config(0.75, 0.75));
    UtilityMemo memo(eval);
    Populations pops = init_populations(grid, eval.config(), GAParams{.seed = 4});
    pops.attackers = {individual<Player::attacker>(std::vector<int>(6, 0), 3)};
    evaluate_fitness(pops, memo);
    const oracle::Dense dn = oracle::dense(grid);
    for (const auto& d : pops.defenders) {
        EXPECT_EQ(d.fitness, -eval.attacker_utility(pops.attackers[0].action, d.action));
        const Eigen::VectorXd q = grid.Q_L_nominal - compensation(grid, d.action);
        if (oracle::index(dn, q) <= dn.delta_n) {
            EXPECT_EQ(d.fitness, -model.nominal_index());
        }
    }
}

TEST_F(Ieee9Ga, ZeroDefenderFixesAttackerFitness) {
    const Evaluator eval(grid, model, config(0.3, 0.75));
    UtilityMemo memo(eval);
    Populations pops = init_populations(grid, eval.config(), GAParams{.seed = 4});
    const DefenseAction none(std::vector<int>(6, 0), 3);
    pops.defenders = {individual<Player::defender>(none.levels(), 3)};
    evaluate_fitness(pops, memo);
    for (const auto& a : pops.attackers) EXPECT_EQ(a.fitness, eval.attacker_utility(a.action, none));
}

TEST_F(Ieee9Ga, InitialFitnessMatchesReevaluation) {
    const oracle::Dense dn = oracle::dense(grid);
    for (auto [ga, gd] : {std::pair{0.75, 0.75}, {0.3, 0.9}, {1.5, 0.45}}) {
        const Evaluator eval(grid, model, config(ga, gd));
        UtilityMemo memo(eval);
        Populations pops = init_populations(grid, eval.config(), GAParams{.seed = 17});
        evaluate_fitness(pops, memo);

        // Defender fitness: utility against the best attacker in the population.
        std::vector<double> fit_d;
        for (const auto& d : pops.defenders) {
            double best = -1.0;
            for (const auto& a : pops.attackers) best = std::max(best, oracle::utility(grid, dn, a.action, d.action));
            fit_d.push_back(-best);
        }
        // Leader: highest fitness, then lowest level sum, then lexicographic.
        std::size_t lead = 0;
        const double top = *std::max_element(fit_d.begin(), fit_d.end());
        bool found = false;
        for (std::size_t j = 0; j < fit_d.size(); ++j) {
            if (fit_d[j] < top - 1e-9) continue;
            const auto& x = pops.defenders[j].action;
            const auto& y = pops.defenders[lead].action;
            if (!found || x.level_sum() < y.level_sum() || (x.level_sum() == y.level_sum() && x < y)) lead = j;
            found = true;
        }
        for (std::size_t j = 0; j < fit_d.size(); ++j) EXPECT_NEAR(pops.defenders[j].fitness, fit_d[j], 1e-12);
        EXPECT_EQ(pops.defenders[pops.leader].action, pops.defenders[lead].action);
        for (const auto& a : pops.attackers)
            EXPECT_NEAR(a.fitness, oracle::utility(grid, dn, a.action, pops.defenders[lead].action), 1e-12);
    }
}

TEST_F(Ieee9Ga, AllChildrenInfeasibleKeepsGeneration) {
    // Every gene is at least 1, so every crossover child has level sum >= 6
    // while the budget admits at most 5.
    std::vector<Individual<Player::attacker>> pop;
    for (int i = 0; i < 8; ++i) {
        std::vector<int> levels(6, 1);
        levels[static_cast<std::size_t>(i % 6)] = 2;
        if (i >= 6) levels[0] = levels[1] = 2;
        pop.push_back(individual<Player::attacker>(levels, 3, 0.1 * i));
    }
    auto before = pop;
    std::stable_sort(before.begin(), before.end(), detail::precedes<Player::attacker>);
    SeniorityRegistry<Player::attacker> seen;
    Rng rng(8);
    const GAParams p{.P_c = 1.0, .P_m = 1e-12};
    int evaluated = 0;
    detail::reproduce(pop, seen, grid, 3, 2.0 / 5.0, p, 1, rng, [&](const AttackAction&) {
        ++evaluated;
        return 0.0;
    });
    EXPECT_EQ(evaluated, 0);
    ASSERT_EQ(pop.size(), before.size());
    for (std::size_t i = 0; i < pop.size(); ++i) EXPECT_EQ(pop[i].action, before[i].action);
}

TEST_F(Ieee9Ga, FullMutationResamplesEveryGene) {
    std::vector<Individual<Player::attacker>> pop(200, individual<Player::attacker>(std::vector<int>(6, 0), 2));
    SeniorityRegistry<Player::attacker> seen;
    Rng rng(12);
    const GAParams p{.P_m = 1.0};
    int ones = 0, genes_seen = 0;
    std::set<std::vector<int>> distinct;
    detail::reproduce(pop, seen, grid, 2, 0.0, p, 1, rng, [&](const AttackAction& a) {
        for (int l : a.levels()) ones += l;
        genes_seen += a.size();
        distinct.insert(a.levels());
        return 0.0;
    });
    ASSERT_EQ(genes_seen, 200 * 6);
    EXPECT_NEAR(static_cast<double>(ones) / genes_seen, 0.5, 0.06);
    EXPECT_GT(distinct.size(), 50u);  // 64 possible vectors
}

TEST_F(Ieee9Ga, ElitismAndFeasibilityAcrossGenerations) {
    for (auto [ga, gd] : {std::pair{0.75, 0.75}, {0.3, 0.45}, {1.5, 1.5}}) {
        const GameConfig cfg = config(ga, gd);
        const Evaluator eval(grid, model, cfg);
        UtilityMemo memo(eval);
        const GAParams p{.seed = 21};
        Rng rng(p.seed);
        Populations pops = init_populations(grid, cfg, p, {ga, gd}, rng);
        evaluate_fitness(pops, memo);
        for (int t = 0; t < 15; ++t) {
            auto best = [](const auto& pop) {
                return std::max_element(pop.begin(), pop.end(), [](const auto& x, const auto& y) {
                    return x.fitness < y.fitness;
                });
            };
            const auto top_a = *best(pops.attackers);
            const auto top_d = *best(pops.defenders);
            evolve_generation(pops, grid, cfg, p, {ga, gd}, rng, memo);

            // Scores are still relative to the previous opponents here.
            EXPECT_GE(best(pops.attackers)->fitness, top_a.fitness);
            EXPECT_GE(best(pops.defenders)->fitness, top_d.fitness);
            auto contains = [](const auto& pop, const auto& x) {
                return std::any_of(pop.begin(), pop.end(), [&](const auto& y) { return y.action == x.action; });
            };
            EXPECT_TRUE(contains(pops.attackers, top_a));
            EXPECT_TRUE(contains(pops.defenders, top_d));

            ASSERT_EQ(pops.attackers.size(), 30u);
            ASSERT_EQ(pops.defenders.size(), 20u);
            for (const auto& x : pops.attackers) {
                EXPECT_TRUE(oracle::affordable(x.action.levels(), 3, ga));
                EXPECT_LE(x.first_seen, pops.generation);
            }
            for (const auto& x : pops.defenders) {
                EXPECT_TRUE(oracle::affordable(x.action.levels(), 3, gd));
                EXPECT_LE(x.first_seen, pops.generation);
            }
            evaluate_fitness(pops, memo);
        }
    }
}

TEST_F(Ieee9Ga, NoGenerationsSolvesInitialPopulations) {
    const GameConfig cfg = config(0.6, 0.6);
    const Evaluator eval(grid, model, cfg);
    const GAParams p{.T = 0, .seed = 5};
    const EquilibriumResult r = run_bpega(eval, p);
    EXPECT_EQ(r.generations, 0);
    EXPECT_EQ(r.trace.size(), 1u);

    const Populations pops = init_populations(grid, cfg, p);
    std::vector<AttackAction> A;
    std::vector<DefenseAction> D;
    for (const auto& x : pops.attackers) A.push_back(x.action);
    for (const auto& x : pops.defenders) D.push_back(x.action);
    const CbbiSolver s(A, D, eval);
    const CbbiChoice c = s.solve(0.6, 0.6);
    EXPECT_EQ(r.attack, s.attacks()[c.attack]);
    EXPECT_EQ(r.defense, s.defenses()[c.defense]);
    EXPECT_EQ(r.u_attacker, c.u_attacker);
}

TEST_F(Ieee9Ga, SeededRunsAreIdentical) {
    const Evaluator eval(grid, model, config(0.45, 0.75));
    const EquilibriumResult a = run_bpega(eval, GAParams{.seed = 7});
    const EquilibriumResult b = run_bpega(eval, GAParams{.seed = 7});
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        EXPECT_EQ(a.trace[i].generation, b.trace[i].generation);
        EXPECT_EQ(a.trace[i].best_fit_a, b.trace[i].best_fit_a);
        EXPECT_EQ(a.trace[i].best_fit_d, b.trace[i].best_fit_d);
        EXPECT_EQ(a.trace[i].u_attacker_incumbent, b.trace[i].u_attacker_incumbent);
    }
    EXPECT_EQ(a.attack, b.attack);
    EXPECT_EQ(a.defense, b.defense);
    EXPECT_EQ(a.u_attacker, b.u_attacker);
    EXPECT_EQ(a.generations, b.generations);
    EXPECT_EQ(a.seed, std::optional<std::uint64_t>(7));
}

TEST_F(Ieee9Ga, ResultIsConsistent) {
    const Evaluator eval(grid, model, config(1.05, 0.45));
    const EquilibriumResult r = run_bpega(eval, GAParams{.seed = 2});
    EXPECT_EQ(r.u_attacker + r.u_defender, 0.0);
    EXPECT_EQ(r.u_attacker, eval.attacker_utility(r.attack, r.defense));
    EXPECT_TRUE(oracle::affordable(r.attack.levels(), 3, 1.05));
    EXPECT_TRUE(oracle::affordable(r.defense.levels(), 3, 0.45));
    EXPECT_LE(*r.generations, 30);
    EXPECT_EQ(r.trace.size(), static_cast<std::size_t>(*r.generations) + 1);
}

TEST_F(Ieee9Ga, MatchesTraversalOnMostSeeds) {
    for (auto [ga, gd] : {std::pair{0.1, 1.5}, {0.75, 0.75}, {1.5, 0.1}}) {
        const Evaluator eval(grid, model, config(ga, gd));
        const double target = solve_cbse(eval).u_attacker;
        int matched = 0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed)
            matched += run_bpega(eval, GAParams{.seed = seed}).u_attacker == target;
        EXPECT_GE(matched, 4) << ga << ", " << gd;
    }
}
