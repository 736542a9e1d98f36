#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/equilibrium.hpp"
#include "gridsec/errors.hpp"
#include "gridsec/game_core.hpp"
#include "gridsec/grid_model.hpp"
#include "gridsec/rng.hpp"

namespace gridsec {

inline constexpr int kMaxModelRedraws = 100;

struct UncertainModelSet {
    double sigma = 0.1;
    int M = 20;
    std::uint64_t seed = 42;
    std::vector<Eigen::VectorXd> models;  // perturbed nominal setpoints
    std::vector<int> redraws;             // rejected draws before each accepted model
};

/// Draws Q^{n,i} = Q^n * (1 + eps) with eps ~ N(0, sigma^2) per load, model
/// by model and load by load from one seeded stream. A draw whose nominal
/// index reaches 1 is discarded and redrawn.
inline UncertainModelSet generate_models(const GridCase& grid, const StiffnessModel& model,
                                         double sigma, int M, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw ValidationError("uncertainty", "sigma must be >= 0");
    if (M < 1) throw ValidationError("uncertainty", "M must be >= 1");
    UncertainModelSet set{sigma, M, seed, {}, {}};
    Rng rng(seed);
    const int K = grid.n_loads;
    for (int i = 0; i < M; ++i) {
        int rejected = 0;
        for (;;) {
            Eigen::VectorXd q(K);
            for (int k = 0; k < K; ++k) q(k) = grid.Q_L_nominal(k) * (1.0 + sigma * rng.normal());
            if (model.instability_index(q) < 1.0) {
                set.models.push_back(std::move(q));
                set.redraws.push_back(rejected);
                break;
            }
            if (++rejected > kMaxModelRedraws)
                throw ValidationError("uncertainty",
                                      "model " + std::to_string(i) + " stayed unstable after " +
                                          std::to_string(kMaxModelRedraws) +
                                          " redraws; the case is too stressed for sigma = " +
                                          std::to_string(sigma));
        }
    }
    return set;
}

inline UncertainModelSet generate_models(const GridCase& grid, double sigma, int M,
                                         std::uint64_t seed) {
    return generate_models(grid, build_stiffness(grid), sigma, M, seed);
}

/// Evaluator for one uncertain model. The clip floor is the nominal model's
/// index unless cfg.clip_at_model_nominal is set.
inline Evaluator model_evaluator(const GridCase& grid, const StiffnessModel& model,
                                 const GameConfig& cfg, const Eigen::VectorXd& setpoints) {
    const double floor = cfg.clip_at_model_nominal ? model.instability_index(setpoints)
                                                   : model.nominal_index();
    return Evaluator(grid, model, cfg, setpoints, floor);
}

inline double utility_under_model(const Eigen::VectorXd& setpoints, const GridCase& grid,
                                  const StiffnessModel& model, const GameConfig& cfg,
                                  const AttackAction& a, const DefenseAction& d,
                                  Player p = Player::attacker) {
    return model_evaluator(grid, model, cfg, setpoints).utility(a, d, p);
}

/// Percent change of the attacker utility of a fixed strategy pair when the
/// nominal setpoints are replaced by each uncertain model.
inline std::vector<double> utility_mismatch(const UncertainModelSet& set, const GridCase& grid,
                                            const StiffnessModel& model, const GameConfig& cfg,
                                            const AttackAction& a, const DefenseAction& d) {
    const double u = Evaluator(grid, model, cfg).attacker_utility(a, d);
    std::vector<double> mu;
    mu.reserve(set.models.size());
    for (const auto& q : set.models) {
        const double ui = utility_under_model(q, grid, model, cfg, a, d);
        mu.push_back(std::abs((u - ui) / u) * 100.0);
    }
    return mu;
}

inline std::vector<double> utility_mismatch(const UncertainModelSet& set, const GridCase& grid,
                                            const StiffnessModel& model, const GameConfig& cfg,
                                            const EquilibriumResult& eq) {
    return utility_mismatch(set, grid, model, cfg, eq.attack, eq.defense);
}

struct SummaryStats {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

/// Quantile with linear interpolation between order statistics at position
/// p * (n - 1), the same rule as numpy's default.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline SummaryStats summary_stats(const std::vector<double>& values) {
    if (values.empty()) throw ValidationError("summary_stats", "empty sample");
    std::vector<double> s = values;
    std::sort(s.begin(), s.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return {s.front(),
            quantile_sorted(s, 0.25),
            quantile_sorted(s, 0.5),
            quantile_sorted(s, 0.75),
            s.back(),
            sum / static_cast<double>(values.size())};
}

}  // namespace gridsec
