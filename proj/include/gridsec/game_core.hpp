#pragma once

// Action spaces, attack outcomes and the clipped-loss utilities of the
// attacker/defender investment game.

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/errors.hpp"
#include "gridsec/grid_model.hpp"
#include "gridsec/rng.hpp"

namespace gridsec {

enum class Player { attacker, defender };

inline const char* to_string(Player p) { return p == Player::attacker ? "attacker" : "defender"; }

struct GameConfig {
    double gamma_a = 0.0;  // attacker cost per fully attacked load
    double gamma_d = 0.0;  // defender cost per fully protected load
    int levels_a = 3;
    int levels_d = 3;
    /// Attacks with more fractional entries than this are evaluated by Monte Carlo.
    int mc_support_threshold = 20;
    std::int64_t mc_samples = 100000;
    std::uint64_t seed = 42;
    /// Largest action space the exhaustive solvers will enumerate.
    std::uint64_t enumeration_cap = 100000000;
    /// Clip uncertain model i at its own nominal index instead of the nominal model's.
    bool clip_at_model_nominal = false;

    int levels(Player p) const { return p == Player::attacker ? levels_a : levels_d; }
    double gamma(Player p) const { return p == Player::attacker ? gamma_a : gamma_d; }

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw ValidationError("game_config", what);
        };
        require(levels_a >= 2 && levels_a <= 255, "levels_a must lie in [2, 255]");
        require(levels_d >= 2 && levels_d <= 255, "levels_d must lie in [2, 255]");
        require(gamma_a >= 0.0 && gamma_d >= 0.0, "costs per load must be >= 0");
        require(mc_samples >= 1, "mc_samples must be >= 1");
        require(mc_support_threshold >= 0 && mc_support_threshold <= 62,
                "mc_support_threshold must lie in [0, 62]");
    }
};

/// Investment levels of one player, stored as integer indices 0..L-1.
/// Entry k stands for the probability/fraction levels[k] / (L - 1).
template <Player P>
class LevelVector {
public:
    LevelVector() = default;
    LevelVector(std::vector<int> levels, int level_count)
        : levels_(std::move(levels)), level_count_(level_count) {
        for (int l : levels_)
            if (l < 0 || l >= level_count_)
                throw ValidationError("action", "level index out of range");
    }

    static LevelVector zero(int size, int level_count) {
        return LevelVector(std::vector<int>(static_cast<std::size_t>(size), 0), level_count);
    }

    int size() const { return static_cast<int>(levels_.size()); }
    int level_count() const { return level_count_; }
    int operator[](int k) const { return levels_[static_cast<std::size_t>(k)]; }
    const std::vector<int>& levels() const { return levels_; }

    double value(int k) const {
        return static_cast<double>((*this)[k]) / static_cast<double>(level_count_ - 1);
    }
    std::vector<double> values() const {
        std::vector<double> v(levels_.size());
        for (int k = 0; k < size(); ++k) v[static_cast<std::size_t>(k)] = value(k);
        return v;
    }

    int level_sum() const { return std::accumulate(levels_.begin(), levels_.end(), 0); }
    /// l1 norm of the level values.
    double norm1() const {
        return static_cast<double>(level_sum()) / static_cast<double>(level_count_ - 1);
    }
    bool is_zero() const {
        return std::all_of(levels_.begin(), levels_.end(), [](int l) { return l == 0; });
    }

    auto operator<=>(const LevelVector&) const = default;
    bool operator==(const LevelVector&) const = default;

private:
    std::vector<int> levels_;
    int level_count_ = 2;
};

using AttackAction = LevelVector<Player::attacker>;
using DefenseAction = LevelVector<Player::defender>;

/// Slack on the unit budget so that grid values such as 0.15 = 2 * 0.075
/// do not lose feasible points to rounding.
inline constexpr double kBudgetSlack = 1e-9;

/// Largest admissible sum of level indices under gamma * ||x||_1 <= 1.
inline int max_level_sum(double gamma, int level_count, int n_genes) {
    const int full = n_genes * (level_count - 1);
    if (gamma <= 0.0) return full;
    const double units = (1.0 + kBudgetSlack) * (level_count - 1) / gamma;
    return units >= full ? full : static_cast<int>(std::floor(units));
}

template <Player P>
bool within_budget(const LevelVector<P>& x, double gamma) {
    return x.level_sum() <= max_level_sum(gamma, x.level_count(), x.size());
}

/// Indices of loads on which the player may invest.
inline std::vector<int> genes(const GridCase& grid, Player p) {
    if (p == Player::defender) return grid.ctrl_buses;
    std::vector<int> all(static_cast<std::size_t>(grid.n_loads));
    std::iota(all.begin(), all.end(), 0);
    return all;
}

/// Number of vectors in {0..L-1}^n with level sum <= max_sum, saturating at UINT64_MAX.
inline std::uint64_t count_feasible(int n_genes, int level_count, int max_sum) {
    std::vector<std::uint64_t> ways(static_cast<std::size_t>(max_sum) + 1, 0);
    ways[0] = 1;
    for (int g = 0; g < n_genes; ++g) {
        std::vector<std::uint64_t> next(ways.size(), 0);
        for (int s = 0; s <= max_sum; ++s) {
            if (ways[static_cast<std::size_t>(s)] == 0) continue;
            for (int l = 0; l < level_count && s + l <= max_sum; ++l) {
                auto& slot = next[static_cast<std::size_t>(s + l)];
                const std::uint64_t add = ways[static_cast<std::size_t>(s)];
                slot = (slot > UINT64_MAX - add) ? UINT64_MAX : slot + add;
            }
        }
        ways = std::move(next);
    }
    std::uint64_t total = 0;
    for (std::uint64_t w : ways) total = (total > UINT64_MAX - w) ? UINT64_MAX : total + w;
    return total;
}

/// All budget-feasible actions of player P in lexicographic order of level indices.
template <Player P>
std::vector<LevelVector<P>> enumerate_actions(const GridCase& grid, int level_count,
                                              double gamma, std::uint64_t cap) {
    const std::vector<int> support = genes(grid, P);
    const int n = static_cast<int>(support.size());
    const int budget = max_level_sum(gamma, level_count, n);
    const std::uint64_t count = count_feasible(n, level_count, budget);
    if (count > cap)
        throw CapacityError(std::string(to_string(P)) + " action space has " +
                            (count == UINT64_MAX ? std::string("more than 2^64")
                                                 : std::to_string(count)) +
                            " feasible points, above the enumeration cap of " +
                            std::to_string(cap) + "; use the bpega solver");

    std::vector<LevelVector<P>> out;
    out.reserve(static_cast<std::size_t>(count));
    std::vector<int> levels(static_cast<std::size_t>(grid.n_loads), 0);
    auto recurse = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == n) {
            out.emplace_back(levels, level_count);
            return;
        }
        const auto k = static_cast<std::size_t>(support[static_cast<std::size_t>(pos)]);
        for (int l = 0; l < level_count && l <= remaining; ++l) {
            levels[k] = l;
            self(self, pos + 1, remaining - l);
        }
        levels[k] = 0;
    };
    recurse(recurse, 0, budget);
    return out;
}

template <Player P>
std::vector<LevelVector<P>> enumerate_actions(const GridCase& grid, const GameConfig& cfg) {
    return enumerate_actions<P>(grid, cfg.levels(P), cfg.gamma(P), cfg.enumeration_cap);
}

struct Outcome {
    std::vector<std::uint8_t> success_mask;
    double probability = 0.0;
};

/// Loads attacked with a level strictly between 0 and 1.
inline std::vector<int> fractional_support(const AttackAction& a) {
    std::vector<int> f;
    for (int k = 0; k < a.size(); ++k)
        if (a[k] > 0 && a[k] < a.level_count() - 1) f.push_back(k);
    return f;
}

/// Every outcome with nonzero probability. Loads at level 1 always succeed and
/// loads at level 0 never do, so only the fractional entries are enumerated.
inline std::vector<Outcome> enumerate_outcomes(const AttackAction& a, int support_threshold = 20) {
    const std::vector<int> frac = fractional_support(a);
    if (static_cast<int>(frac.size()) > support_threshold)
        throw CapacityError(std::to_string(frac.size()) +
                            " fractional attack entries exceed the exact enumeration threshold " +
                            std::to_string(support_threshold) + "; use Monte Carlo");
    const int K = a.size();
    std::vector<std::uint8_t> fixed(static_cast<std::size_t>(K), 0);
    for (int k = 0; k < K; ++k)
        if (a[k] == a.level_count() - 1) fixed[static_cast<std::size_t>(k)] = 1;

    const std::uint64_t n = std::uint64_t{1} << frac.size();
    std::vector<Outcome> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::uint64_t bits = 0; bits < n; ++bits) {
        Outcome o{fixed, 1.0};
        for (std::size_t j = 0; j < frac.size(); ++j) {
            const double p = a.value(frac[j]);
            const bool hit = (bits >> j) & 1U;
            o.success_mask[static_cast<std::size_t>(frac[j])] = hit ? 1 : 0;
            o.probability *= hit ? p : 1.0 - p;
        }
        out.push_back(std::move(o));
    }
    return out;
}

/// Demand increment of one outcome. An attacked load that is hit receives its
/// full covert cap q_a_max[k].
inline Eigen::VectorXd attack_increment(const GridCase& grid, const AttackAction& a,
                                        std::span<const std::uint8_t> mask) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(grid.n_loads);
    for (int k = 0; k < grid.n_loads; ++k)
        if (a[k] > 0 && mask[static_cast<std::size_t>(k)]) q(k) = grid.q_a_max(k);
    return q;
}

inline Eigen::VectorXd compensation(const GridCase& grid, const DefenseAction& d) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(grid.n_loads);
    for (int k = 0; k < grid.n_loads; ++k) q(k) = d.value(k) * grid.q_d_max(k);
    return q;
}

inline double clip(double x, double floor) { return x <= floor ? floor : (x >= 1.0 ? 1.0 : x); }

/// Evaluates losses and expected utilities for one grid operating point.
///
/// By default the operating point is the nominal setpoint vector; an uncertain
/// load model substitutes its own setpoints. The lower clip bound is the
/// nominal model's index unless an explicit floor is given.
class Evaluator {
public:
    Evaluator(const GridCase& grid, const StiffnessModel& model, GameConfig cfg,
              std::optional<Eigen::VectorXd> setpoints = std::nullopt,
              std::optional<double> clip_floor = std::nullopt)
        : grid_(grid),
          model_(model),
          cfg_(cfg),
          setpoints_(setpoints ? *setpoints : grid.Q_L_nominal),
          floor_(clip_floor ? *clip_floor : model.nominal_index()) {
        cfg_.validate();
        const int K = grid.n_loads;
        if (setpoints_.size() != K)
            throw ValidationError("dimension", "setpoint vector length must equal n_loads");
        base_response_ = model.solve(setpoints_);
        attack_response_.resize(K, K);
        defense_response_.resize(K, K);
        for (int k = 0; k < K; ++k) {
            const Eigen::VectorXd unit = model.solve(Eigen::VectorXd::Unit(K, k));
            attack_response_.col(k) = unit * grid.q_a_max(k);
            defense_response_.col(k) = unit * grid.q_d_max(k);
        }
    }

    const GridCase& grid() const { return grid_; }
    const StiffnessModel& model() const { return model_; }
    const GameConfig& config() const { return cfg_; }
    const Eigen::VectorXd& setpoints() const { return setpoints_; }
    double clip_floor() const { return floor_; }

    /// Loss of one outcome through a direct solve of the perturbed setpoints.
    double performance_loss(const AttackAction& a, const DefenseAction& d,
                            std::span<const std::uint8_t> mask) const {
        const Eigen::VectorXd q =
            setpoints_ + attack_increment(grid_, a, mask) - compensation(grid_, d);
        return clip(model_.instability_index(q), floor_);
    }

    bool needs_monte_carlo(const AttackAction& a) const {
        return static_cast<int>(fractional_support(a).size()) > cfg_.mc_support_threshold;
    }

    /// Expected clipped loss over attack outcomes.
    double attacker_utility(const AttackAction& a, const DefenseAction& d) const {
        const std::vector<int> frac = fractional_support(a);
        Eigen::VectorXd x = base_response_;
        for (int k = 0; k < grid_.n_loads; ++k) {
            if (d[k] > 0) x -= d.value(k) * defense_response_.col(k);
            if (a[k] == a.level_count() - 1) x += attack_response_.col(k);
        }
        const double u = static_cast<int>(frac.size()) > cfg_.mc_support_threshold
                             ? monte_carlo(a, d, frac, x)
                             : exact(a, frac, x);
        // An average of clipped losses lies in the clip window; rounding in
        // the sum must not push it out.
        return clip(u, floor_);
    }

    double defender_utility(const AttackAction& a, const DefenseAction& d) const {
        return -attacker_utility(a, d);
    }

    double utility(const AttackAction& a, const DefenseAction& d, Player p) const {
        const double ua = attacker_utility(a, d);
        return p == Player::attacker ? ua : -ua;
    }

private:
    double loss_of(const Eigen::VectorXd& x) const {
        return clip(x.lpNorm<Eigen::Infinity>(), floor_);
    }

    // Walks the 2^f outcomes in Gray-code order, adding or removing one
    // attacked column per step.
    double exact(const AttackAction& a, const std::vector<int>& frac, Eigen::VectorXd x) const {
        const std::size_t f = frac.size();
        std::vector<double> p(f);
        for (std::size_t j = 0; j < f; ++j) p[j] = a.value(frac[j]);
        const std::uint64_t n = std::uint64_t{1} << f;
        double total = 0.0;
        std::uint64_t gray = 0;
        for (std::uint64_t i = 0; i < n; ++i) {
            if (i > 0) {
                const int j = std::countr_zero(i);
                gray ^= std::uint64_t{1} << j;
                const auto col = attack_response_.col(frac[static_cast<std::size_t>(j)]);
                if ((gray >> j) & 1U)
                    x += col;
                else
                    x -= col;
            }
            double prob = 1.0;
            for (std::size_t j = 0; j < f; ++j) prob *= ((gray >> j) & 1U) ? p[j] : 1.0 - p[j];
            total += prob * loss_of(x);
        }
        return total;
    }

    double monte_carlo(const AttackAction& a, const DefenseAction& d,
                       const std::vector<int>& frac, const Eigen::VectorXd& x0) const {
        std::uint64_t key = splitmix64(cfg_.seed);
        for (int l : a.levels()) key = hash_combine(key, static_cast<std::uint64_t>(l));
        key = hash_combine(key, 0xA77AC4ULL);
        for (int l : d.levels()) key = hash_combine(key, static_cast<std::uint64_t>(l));

        const std::size_t f = frac.size();
        std::vector<double> p(f);
        for (std::size_t j = 0; j < f; ++j) p[j] = a.value(frac[j]);
        Eigen::VectorXd x(x0.size());
        double total = 0.0;
        for (std::int64_t s = 0; s < cfg_.mc_samples; ++s) {
            x = x0;
            for (std::size_t j = 0; j < f; ++j) {
                const auto counter = static_cast<std::uint64_t>(s) * f + j;
                if (counter_uniform(key, counter) < p[j]) x += attack_response_.col(frac[j]);
            }
            total += loss_of(x);
        }
        return total / static_cast<double>(cfg_.mc_samples);
    }

    GridCase grid_;
    StiffnessModel model_;
    GameConfig cfg_;
    Eigen::VectorXd setpoints_;
    double floor_;
    Eigen::VectorXd base_response_;
    Eigen::MatrixXd attack_response_;   // column k: response to q_a_max[k] at load k
    Eigen::MatrixXd defense_response_;  // column k: response to q_d_max[k] at load k
};

inline double performance_loss(const StiffnessModel& model, const GridCase& grid,
                               const AttackAction& a, const DefenseAction& d,
                               std::span<const std::uint8_t> mask) {
    const Eigen::VectorXd q = grid.Q_L_nominal + attack_increment(grid, a, mask) -
                              compensation(grid, d);
    return clip(model.instability_index(q), model.nominal_index());
}

inline double expected_utility(const StiffnessModel& model, const GridCase& grid,
                               const GameConfig& cfg, const AttackAction& a,
                               const DefenseAction& d, Player p) {
    return Evaluator(grid, model, cfg).utility(a, d, p);
}

/// Memoizes attacker utilities by action pair. Not thread-safe; use one per thread.
class UtilityMemo {
public:
    explicit UtilityMemo(const Evaluator& eval) : eval_(&eval) {}

    double attacker(const AttackAction& a, const DefenseAction& d) {
        std::string key;
        key.reserve(a.levels().size() + d.levels().size() + 1);
        for (int l : a.levels()) key.push_back(static_cast<char>(l));
        key.push_back(static_cast<char>(0xFF));
        for (int l : d.levels()) key.push_back(static_cast<char>(l));
        auto [it, inserted] = cache_.try_emplace(std::move(key), 0.0);
        if (inserted) {
            it->second = eval_->attacker_utility(a, d);
            ++evaluations_;
        }
        return it->second;
    }

    double defender(const AttackAction& a, const DefenseAction& d) { return -attacker(a, d); }

    const Evaluator& evaluator() const { return *eval_; }
    std::size_t evaluations() const { return evaluations_; }

private:
    const Evaluator* eval_;
    std::unordered_map<std::string, double> cache_;
    std::size_t evaluations_ = 0;
};

}  // namespace gridsec
