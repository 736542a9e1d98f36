#pragma once

// Grid description and the voltage instability index.
//
// Load buses occupy the first n_loads rows/columns of the susceptance matrix,
// generator buses the remaining n_gens. All powers are in per unit.

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridsec/errors.hpp"

namespace gridsec {

struct Branch {
    int from = 0;  // 1-based internal bus index
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double charging = 0.0;  // total line charging susceptance
};

struct GridCase {
    std::string name;
    std::string provenance;
    double base_MVA = 100.0;
    int n_loads = 0;
    int n_gens = 0;
    Eigen::MatrixXd B;
    Eigen::VectorXd V_G;
    Eigen::VectorXd Q_L_nominal;
    Eigen::VectorXd q_a_max;
    Eigen::VectorXd q_d_max;
    /// 0-based load indices with a control device, ascending.
    std::vector<int> ctrl_buses;
    /// External bus number of each load (defaults to 1..n_loads).
    std::vector<int> load_bus_ids;

    Eigen::MatrixXd B_LL() const { return B.topLeftCorner(n_loads, n_loads); }
    Eigen::MatrixXd B_LG() const { return B.topRightCorner(n_loads, n_gens); }

    bool is_controllable(int k) const {
        return std::binary_search(ctrl_buses.begin(), ctrl_buses.end(), k);
    }

    std::vector<int> ctrl_bus_ids() const {
        std::vector<int> ids;
        ids.reserve(ctrl_buses.size());
        for (int k : ctrl_buses) ids.push_back(load_bus_ids[static_cast<std::size_t>(k)]);
        return ids;
    }
};

/// Susceptance matrix from a branch list: series susceptance off the diagonal,
/// series plus half the line charging on the diagonal.
inline Eigen::MatrixXd assemble_susceptance(int n_bus, const std::vector<Branch>& branches) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n_bus, n_bus);
    for (const Branch& br : branches) {
        if (br.from < 1 || br.from > n_bus || br.to < 1 || br.to > n_bus || br.from == br.to)
            throw ValidationError("dimension", "branch endpoints out of range");
        if (br.r == 0.0 && br.x == 0.0)
            throw ValidationError("branch", "zero series impedance");
        const double b = (1.0 / std::complex<double>(br.r, br.x)).imag();
        const int f = br.from - 1;
        const int t = br.to - 1;
        B(f, t) -= b;
        B(t, f) -= b;
        B(f, f) += b + br.charging / 2.0;
        B(t, t) += b + br.charging / 2.0;
    }
    return B;
}

/// Open-circuit voltages, stiffness matrix and a reusable factorization of it.
class StiffnessModel {
public:
    /// Singular values of B_LL below this fraction of the largest are rejected.
    static constexpr double kSingularRatio = 1e-10;
    static constexpr double kMaxCondition = 1e12;

    explicit StiffnessModel(const GridCase& grid) {
        const Eigen::MatrixXd bll = grid.B_LL();
        check_conditioning(bll, "singular_B_LL", 1.0 / kSingularRatio, bll_condition_);

        Eigen::PartialPivLU<Eigen::MatrixXd> bll_lu(bll);
        V_L_star_ = -bll_lu.solve(grid.B_LG() * grid.V_G);
        if (!V_L_star_.allFinite())
            throw ValidationError("singular_B_LL", "open-circuit voltages are not finite");

        Q_crit_ = 0.25 * V_L_star_.asDiagonal() * bll * V_L_star_.asDiagonal();
        check_conditioning(Q_crit_, "singular_Q_crit", kMaxCondition, q_crit_condition_);
        lu_.compute(Q_crit_);

        delta_nominal_ = instability_index(grid.Q_L_nominal);
        if (!std::isfinite(delta_nominal_))
            throw ValidationError("singular_Q_crit", "nominal index is not finite");
    }

    const Eigen::VectorXd& open_circuit_voltages() const { return V_L_star_; }
    const Eigen::MatrixXd& stiffness() const { return Q_crit_; }
    double nominal_index() const { return delta_nominal_; }
    double b_ll_condition() const { return bll_condition_; }
    double q_crit_condition() const { return q_crit_condition_; }
    int size() const { return static_cast<int>(Q_crit_.rows()); }

    /// Solves Q_crit x = rhs with the stored factorization.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return lu_.solve(rhs); }

    double instability_index(const Eigen::VectorXd& Q_L) const {
        return solve(Q_L).lpNorm<Eigen::Infinity>();
    }

private:
    static void check_conditioning(const Eigen::MatrixXd& m, const char* invariant,
                                   double limit, double& condition) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        const auto& s = svd.singularValues();
        if (s.size() == 0) throw ValidationError("dimension", "empty matrix");
        const double hi = s(0);
        const double lo = s(s.size() - 1);
        condition = lo > 0.0 ? hi / lo : INFINITY;
        if (!(condition <= limit)) {
            std::ostringstream msg;
            msg << "condition number " << condition << " exceeds " << limit;
            throw ValidationError(invariant, msg.str());
        }
    }

    Eigen::VectorXd V_L_star_;
    Eigen::MatrixXd Q_crit_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    double delta_nominal_ = 0.0;
    double bll_condition_ = 0.0;
    double q_crit_condition_ = 0.0;
};

inline StiffnessModel build_stiffness(const GridCase& grid) { return StiffnessModel(grid); }

inline double instability_index(const StiffnessModel& model, const Eigen::VectorXd& Q_L) {
    return model.instability_index(Q_L);
}

namespace detail {

inline void require(bool ok, const char* invariant, const std::string& detail) {
    if (!ok) throw ValidationError(invariant, detail);
}

inline bool approx_symmetric(const Eigen::MatrixXd& m, double rel) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
            const double a = m(i, j);
            const double b = m(j, i);
            if (std::abs(a - b) > rel * std::max(std::abs(a), std::abs(b))) return false;
        }
    return true;
}

}  // namespace detail

/// Checks every structural invariant and that the nominal point is stable.
/// Throws ValidationError naming the first violated invariant.
inline void validate(const GridCase& g) {
    using detail::require;
    const int K = g.n_loads;
    const int n = g.n_loads + g.n_gens;
    require(K >= 1 && g.n_gens >= 1, "dimension", "n_loads and n_gens must be positive");
    require(g.B.rows() == n && g.B.cols() == n, "dimension",
            "B must be (n_loads + n_gens) square");
    require(g.V_G.size() == g.n_gens, "dimension", "V_G length must equal n_gens");
    require(g.Q_L_nominal.size() == K, "dimension", "Q_L_nominal length must equal n_loads");
    require(g.q_a_max.size() == K, "dimension", "q_a_max length must equal n_loads");
    require(g.q_d_max.size() == K, "dimension", "q_d_max length must equal n_loads");
    require(static_cast<int>(g.load_bus_ids.size()) == K, "dimension",
            "load_bus_ids length must equal n_loads");
    require(g.B.allFinite() && g.V_G.allFinite() && g.Q_L_nominal.allFinite() &&
                g.q_a_max.allFinite() && g.q_d_max.allFinite(),
            "finite", "non-finite value in case data");
    require(detail::approx_symmetric(g.B, 1e-9), "symmetry", "B is not symmetric");
    require((g.q_a_max.array() >= 0.0).all(), "nonnegative_bounds", "q_a_max must be >= 0");
    require((g.q_d_max.array() >= 0.0).all(), "nonnegative_bounds", "q_d_max must be >= 0");
    require(std::is_sorted(g.ctrl_buses.begin(), g.ctrl_buses.end()) &&
                std::adjacent_find(g.ctrl_buses.begin(), g.ctrl_buses.end()) ==
                    g.ctrl_buses.end(),
            "ctrl_buses", "control buses must be unique");
    for (int k : g.ctrl_buses)
        require(k >= 0 && k < K, "ctrl_buses", "control bus outside the load set");
    for (int k = 0; k < K; ++k)
        if (!g.is_controllable(k))
            require(g.q_d_max(k) == 0.0, "control_support",
                    "q_d_max is nonzero at load bus " +
                        std::to_string(g.load_bus_ids[static_cast<std::size_t>(k)]) +
                        " which has no control device");

    const StiffnessModel model(g);
    require(model.nominal_index() > 0.0, "nominal_stability",
            "nominal instability index must be positive");
    require(model.nominal_index() < 1.0, "nominal_stability",
            "nominal instability index " + std::to_string(model.nominal_index()) +
                " is not below 1");
}

namespace detail {

inline Eigen::VectorXd vector_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError("parse", std::string("missing key '") + key + "'");
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// Builds and validates a case from its JSON form. `B` takes precedence over
/// the optional `branches` list ([from, to, r, x, charging], 1-based).
inline GridCase parse_case(const nlohmann::json& j) {
    GridCase g;
    try {
        g.name = j.value("name", std::string{});
        g.provenance = j.value("provenance", std::string{});
        g.base_MVA = j.value("base_MVA", 100.0);
        g.n_loads = j.at("n_loads").get<int>();
        g.n_gens = j.at("n_gens").get<int>();
        const int n = g.n_loads + g.n_gens;
        if (j.contains("B")) {
            const auto rows = j.at("B").get<std::vector<std::vector<double>>>();
            if (static_cast<int>(rows.size()) != n)
                throw ValidationError("dimension", "B must have n_loads + n_gens rows");
            g.B.resize(n, n);
            for (int r = 0; r < n; ++r) {
                if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != n)
                    throw ValidationError("dimension", "B row " + std::to_string(r + 1) +
                                                           " has the wrong length");
                for (int c = 0; c < n; ++c) g.B(r, c) = rows[static_cast<std::size_t>(r)]
                                                            [static_cast<std::size_t>(c)];
            }
        } else if (j.contains("branches")) {
            std::vector<Branch> branches;
            for (const auto& row : j.at("branches")) {
                const auto v = row.get<std::vector<double>>();
                if (v.size() != 5)
                    throw ValidationError("parse", "branch rows are [from, to, r, x, charging]");
                branches.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), v[2], v[3],
                                    v[4]});
            }
            g.B = assemble_susceptance(n, branches);
        } else {
            throw ValidationError("parse", "case needs either 'B' or 'branches'");
        }
        g.V_G = detail::vector_field(j, "V_G");
        g.Q_L_nominal = detail::vector_field(j, "Q_L_nominal");
        g.q_a_max = detail::vector_field(j, "q_a_max");
        g.q_d_max = detail::vector_field(j, "q_d_max");

        if (j.contains("load_bus_ids")) {
            g.load_bus_ids = j.at("load_bus_ids").get<std::vector<int>>();
        } else {
            g.load_bus_ids.resize(static_cast<std::size_t>(std::max(g.n_loads, 0)));
            std::iota(g.load_bus_ids.begin(), g.load_bus_ids.end(), 1);
        }
        for (int id : j.at("ctrl_buses").get<std::vector<int>>()) {
            const auto it = std::find(g.load_bus_ids.begin(), g.load_bus_ids.end(), id);
            if (it == g.load_bus_ids.end())
                throw ValidationError("ctrl_buses",
                                      "control bus " + std::to_string(id) + " is not a load bus");
            g.ctrl_buses.push_back(static_cast<int>(it - g.load_bus_ids.begin()));
        }
        std::sort(g.ctrl_buses.begin(), g.ctrl_buses.end());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("parse", e.what());
    }
    validate(g);
    return g;
}

inline nlohmann::json to_json(const GridCase& g) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(g.B.rows()));
    for (Eigen::Index r = 0; r < g.B.rows(); ++r)
        for (Eigen::Index c = 0; c < g.B.cols(); ++c)
            rows[static_cast<std::size_t>(r)].push_back(g.B(r, c));
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); };
    return {{"name", g.name},
            {"provenance", g.provenance},
            {"base_MVA", g.base_MVA},
            {"n_loads", g.n_loads},
            {"n_gens", g.n_gens},
            {"load_bus_ids", g.load_bus_ids},
            {"B", rows},
            {"V_G", vec(g.V_G)},
            {"Q_L_nominal", vec(g.Q_L_nominal)},
            {"q_a_max", vec(g.q_a_max)},
            {"q_d_max", vec(g.q_d_max)},
            {"ctrl_buses", g.ctrl_bus_ids()}};
}

inline GridCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open case file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("parse", path.string() + ": " + e.what());
    }
    try {
        return parse_case(j);
    } catch (const ValidationError& e) {
        throw ValidationError(e.invariant(), path.string() + ": " +
                                                 std::string(e.what()).substr(
                                                     e.invariant().size() + 2));
    }
}

}  // namespace gridsec
