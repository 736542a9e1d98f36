#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("gridsec_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

CliRun cli(const std::string& args) {
    const fs::path out = scratch() / "stdout.txt";
    const fs::path err = scratch() / "stderr.txt";
    const std::string cmd = std::string("\"") + GRIDSEC_CLI + "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string data(const char* file) { return "\"" + oracle::data(file) + "\""; }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(text);
    for (std::string line; std::getline(ss, line);) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
}

}  // namespace

TEST(CliInspect, Ieee9) {
    const CliRun r = cli("inspect " + data("ieee9.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("loads (K)       6\n"), std::string::npos);
    EXPECT_NE(r.out.find("controlled (N)  4\n"), std::string::npos);
    const auto pos = r.out.find("delta_nominal");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_LT(std::stod(r.out.substr(pos + 13)), 1.0);
}

TEST(CliInspect, Ieee39) {
    const CliRun r = cli("inspect " + data("ieee39.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("loads (K)       29\n"), std::string::npos);
    EXPECT_NE(r.out.find("controlled (N)  7\n"), std::string::npos);
}

TEST(CliExitCodes, ValidationCapacityAndIo) {
    const fs::path bad = scratch() / "bad.json";
    std::ofstream(bad) << "{\"n_loads\": 2,";
    CliRun r = cli("inspect \"" + bad.string() + "\"");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("parse"), std::string::npos);

    r = cli("inspect \"" + (scratch() / "missing.json").string() + "\"");
    EXPECT_EQ(r.code, 3);

    r = cli("solve " + data("ieee39.json") + " cbbi --gamma-a 0 --gamma-d 0");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bpega"), std::string::npos);

    EXPECT_EQ(cli("solve " + data("ieee9.json") + " rd --gamma-a 0.75 --gamma-d 0.45").code, 1);
    EXPECT_EQ(cli("solve " + data("ieee9.json") + " nash").code, 1);
    EXPECT_EQ(cli("solve " + data("ieee9.json") + " cbbi --levels 1 3").code, 1);
    EXPECT_EQ(cli("solve " + data("ieee9.json") + " cbbi --no-such-flag").code, 1);
    EXPECT_EQ(cli("solve " + data("ieee9.json") + " cbbi --out /nonexistent/dir/x.json").code, 3);
}

TEST(CliSolve, CbbiCollapse) {
    const CliRun r = cli("solve " + data("ieee9.json") + " cbbi --gamma-a 0.1 --gamma-d 1.5 --levels 3 3");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["u_attacker"].get<double>(), 1.0);
    EXPECT_EQ(j["method"], "cbbi");
    EXPECT_EQ(j["defense"]["levels"], std::vector<int>(6, 0));
    EXPECT_EQ(j["attack"]["level_count"], 3);
}

TEST(CliSolve, RobustDefenseHasNoMismatch) {
    const CliRun r = cli("solve " + data("ieee9.json") + " rd --gamma-a-est 0 --gamma-a 0.75 --gamma-d 0.45");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["metadata"]["mu_rd"].get<double>(), 0.0);
    EXPECT_EQ(j["method"], "rd");
}

TEST(CliSolve, BpegaIsByteIdentical) {
    const fs::path a = scratch() / "a.json", b = scratch() / "b.json";
    const fs::path ta = scratch() / "a.csv", tb = scratch() / "b.csv";
    const std::string args = "solve " + data("ieee9.json") + " bpega --seed 7 --gamma-a 0.75 --gamma-d 0.75";
    ASSERT_EQ(cli(args + " --out \"" + a.string() + "\" --trace \"" + ta.string() + "\"").code, 0);
    ASSERT_EQ(cli(args + " --out \"" + b.string() + "\" --trace \"" + tb.string() + "\"").code, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_EQ(slurp(ta), slurp(tb));
    EXPECT_EQ(slurp(ta).rfind("generation,best_fit_a,best_fit_d,u_attacker_of_incumbent\n", 0), 0u);
    const auto j = nlohmann::json::parse(slurp(a));
    EXPECT_EQ(j["metadata"]["seed"], 7);
}

TEST(CliSolve, ResultRoundTrips) {
    const CliRun r = cli("solve " + data("ieee9.json") + " cbbi --gamma-a 0.6 --gamma-d 0.6");
    ASSERT_EQ(r.code, 0) << r.err;
    const gridsec::GridCase g = gridsec::load_case(oracle::data("ieee9.json"));
    const auto loaded = gridsec::equilibrium_from_json(nlohmann::json::parse(r.out), g);
    gridsec::GameConfig cfg;
    cfg.gamma_a = 0.6;
    cfg.gamma_d = 0.6;
    const auto direct = gridsec::solve_cbse(g, cfg);
    EXPECT_EQ(loaded.result.attack, direct.attack);
    EXPECT_EQ(loaded.result.defense, direct.defense);
    EXPECT_EQ(loaded.result.u_attacker, direct.u_attacker);
    EXPECT_EQ(loaded.config.gamma_a, 0.6);
}

TEST(CliSweep, RdGridMatchesReference) {
    const CliRun r = cli("sweep " + data("ieee9.json") +
                      " rd --gamma-a 0:0.075:1.5 --gamma-d 0.45,0.75,1.5 --gamma-a-est 0 --jobs 4");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(r.out);
    ASSERT_EQ(rows.size(), 64u);
    const auto& h = rows[0];
    EXPECT_EQ(h, (std::vector<std::string>{"gamma_a", "gamma_d", "gamma_a_est", "u_attacker", "u_defender",
                                           "cost_a", "cost_d", "a_vector", "d_vector", "method", "seed",
                                           "mu_rd", "overpayment", "error"}));

    // Reference rows come gamma_d major; the sweep is gamma_a major.
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> golden;
    const auto reference = parse_csv(slurp(std::string(GRIDSEC_GOLDEN_DIR) + "/rd_ieee9_gest0.csv"));
    for (std::size_t i = 1; i < reference.size(); ++i) golden[{reference[i][0], reference[i][1]}] = reference[i];
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const double ga = std::stod(row[0]), gd = std::stod(row[1]);
        EXPECT_NEAR(ga, 0.075 * static_cast<double>((i - 1) / 3), 1e-12);
        EXPECT_EQ(gd, (std::array{0.45, 0.75, 1.5}[(i - 1) % 3]));
        bool found = false;
        for (const auto& [key, g] : golden) {
            if (std::abs(std::stod(key.first) - ga) > 1e-12 || std::stod(key.second) != gd) continue;
            found = true;
            EXPECT_NEAR(std::stod(row[column(h, "u_defender")]), std::stod(g[2]), 1e-12);
            EXPECT_NEAR(std::stod(row[column(h, "mu_rd")]), std::stod(g[4]), 1e-9);
            EXPECT_EQ(row[column(h, "a_vector")], g[5]);
            EXPECT_EQ(row[column(h, "d_vector")], g[6]);
        }
        EXPECT_TRUE(found) << ga << ", " << gd;
        EXPECT_EQ(row[column(h, "error")], "");
    }
}

TEST(CliSweep, OverpaymentComparesDefenseLevelSums) {
    const std::string grid = " --gamma-a 0:0.15:1.5 --gamma-d 0.45,0.75,1.5";
    const CliRun rd = cli("sweep " + data("ieee9.json") + " rd" + grid + " --gamma-a-est 0");
    const CliRun cbbi = cli("sweep " + data("ieee9.json") + " cbbi" + grid);
    ASSERT_EQ(rd.code, 0) << rd.err;
    ASSERT_EQ(cbbi.code, 0) << cbbi.err;
    const auto r = parse_csv(rd.out), c = parse_csv(cbbi.out);
    ASSERT_EQ(r.size(), c.size());
    const auto level_sum = [](const std::string& v) {
        int total = 0;
        std::stringstream ss(v);
        for (std::string x; std::getline(ss, x, ';');) total += std::stoi(x);
        return total;
    };
    int idle = 0;
    for (std::size_t i = 1; i < r.size(); ++i) {
        const int rd_sum = level_sum(r[i][column(r[0], "d_vector")]);
        const int cbse_sum = level_sum(c[i][column(c[0], "d_vector")]);
        const std::string cell = r[i][column(r[0], "overpayment")];
        if (cbse_sum == 0) {
            ++idle;
            EXPECT_EQ(cell, "");
        } else {
            EXPECT_DOUBLE_EQ(std::stod(cell), static_cast<double>(rd_sum) / cbse_sum);
        }
    }
    EXPECT_LT(idle, static_cast<int>(r.size()) - 1);
}

TEST(CliSweep, EmptyGridGivesHeaderOnly) {
    const CliRun r = cli("sweep " + data("ieee9.json") + " cbbi --gamma-a 1:0.1:0 --gamma-d 0.5");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "gamma_a,gamma_d,gamma_a_est,u_attacker,u_defender,cost_a,cost_d,a_vector,d_vector,method,seed,error\n");
}

TEST(CliSweep, PointFailuresAreRecorded) {
    const CliRun r = cli("sweep " + data("ieee9.json") + " bpega --gamma-a 0.5,1 --gamma-d 0.5 --ga-pop 3 2");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(r.out);
    ASSERT_EQ(rows.size(), 3u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i][column(rows[0], "u_attacker")], "");
        EXPECT_NE(rows[i].back().find("S_a"), std::string::npos);
    }
}

TEST(CliSweep, JobsDoNotChangeOutput) {
    const std::string args = "sweep " + data("ieee9.json") + " cbbi --gamma-a 0:0.3:1.5 --gamma-d 0:0.3:1.5";
    const CliRun one = cli(args + " --jobs 1");
    const CliRun four = cli(args + " --jobs 4");
    ASSERT_EQ(one.code, 0) << one.err;
    EXPECT_EQ(one.out, four.out);
    EXPECT_EQ(parse_csv(one.out).size(), 37u);
}

TEST(CliUncertainty, ZeroSigmaAndSeededOutput) {
    const fs::path eq = scratch() / "eq.json";
    ASSERT_EQ(cli("solve " + data("ieee9.json") + " cbbi --gamma-a 0.75 --gamma-d 0.75 --out \"" + eq.string() + "\"").code,
              0);

    CliRun r = cli("uncertainty " + data("ieee9.json") + " \"" + eq.string() + "\" --sigma 0 --models 20");
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = parse_csv(r.out);
    ASSERT_EQ(rows.size(), 22u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"gamma_a", "gamma_d", "model", "mu_percent", "min", "q1", "median",
                                                 "q3", "max", "mean", "clip"}));
    for (std::size_t i = 1; i <= 20; ++i) EXPECT_EQ(std::stod(rows[i][3]), 0.0);
    EXPECT_EQ(rows[21][2], "summary");
    EXPECT_EQ(std::stod(rows[21][9]), 0.0);

    const std::string args = "uncertainty " + data("ieee9.json") + " \"" + eq.string() + "\" --seed 3";
    const CliRun a = cli(args), b = cli(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.out, r.out);
}

TEST(CliUncertainty, CaseMismatchFails) {
    const fs::path eq = scratch() / "eq9.json";
    ASSERT_EQ(cli("solve " + data("ieee9.json") + " cbbi --gamma-a 0.75 --gamma-d 0.75 --out \"" + eq.string() + "\"").code,
              0);
    const CliRun r = cli("uncertainty " + data("ieee39.json") + " \"" + eq.string() + "\"");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("case_mismatch"), std::string::npos);
}
