#include <doctest.h>

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "snfts/csv.hpp"
#include "snfts/simulate.hpp"
#include "snfts/sample.hpp"

#include "helpers.hpp"

namespace {

namespace fs = std::filesystem;

struct CliRun {
    int exit_code = -1;
    std::string output;
};

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "snfts_cli_tests";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string cache_flags() {
    // small shared table so CLI invocations stay fast
    return " --table-cache " + (work_dir() / "cache").string() + " --paths 20000 --steps 500";
}

CliRun run_cli(const std::string& args) {
    const fs::path out_file = work_dir() / "stdout.txt";
    const std::string cmd =
        std::string(SNFTS_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CliRun result;
    result.exit_code = WEXITSTATUS(raw);
    std::ifstream is(out_file);
    std::stringstream ss;
    ss << is.rdbuf();
    result.output = ss.str();
    return result;
}

fs::path write_constant_csv(const char* name, int n, int n_obs, double value,
                            std::uint64_t seed) {
    const fs::path path = work_dir() / name;
    std::ofstream os(path);
    snfts::write_curves_csv(os, testutil::make_constant_sample(n, n_obs, value, seed));
    return path;
}

} // namespace

TEST_CASE("test-one-sample exit codes: 0 fail-to-reject, 1 reject") {
    const auto zeros = write_constant_csv("zeros.csv", 40, 5, 0.0, 1);
    const auto twos = write_constant_csv("twos.csv", 40, 5, 2.0, 2);

    CliRun r = run_cli("test-one-sample --input " + zeros.string() + " --delta 1" + cache_flags());
    CHECK(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.output);
    CHECK(!j.at("reject").get<bool>());

    r = run_cli("test-one-sample --input " + twos.string() + " --delta 1" + cache_flags());
    CHECK(r.exit_code == 1);
    j = nlohmann::json::parse(r.output);
    CHECK(j.at("reject").get<bool>());
    CHECK(j.at("degenerate_normalizer").get<bool>());
    CHECK(j.at("statistic").get<double>() == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("identical files never reject in the two-sample test") {
    const auto a = write_constant_csv("same_a.csv", 30, 5, 1.5, 3);
    const CliRun r = run_cli("test-two-sample --input " + a.string() + " --input2 " + a.string() +
                             " --delta 0.5" + cache_flags());
    CHECK(r.exit_code == 0);
    const nlohmann::json j = nlohmann::json::parse(r.output);
    CHECK(j.at("statistic").get<double>() == 0.0);
}

TEST_CASE("changepoint with --khat=auto reports the constructed jump index") {
    const fs::path path = work_dir() / "step.csv";
    {
        std::ofstream os(path);
        snfts::write_curves_csv(os, testutil::make_step_sample(100, 6, 3.0, 40, 4));
    }
    const fs::path profile = work_dir() / "profile.csv";
    const CliRun r = run_cli("test-changepoint --input " + path.string() +
                             " --delta 8 --knots 1 --profile " + profile.string() + cache_flags());
    CHECK(r.exit_code == 1); // h^2 = 9 > 8
    const nlohmann::json j = nlohmann::json::parse(r.output);
    CHECK(j.at("change_points")[0].get<int>() == 40);
    // profile CSV: header + one row per scanned k
    std::ifstream is(profile);
    std::string line;
    std::getline(is, line);
    CHECK(line == "k,objective");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 81);
}

TEST_CASE("invalid change point fractions exit with code 2 and a message") {
    const auto a = write_constant_csv("const_m.csv", 40, 5, 1.0, 5);
    const CliRun r = run_cli("test-multi-changepoint --input " + a.string() +
                             " --delta 1 --thetas 0.4,1.4" + cache_flags());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("delta-sweep prints the True/False grid, monotone in delta") {
    const auto twos = write_constant_csv("twos_sweep.csv", 40, 5, 2.0, 6);
    const CliRun r = run_cli("delta-sweep --input " + twos.string() + " --deltas 3,4,5" +
                             cache_flags());
    REQUIRE(r.exit_code == 0);
    std::istringstream is(r.output);
    std::string line;
    std::getline(is, line);
    CHECK(line == "delta,q90,q95,q99");
    std::getline(is, line);
    CHECK(line == "3,True,True,True");
    std::getline(is, line);
    CHECK(line == "4,False,False,False");
    std::getline(is, line);
    CHECK(line == "5,False,False,False");
}

TEST_CASE("reshape converts wide grids to the long format") {
    const fs::path wide = work_dir() / "wide.csv";
    {
        std::ofstream os(wide);
        os << "curve_id,0.2,0.8\nc1,1.0,2.0\nc2,3.0,4.0\n";
    }
    const CliRun r = run_cli("reshape --input " + wide.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("curve_id,x,y") == 0);
    CHECK(r.output.find("c2,0.80000000000000004,4") != std::string::npos);
}

TEST_CASE("quantile table generation is reproducible") {
    const fs::path t1 = work_dir() / "t1.snpt";
    const fs::path t2 = work_dir() / "t2.snpt";
    const std::string flags = " --epsilon 0.1 --kind integral --paths 5000 --steps 200 --seed 9";
    CHECK(run_cli("quantiles --out " + t1.string() + flags).exit_code == 0);
    CHECK(run_cli("quantiles --out " + t2.string() + flags).exit_code == 0);
    std::ifstream a(t1, std::ios::binary), b(t2, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
}

TEST_CASE("simulate runs a study config end to end") {
    const fs::path config = work_dir() / "study.json";
    {
        std::ofstream os(config);
        os << R"({
  "seed": 11,
  "replications": 5,
  "table_paths": 5000,
  "table_steps": 200,
  "table_seed": 9,
  "studies": [
    {"n": 60, "scheme": "S1", "law": "normal",
     "scenario": {"type": "one-sample-mean", "a": 1.0},
     "delta": 1.0, "alphas": [0.05]}
  ]
})";
    }
    const fs::path out = work_dir() / "study.csv";
    const CliRun r = run_cli("simulate --study-config " + config.string() + " --out " +
                             out.string() + " --table-cache " + (work_dir() / "cache").string());
    CHECK(r.exit_code == 0);
    std::ifstream is(out);
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "scheme,law,scenario,a,delta,alpha,epsilon,kind,n,replications,reject_freq,failures");
    std::string row;
    std::getline(is, row);
    CHECK(row.find("S1,normal,one-sample-mean") == 0);
}

TEST_CASE("missing input files exit with code 2") {
    const CliRun r = run_cli("test-one-sample --input /nonexistent.csv --delta 1" + cache_flags());
    CHECK(r.exit_code == 2);
}

TEST_CASE("a baseline file recenters the one-sample test") {
    const fs::path data = work_dir() / "shifted.csv";
    {
        std::ofstream os(data);
        snfts::write_curves_csv(os, testutil::make_constant_sample(40, 5, 3.0, 12));
    }
    const fs::path baseline = work_dir() / "baseline.csv";
    {
        std::ofstream os(baseline);
        os << "x,y\n0.0,3.0\n1.0,3.0\n";
    }
    const CliRun r = run_cli("test-one-sample --input " + data.string() + " --m0 " +
                             baseline.string() + " --delta 1" + cache_flags());
    CHECK(r.exit_code == 0);
    const nlohmann::json j = nlohmann::json::parse(r.output);
    CHECK(j.at("statistic").get<double>() == 0.0);
}

TEST_SUITE("slow") {

TEST_CASE("strong one-sample effects reject through the CLI in most seeds") {
    int rejects = 0;
    const int runs = 10;
    for (int s = 0; s < runs; ++s) {
        snfts::DgpConfig dgp;
        dgp.n = 400;
        dgp.scheme = snfts::Scheme::S2;
        dgp.seed = 500 + static_cast<std::uint64_t>(s);
        dgp.scenario = snfts::Scenario::one_sample_mean(2.5);
        const fs::path data = work_dir() / ("strong" + std::to_string(s) + ".csv");
        {
            std::ofstream os(data);
            snfts::write_curves_csv(os, snfts::generate_sample(dgp));
        }
        const CliRun r =
            run_cli("test-one-sample --input " + data.string() + " --delta 1" + cache_flags());
        REQUIRE(r.exit_code != 2);
        rejects += r.exit_code;
    }
    CHECK(rejects >= 8); // expect rejection in at least 80% of seeds
}

TEST_CASE("a 709-curve, 29-point workflow finishes well under a minute") {
    // shape of the motivating sparse dataset: n = 709 curves on 29 points
    const fs::path data = work_dir() / "large.csv";
    {
        std::ofstream os(data);
        snfts::write_curves_csv(
            os, testutil::make_grid_sample(709, 29, [](int i, double x) {
                const double bump = i > 404 ? 1.5 : 0.0;
                return std::sin(6.28318530717958647 * x) + bump +
                       0.3 * std::cos(31.0 * x * i) /* deterministic pseudo-noise */;
            }));
    }
    const auto t0 = std::chrono::steady_clock::now();
    const CliRun r = run_cli("delta-sweep --test changepoint --input " + data.string() +
                             " --deltas 2.0,2.9,3.4 --khat auto" + cache_flags());
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("delta,q90,q95,q99") == 0);
    CHECK(seconds < 60.0);
}

} // TEST_SUITE("slow")
