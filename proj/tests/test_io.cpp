#include <doctest.h>

#include <cmath>
#include <sstream>

#include "snfts/csv.hpp"
#include "snfts/reporting.hpp"
#include "snfts/simulate.hpp"
#include "snfts/testing.hpp"

#include "helpers.hpp"

using namespace snfts;

TEST_CASE("long-format ingestion groups by curve in order of first appearance") {
    std::istringstream is(
        "curve_id,x,y\n"
        "b,0.1,1.0\n"
        "b,0.9,2.0\n"
        "a,0.5,3.0\n"
        "b,0.4,4.0\n"
        "a,0.2,5.0\n");
    const LoadedCurves loaded = read_curves_csv(is);
    CHECK(!loaded.sample2);
    REQUIRE(loaded.sample1.n() == 2);
    CHECK(loaded.sample1.curve(0).n_obs() == 3); // 'b' appeared first
    CHECK(loaded.sample1.curve(1).n_obs() == 2);
    CHECK(loaded.sample1.curve(0).points[0].y == 1.0);
}

TEST_CASE("a time column overrides first-appearance order") {
    std::istringstream is(
        "curve_id,x,y,time\n"
        "late,0.5,1.0,7\n"
        "early,0.5,2.0,3\n");
    const LoadedCurves loaded = read_curves_csv(is);
    REQUIRE(loaded.sample1.n() == 2);
    CHECK(loaded.sample1.curve(0).points[0].y == 2.0); // 'early' sorts first
}

TEST_CASE("column order in the header is free") {
    std::istringstream is(
        "y,curve_id,x\n"
        "5.5,1,0.25\n");
    const LoadedCurves loaded = read_curves_csv(is);
    CHECK(loaded.sample1.curve(0).points[0].x == 0.25);
    CHECK(loaded.sample1.curve(0).points[0].y == 5.5);
}

TEST_CASE("a sample_id column splits two samples by first appearance") {
    std::istringstream is(
        "curve_id,x,y,sample_id\n"
        "1,0.1,1.0,treatment\n"
        "1,0.2,2.0,control\n"
        "2,0.3,3.0,treatment\n"
        "2,0.4,4.0,control\n");
    const LoadedCurves loaded = read_curves_csv(is);
    REQUIRE(loaded.sample2.has_value());
    CHECK(loaded.sample1.n() == 2);
    CHECK(loaded.sample2->n() == 2);
    CHECK(loaded.sample1.curve(0).points[0].y == 1.0); // treatment appeared first
    CHECK(loaded.sample2->curve(0).points[0].y == 2.0);
}

TEST_CASE("malformed input names the offending line") {
    std::istringstream missing_header("x,y\n0.1,1\n");
    CHECK_THROWS_AS(read_curves_csv(missing_header), CsvError);

    std::istringstream bad_cell(
        "curve_id,x,y\n"
        "1,0.1,1.0\n"
        "1,zzz,2.0\n");
    CHECK_THROWS_WITH_AS(read_curves_csv(bad_cell), doctest::Contains("line 3"), CsvError);

    std::istringstream short_row(
        "curve_id,x,y\n"
        "1,0.1\n");
    CHECK_THROWS_WITH_AS(read_curves_csv(short_row), doctest::Contains("line 2"), CsvError);

    std::istringstream out_of_range(
        "curve_id,x,y\n"
        "1,0.5,1.0\n"
        "1,1.5,2.0\n");
    CHECK_THROWS_WITH_AS(read_curves_csv(out_of_range), doctest::Contains("line 3"), CsvError);
}

TEST_CASE("the rescale flag min-max rescales x to the unit interval") {
    std::istringstream is(
        "curve_id,x,y\n"
        "1,0.6,1.0\n"
        "1,1.3,2.0\n"
        "1,0.95,3.0\n");
    const LoadedCurves loaded = read_curves_csv(is, /*rescale_x=*/true);
    CHECK(loaded.rescaled);
    CHECK(loaded.x_min == 0.6);
    CHECK(loaded.x_max == 1.3);
    CHECK(loaded.sample1.curve(0).points[0].x == 0.0);
    CHECK(loaded.sample1.curve(0).points[1].x == 1.0);
    CHECK(loaded.sample1.curve(0).points[2].x == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("export and re-ingestion reproduce the test statistic bit-exactly") {
    DgpConfig dgp;
    dgp.n = 40;
    dgp.scheme = Scheme::S2;
    dgp.seed = 77;
    dgp.scenario = Scenario::one_sample_mean(1.0);
    const FunctionalSample sample = generate_sample(dgp);

    std::stringstream buffer;
    write_curves_csv(buffer, sample);
    const LoadedCurves loaded = read_curves_csv(buffer);

    const SplineSpec sp{4, 2};
    const StatCurve a = one_sample_stat_curve(sample, 0.1, sp);
    const StatCurve b = one_sample_stat_curve(loaded.sample1, 0.1, sp);
    CHECK(a.statistic == b.statistic);
    CHECK(a.normalizer(NormalizerKind::Integral) == b.normalizer(NormalizerKind::Integral));
}

TEST_CASE("wide-format grids reshape to long format") {
    std::istringstream is(
        "curve_id,0.1,0.5,0.9\n"
        "c1,1.0,2.0,3.0\n"
        "c2,4.0,,6.0\n");
    std::ostringstream os;
    reshape_wide_to_long(is, os);
    std::istringstream back(os.str());
    const LoadedCurves loaded = read_curves_csv(back);
    REQUIRE(loaded.sample1.n() == 2);
    CHECK(loaded.sample1.curve(0).n_obs() == 3);
    CHECK(loaded.sample1.curve(1).n_obs() == 2); // empty cell skipped
    CHECK(loaded.sample1.curve(1).points[1].x == 0.9);
}

TEST_CASE("baseline files interpolate piecewise linearly") {
    const auto path = std::filesystem::temp_directory_path() / "snfts_baseline.csv";
    {
        std::ofstream os(path);
        os << "x,y\n0.0,1.0\n0.5,2.0\n1.0,0.0\n";
    }
    const auto baseline = read_baseline_csv(path);
    CHECK(baseline(0.0) == 1.0);
    CHECK(baseline(0.25) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(baseline(0.75) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(baseline(2.0) == 0.0); // clamped
    std::filesystem::remove(path);
}

TEST_CASE("report JSON carries every decision field") {
    const auto sample = testutil::make_constant_sample(40, 5, 2.0, 83);
    PivotalTable table;
    table.config.epsilon = 0.1;
    table.config.kind = NormalizerKind::Integral;
    table.sorted_samples = {-1.0, 0.0, 1.0, 2.0, 3.0};
    TestSpec spec;
    spec.delta = 1.0;
    spec.spline = SplineSpec{4, 1};
    const TestReport report = one_sample_test(sample, spec, table);
    const nlohmann::json j = report_to_json(report);
    CHECK(j.at("family") == "one-sample");
    CHECK(j.at("statistic").get<double>() == report.statistic);
    CHECK(j.at("normalizer").get<double>() == 0.0);
    CHECK(j.at("degenerate_normalizer").get<bool>());
    CHECK(j.at("reject").get<bool>());
    CHECK(j.at("threshold").get<double>() == report.threshold);
    CHECK(j.at("normalizer_kind") == "integral");
    CHECK(j.at("spline").at("order") == 4);
    CHECK(j.at("n") == 40);
}

TEST_CASE("study CSV export has one row per grid cell") {
    StudyConfig sc;
    sc.dgp.n = 60;
    sc.dgp.scheme = Scheme::S1;
    sc.dgp.scenario = Scenario::one_sample_mean(1.0);
    sc.dgp.seed = 5;
    sc.alphas = {0.05, 0.10};
    sc.replications = 5;
    PivotalConfig pc;
    pc.n_paths = 2000;
    pc.n_steps = 200;
    pc.seed = 1;
    std::vector<PivotalTable> tables{simulate_ratio_samples(pc)};
    const StudyResult r = rejection_study(sc, tables, 1);
    std::ostringstream os;
    const StudyResult results[1] = {r};
    write_study_csv(os, results);
    const std::string text = os.str();
    CHECK(text.find("scheme,law,scenario,a,delta,alpha,epsilon,kind,n,replications,reject_freq,"
                     "failures") == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3); // header + 2 alphas
    CHECK(text.find("one-sample-mean") != std::string::npos);
}
