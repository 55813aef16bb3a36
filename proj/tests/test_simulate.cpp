#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "snfts/simulate.hpp"

#include "helpers.hpp"

using namespace snfts;

TEST_CASE("the one-sample mean has squared norm a") {
    for (const double a : {1.0, 2.5}) {
        const double norm = testutil::riemann_01(
            [a](double x) { return a * mean_shape(x) * mean_shape(x); });
        CHECK(std::abs(norm - a) < 1e-6);
    }
}

TEST_CASE("both jump shapes have squared norm a") {
    for (const double a : {0.5, 1.0, 2.0}) {
        const Jump flat{0.4, a, false};
        const Jump bump{0.4, a, true};
        const double n1 = testutil::riemann_01(
            [&](double x) { return jump_value(flat, x) * jump_value(flat, x); });
        const double n2 = testutil::riemann_01(
            [&](double x) { return jump_value(bump, x) * jump_value(bump, x); });
        CHECK(std::abs(n1 - a) < 1e-6);
        CHECK(std::abs(n2 - a) < 1e-6);
    }
}

TEST_CASE("the two-sample mean difference has squared norm a") {
    const double a = 1.7;
    const double slope = std::sqrt(3.0 * a);
    const double norm = testutil::riemann_01([&](double x) { return slope * slope * x * x; });
    CHECK(std::abs(norm - a) < 1e-6);
}

TEST_CASE("diagnostics mode: zero effect, zero scores, zero noise gives zero data") {
    DgpConfig dgp;
    dgp.n = 20;
    dgp.scheme = Scheme::S1;
    dgp.seed = 5;
    dgp.scenario = Scenario::one_sample_mean(0.0);
    dgp.sigma = 0.0;
    dgp.scores_enabled = false;
    const FunctionalSample sample = generate_sample(dgp);
    for (const auto& curve : sample.curves())
        for (const auto& p : curve.points) CHECK(p.y == 0.0);
}

TEST_CASE("MA(1) scores are stationary with unit variance and autocorrelation 0.48") {
    const int n = 100000;
    for (const ScoreLaw law : {ScoreLaw::Normal, ScoreLaw::Uniform, ScoreLaw::Laplace}) {
        const std::vector<double> scores = ma1_score_sample(n, law, 7);
        for (int k = 0; k < kScoreComponents; ++k) {
            double mean = 0.0;
            for (int t = 0; t < n; ++t) mean += scores[static_cast<std::size_t>(t) * 4 + k];
            mean /= n;
            double var = 0.0, cov = 0.0;
            for (int t = 0; t < n; ++t) {
                const double v = scores[static_cast<std::size_t>(t) * 4 + k] - mean;
                var += v * v;
                if (t > 0) cov += v * (scores[static_cast<std::size_t>(t - 1) * 4 + k] - mean);
            }
            var /= n;
            cov /= (n - 1);
            CHECK(std::abs(var - 1.0) < 0.02);
            CHECK(std::abs(cov / var - 0.48) < 0.02);
        }
    }
}

TEST_CASE("observation schemes are ordered sparse to dense") {
    for (const int n : {100, 200, 400}) {
        double prev = 0.0;
        for (const Scheme s : {Scheme::S1, Scheme::S2, Scheme::S3, Scheme::S4}) {
            const auto [lo, hi] = scheme_support(s, n);
            const double mean = 0.5 * (lo + hi);
            CHECK(mean > prev);
            CHECK(lo >= 1);
            prev = mean;
        }
    }
    // S2 at n = 400: floor(2 * 400^0.2) = 6 .. floor(4 * 400^0.2) = 13
    const auto [lo, hi] = scheme_support(Scheme::S2, 400);
    CHECK(lo == 6);
    CHECK(hi == 13);
    CHECK_THROWS_AS(scheme_support(Scheme::S4, 7), DomainError);
}

TEST_CASE("two-sample sizes follow n2 = 1.2 n") {
    CHECK(two_sample_n2(400) == 480);
    CHECK(two_sample_n2(100) == 120);
    DgpConfig dgp;
    dgp.n = 50;
    dgp.scheme = Scheme::S1;
    dgp.seed = 11;
    dgp.scenario = Scenario::two_sample_means(1.0);
    const auto [s1, s2] = generate_two_samples(dgp);
    CHECK(s1.n() == 50);
    CHECK(s2.n() == 60);
}

TEST_CASE("generation is deterministic in the seed") {
    DgpConfig dgp;
    dgp.n = 30;
    dgp.scheme = Scheme::S2;
    dgp.seed = 13;
    dgp.scenario = Scenario::jump_quadratic(1.0, 0.4);
    const FunctionalSample a = generate_sample(dgp);
    const FunctionalSample b = generate_sample(dgp);
    REQUIRE(a.n() == b.n());
    for (int i = 0; i < a.n(); ++i) {
        REQUIRE(a.curve(i).n_obs() == b.curve(i).n_obs());
        for (int j = 0; j < a.curve(i).n_obs(); ++j) {
            CHECK(a.curve(i).points[static_cast<std::size_t>(j)].x ==
                  b.curve(i).points[static_cast<std::size_t>(j)].x);
            CHECK(a.curve(i).points[static_cast<std::size_t>(j)].y ==
                  b.curve(i).points[static_cast<std::size_t>(j)].y);
        }
    }
    dgp.seed = 14;
    const FunctionalSample c = generate_sample(dgp);
    CHECK(c.curve(0).points[0].y != a.curve(0).points[0].y);
}

TEST_CASE("multi-jump scenario adds the jumps cumulatively") {
    DgpConfig dgp;
    dgp.n = 30;
    dgp.scheme = Scheme::S1;
    dgp.seed = 17;
    dgp.scenario = Scenario::multi_jump({{0.3, 1.0, false}, {0.7, 4.0, false}});
    dgp.sigma = 0.0;
    dgp.scores_enabled = false;
    const FunctionalSample sample = generate_sample(dgp);
    // segment means: shape, shape + 1, shape + 1 + 2
    const auto value_at = [&](int i) {
        const auto& p = sample.curve(i).points[0];
        return p.y - mean_shape(p.x);
    };
    CHECK(value_at(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(value_at(9) == doctest::Approx(1.0).epsilon(1e-12));  // after floor(0.3*30) = 9
    CHECK(value_at(21) == doctest::Approx(3.0).epsilon(1e-12)); // after floor(0.7*30) = 21
    CHECK(sample.curve(21).points[0].y - mean_shape(sample.curve(21).points[0].x) ==
          doctest::Approx(3.0).epsilon(1e-12));
}

namespace {

PivotalTable study_table(double eps, NormalizerKind kind, std::uint64_t seed) {
    PivotalConfig pc;
    pc.epsilon = eps;
    pc.kind = kind;
    pc.n_paths = 20000;
    pc.n_steps = 500;
    pc.seed = seed;
    return simulate_ratio_samples(pc, 2);
}

} // namespace

TEST_CASE("studies are bit-identical across reruns and thread counts") {
    StudyConfig sc;
    sc.dgp.n = 60;
    sc.dgp.scheme = Scheme::S1;
    sc.dgp.scenario = Scenario::one_sample_mean(1.0);
    sc.dgp.seed = 404;
    sc.delta = 1.0;
    sc.alphas = {0.05, 0.10};
    sc.kinds = {NormalizerKind::Integral, NormalizerKind::Range};
    sc.replications = 40;

    std::vector<PivotalTable> tables;
    tables.push_back(study_table(0.1, NormalizerKind::Integral, 1));
    tables.push_back(study_table(0.1, NormalizerKind::Range, 1));

    const StudyResult a = rejection_study(sc, tables, 1);
    const StudyResult b = rejection_study(sc, tables, 2);
    const StudyResult c = rejection_study(sc, tables, 2);
    CHECK(a.reject_freq == b.reject_freq);
    CHECK(a.reject_freq == c.reject_freq);
    CHECK(a.failures == b.failures);
    CHECK(a.replications_done == b.replications_done);
}

TEST_CASE("per-replication failures are counted, not fatal") {
    StudyConfig sc;
    sc.dgp.n = 20;
    sc.dgp.scheme = Scheme::S1;
    sc.dgp.scenario = Scenario::one_sample_mean(1.0);
    sc.dgp.seed = 21;
    sc.replications = 3;
    sc.spline = SplineSpec{4, 60}; // far more basis functions than observations
    std::vector<PivotalTable> tables;
    tables.push_back(study_table(0.1, NormalizerKind::Integral, 2));
    const StudyResult r = rejection_study(sc, tables, 1);
    CHECK(r.failures == 3);
    CHECK(r.replications_done == 0);
}

TEST_CASE("change point studies record the localized fraction") {
    StudyConfig sc;
    sc.dgp.n = 100;
    sc.dgp.scheme = Scheme::S1;
    sc.dgp.scenario = Scenario::jump_constant(2.5, 0.4);
    sc.dgp.seed = 23;
    sc.replications = 10;
    std::vector<PivotalTable> tables;
    tables.push_back(study_table(0.1, NormalizerKind::Integral, 3));
    const StudyResult r = rejection_study(sc, tables, 2);
    CHECK(r.khat_fracs.size() == 10);
    for (const double f : r.khat_fracs) {
        CHECK(f > 0.1);
        CHECK(f < 0.9);
    }
}

TEST_SUITE("slow") {

TEST_CASE("boundary size stays in the 3-sigma band for every scheme and score law") {
    std::vector<PivotalTable> tables;
    {
        PivotalConfig pc;
        pc.epsilon = 0.1;
        pc.n_paths = 200000;
        pc.n_steps = 2000;
        pc.seed = 2027;
        tables.push_back(simulate_ratio_samples(pc, 0));
    }
    const int reps = 500;
    const double band = 3.0 * std::sqrt(0.05 * 0.95 / reps);
    for (const Scheme scheme : {Scheme::S1, Scheme::S2, Scheme::S3, Scheme::S4}) {
        for (const ScoreLaw law : {ScoreLaw::Normal, ScoreLaw::Uniform, ScoreLaw::Laplace}) {
            StudyConfig sc;
            sc.dgp.n = 400;
            sc.dgp.scheme = scheme;
            sc.dgp.law = law;
            sc.dgp.scenario = Scenario::one_sample_mean(1.0);
            sc.dgp.seed = 7000 + 10 * static_cast<std::uint64_t>(scheme) +
                          static_cast<std::uint64_t>(law);
            sc.replications = reps;
            const StudyResult r = rejection_study(sc, tables, 0);
            INFO("scheme " << to_string(scheme) << " law " << to_string(law) << " size "
                           << r.reject_freq[0][0]);
            CHECK(r.failures == 0);
            CHECK(r.reject_freq[0][0] >= 0.05 - band);
            CHECK(r.reject_freq[0][0] <= 0.05 + band);
        }
    }
}

TEST_CASE("empirical power is nondecreasing in the effect size") {
    std::vector<PivotalTable> tables;
    {
        PivotalConfig pc;
        pc.epsilon = 0.1;
        pc.n_paths = 200000;
        pc.n_steps = 2000;
        pc.seed = 2027;
        tables.push_back(simulate_ratio_samples(pc, 0));
    }
    std::vector<double> power;
    for (const double a : {0.5, 1.0, 1.5, 2.0, 2.5}) {
        StudyConfig sc;
        sc.dgp.n = 200;
        sc.dgp.scheme = Scheme::S2;
        sc.dgp.scenario = Scenario::one_sample_mean(a);
        sc.dgp.seed = 9000;
        sc.replications = 500;
        power.push_back(rejection_study(sc, tables, 0).reject_freq[0][0]);
    }
    int inversions = 0;
    for (std::size_t i = 1; i < power.size(); ++i) {
        if (power[i] < power[i - 1]) {
            ++inversions;
            CHECK(power[i - 1] - power[i] <= 0.02);
        }
    }
    CHECK(inversions <= 1);
    CHECK(power.back() > power.front());
}

} // TEST_SUITE("slow")
