#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snfts/changepoint.hpp"
#include "snfts/errors.hpp"
#include "snfts/parallel.hpp"
#include "snfts/pivotal.hpp"
#include "snfts/rng.hpp"
#include "snfts/sample.hpp"
#include "snfts/testing.hpp"

namespace snfts {

/// Per-curve observation-count laws, sparse to dense: N_i is discrete
/// uniform on S1 {3..6}, S2 {floor(2n^(1/5))..floor(4n^(1/5))},
/// S3 {floor(n^(1/2))..floor(2n^(1/2))}, S4 {floor(n/8)..floor(n/4)}.
enum class Scheme { S1, S2, S3, S4 };

/// Score innovation law, standardized to mean 0 and variance 1.
enum class ScoreLaw { Normal, Uniform, Laplace };

enum class ScenarioType { OneSampleMean, TwoSampleMeans, JumpConstant, JumpQuadratic, MultiJump };

/// One injected mean jump: at curve floor(frac*n), of squared L2 norm a,
/// either flat sqrt(a) or the bump 4 sqrt(5a) (x - 1/2)^2.
struct Jump {
    double frac = 0.4;
    double a = 1.0;
    bool quadratic = false;
};

struct Scenario {
    ScenarioType type = ScenarioType::OneSampleMean;
    double a = 1.0;    // effect size (squared L2 norm of the relevant quantity)
    double frac = 0.4; // change point fraction for the single-jump types
    std::vector<Jump> jumps;

    static Scenario one_sample_mean(double a) { return {ScenarioType::OneSampleMean, a, 0.4, {}}; }
    static Scenario two_sample_means(double a) { return {ScenarioType::TwoSampleMeans, a, 0.4, {}}; }
    static Scenario jump_constant(double a, double frac = 0.4) {
        return {ScenarioType::JumpConstant, a, frac, {}};
    }
    static Scenario jump_quadratic(double a, double frac = 0.4) {
        return {ScenarioType::JumpQuadratic, a, frac, {}};
    }
    static Scenario multi_jump(std::vector<Jump> jumps) {
        Scenario s{ScenarioType::MultiJump, 0.0, 0.4, std::move(jumps)};
        for (const auto& j : s.jumps) s.a += j.a;
        return s;
    }
};

/// Complete description of one simulation draw.
struct DgpConfig {
    int n = 400;
    Scheme scheme = Scheme::S2;
    ScoreLaw law = ScoreLaw::Normal;
    Scenario scenario{};
    double sigma = 1.0;         // noise scale, sigma(x) constant
    bool scores_enabled = true; // false: diagnostics mode, lambda forced to 0
    std::uint64_t seed = 0;
};

inline const char* to_string(Scheme s) {
    switch (s) {
        case Scheme::S1: return "S1";
        case Scheme::S2: return "S2";
        case Scheme::S3: return "S3";
        case Scheme::S4: return "S4";
    }
    return "S1";
}

inline Scheme scheme_from_string(const std::string& name) {
    if (name == "S1" || name == "s1") return Scheme::S1;
    if (name == "S2" || name == "s2") return Scheme::S2;
    if (name == "S3" || name == "s3") return Scheme::S3;
    if (name == "S4" || name == "s4") return Scheme::S4;
    throw DomainError("unknown sampling scheme '" + name + "' (expected S1|S2|S3|S4)");
}

inline const char* to_string(ScoreLaw l) {
    switch (l) {
        case ScoreLaw::Normal: return "normal";
        case ScoreLaw::Uniform: return "uniform";
        case ScoreLaw::Laplace: return "laplace";
    }
    return "normal";
}

inline ScoreLaw score_law_from_string(const std::string& name) {
    if (name == "normal") return ScoreLaw::Normal;
    if (name == "uniform") return ScoreLaw::Uniform;
    if (name == "laplace") return ScoreLaw::Laplace;
    throw DomainError("unknown score law '" + name + "' (expected normal|uniform|laplace)");
}

inline const char* to_string(ScenarioType t) {
    switch (t) {
        case ScenarioType::OneSampleMean: return "one-sample-mean";
        case ScenarioType::TwoSampleMeans: return "two-sample-means";
        case ScenarioType::JumpConstant: return "jump-constant";
        case ScenarioType::JumpQuadratic: return "jump-quadratic";
        case ScenarioType::MultiJump: return "multi-jump";
    }
    return "one-sample-mean";
}

inline constexpr double kPi = 3.14159265358979323846;

/// The common mean shape c x sin(pi x) with c = 2 sqrt(3) pi / sqrt(2 pi^2 - 3),
/// normalized so its squared L2 norm is exactly 1.
inline double mean_shape(double x) {
    const double c = 2.0 * std::sqrt(3.0) * kPi / std::sqrt(2.0 * kPi * kPi - 3.0);
    return c * x * std::sin(kPi * x);
}

/// Jump functions of squared norm a: type (i) flat, type (ii) quadratic bump.
inline double jump_value(const Jump& jump, double x) {
    if (!jump.quadratic) return std::sqrt(jump.a);
    const double u = x - 0.5;
    return 4.0 * std::sqrt(5.0 * jump.a) * u * u;
}

/// Support {lo..hi} of N_i under the scheme; empty support is a domain error.
inline std::pair<int, int> scheme_support(Scheme scheme, int n) {
    int lo = 0, hi = 0;
    switch (scheme) {
        case Scheme::S1:
            lo = 3;
            hi = 6;
            break;
        case Scheme::S2:
            lo = detail::floor_index(2.0 * std::pow(n, 0.2));
            hi = detail::floor_index(4.0 * std::pow(n, 0.2));
            break;
        case Scheme::S3:
            lo = detail::floor_index(std::sqrt(static_cast<double>(n)));
            hi = detail::floor_index(2.0 * std::sqrt(static_cast<double>(n)));
            break;
        case Scheme::S4:
            lo = n / 8;
            hi = n / 4;
            break;
    }
    if (lo < 1 || hi < lo)
        throw DomainError(std::string("sampling scheme ") + to_string(scheme) +
                          " has empty support at n = " + std::to_string(n));
    return {lo, hi};
}

inline constexpr int kScoreComponents = 4;

namespace detail {

inline double draw_score_innovation(Rng& rng, ScoreLaw law) {
    switch (law) {
        case ScoreLaw::Normal: return rng.normal();
        case ScoreLaw::Uniform: return rng.uniform_unit_var();
        case ScoreLaw::Laplace: return rng.laplace_unit_var();
    }
    return rng.normal();
}

/// MA(1) scores xi_tk = 0.8 zeta_tk + 0.6 zeta_{t-1,k}, row-major by curve,
/// with one burn-in innovation per component so xi_1k is already stationary
/// (its variance is 0.8^2 + 0.6^2 = 1 exactly).
inline std::vector<double> draw_ma1_scores(Rng& rng, int n, ScoreLaw law) {
    std::vector<double> scores(static_cast<std::size_t>(n) * kScoreComponents);
    double prev[kScoreComponents];
    for (int k = 0; k < kScoreComponents; ++k) prev[k] = draw_score_innovation(rng, law);
    for (int t = 0; t < n; ++t) {
        for (int k = 0; k < kScoreComponents; ++k) {
            const double z = draw_score_innovation(rng, law);
            scores[static_cast<std::size_t>(t) * kScoreComponents + k] = 0.8 * z + 0.6 * prev[k];
            prev[k] = z;
        }
    }
    return scores;
}

/// Karhunen-Loeve draw shared by all scenarios: eigenvalues 2^{1-k} for
/// k <= 4, eigenfunctions sqrt(2) sin(2k pi x) / sqrt(2) cos(2k pi x), and
/// MA(1) functional principal component scores.
template <typename MeanFn>
FunctionalSample generate_with_mean(const DgpConfig& config, int n, Rng& rng, MeanFn&& mean_at) {
    const auto [n_lo, n_hi] = scheme_support(config.scheme, n);

    std::vector<int> n_obs(static_cast<std::size_t>(n));
    for (auto& m : n_obs) m = rng.uniform_int(n_lo, n_hi);

    constexpr int kComponents = kScoreComponents;
    const double lambda_sqrt[kComponents] = {1.0, 0.70710678118654752440,
                                             0.5, 0.35355339059327376220};
    const std::vector<double> scores = draw_ma1_scores(rng, n, config.law);

    std::vector<Curve> curves(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Curve& curve = curves[static_cast<std::size_t>(i)];
        curve.index = i + 1;
        curve.points.resize(static_cast<std::size_t>(n_obs[static_cast<std::size_t>(i)]));
        for (auto& p : curve.points) p.x = rng.uniform01();
        const double* xi = &scores[static_cast<std::size_t>(i) * kComponents];
        for (auto& p : curve.points) {
            double y = mean_at(i + 1, p.x);
            if (config.scores_enabled) {
                const double s1 = std::sin(2.0 * kPi * p.x), c1 = std::cos(2.0 * kPi * p.x);
                const double s2 = std::sin(4.0 * kPi * p.x), c2 = std::cos(4.0 * kPi * p.x);
                const double sqrt2 = 1.41421356237309504880;
                y += sqrt2 * (lambda_sqrt[0] * xi[0] * s1 + lambda_sqrt[1] * xi[1] * c1 +
                              lambda_sqrt[2] * xi[2] * s2 + lambda_sqrt[3] * xi[3] * c2);
            }
            y += config.sigma * rng.normal();
            p.y = y;
        }
    }
    return FunctionalSample::from_curves(std::move(curves));
}

} // namespace detail

/// Second sample size of the two-sample design, n2 = floor(1.2 n).
inline int two_sample_n2(int n) { return detail::floor_index(1.2 * n); }

/// Standalone draw of the MA(1) score paths (n rows, 4 components,
/// row-major), for moment diagnostics of the score process.
inline std::vector<double> ma1_score_sample(int n, ScoreLaw law, std::uint64_t seed) {
    if (n < 1) throw DomainError("score sample length must be >= 1");
    Rng rng(seed, 0);
    return detail::draw_ma1_scores(rng, n, law);
}

/// Generates one sample for the one-sample and change point scenarios.
inline FunctionalSample generate_sample(const DgpConfig& config) {
    if (config.n < 1) throw DomainError("sample size must be >= 1");
    Rng rng(config.seed, 0);
    const Scenario& sc = config.scenario;
    switch (sc.type) {
        case ScenarioType::OneSampleMean: {
            const double root_a = std::sqrt(sc.a);
            return detail::generate_with_mean(
                config, config.n, rng, [&](int, double x) { return root_a * mean_shape(x); });
        }
        case ScenarioType::JumpConstant:
        case ScenarioType::JumpQuadratic: {
            if (!(sc.frac > 0.0 && sc.frac < 1.0))
                throw DomainError("change point fraction must lie in (0,1)");
            const Jump jump{sc.frac, sc.a, sc.type == ScenarioType::JumpQuadratic};
            const int k_n = detail::floor_index(sc.frac * config.n);
            return detail::generate_with_mean(config, config.n, rng, [&](int i, double x) {
                double m = mean_shape(x);
                if (i > k_n) m += jump_value(jump, x);
                return m;
            });
        }
        case ScenarioType::MultiJump: {
            std::vector<int> at;
            for (std::size_t j = 0; j < sc.jumps.size(); ++j) {
                const Jump& jmp = sc.jumps[j];
                if (!(jmp.frac > 0.0 && jmp.frac < 1.0))
                    throw DomainError("change point fraction must lie in (0,1)");
                if (j > 0 && !(jmp.frac > sc.jumps[j - 1].frac))
                    throw DomainError("multi-jump fractions must be strictly increasing");
                at.push_back(detail::floor_index(jmp.frac * config.n));
            }
            return detail::generate_with_mean(config, config.n, rng, [&](int i, double x) {
                double m = mean_shape(x);
                for (std::size_t j = 0; j < at.size(); ++j)
                    if (i > at[j]) m += jump_value(sc.jumps[j], x);
                return m;
            });
        }
        case ScenarioType::TwoSampleMeans:
            throw DomainError("two-sample scenarios are generated by generate_two_samples");
    }
    throw DomainError("unknown scenario type");
}

/// Generates the two independent samples of the two-sample design:
/// m1 = shape + sqrt(3a) x over n curves, m2 = shape over floor(1.2 n).
inline std::pair<FunctionalSample, FunctionalSample> generate_two_samples(const DgpConfig& config) {
    if (config.scenario.type != ScenarioType::TwoSampleMeans)
        throw DomainError("generate_two_samples requires the two-sample-means scenario");
    if (config.n < 1) throw DomainError("sample size must be >= 1");
    const double slope = std::sqrt(3.0 * config.scenario.a);
    Rng rng1(config.seed, 0);
    Rng rng2(config.seed, 1);
    FunctionalSample s1 = detail::generate_with_mean(
        config, config.n, rng1, [&](int, double x) { return mean_shape(x) + slope * x; });
    FunctionalSample s2 = detail::generate_with_mean(
        config, two_sample_n2(config.n), rng2, [&](int, double x) { return mean_shape(x); });
    return {std::move(s1), std::move(s2)};
}

/// One grid cell of a Monte Carlo rejection study. dgp.seed is the master
/// seed; each replication derives its own seed from (master, replication).
struct StudyConfig {
    DgpConfig dgp;
    double delta = 1.0;
    std::vector<double> alphas = {0.05};
    double epsilon = 0.1;
    std::vector<NormalizerKind> kinds = {NormalizerKind::Integral};
    int replications = 500;
    int order = 4;
    std::optional<SplineSpec> spline = std::nullopt;       // skip BIC when set
    std::optional<std::vector<double>> thetas = std::nullopt; // multi-jump locations
};

struct StudyResult {
    StudyConfig config;
    std::vector<std::vector<double>> reject_freq; // [kind][alpha], over successful reps
    int replications_done = 0;
    int failures = 0;
    std::vector<double> khat_fracs; // change point scenarios: k_hat / n per successful rep
};

namespace detail {

inline std::uint64_t replication_seed(std::uint64_t master, int replication) {
    return mix64(mix64(master) + kGolden * (static_cast<std::uint64_t>(replication) + 1));
}

} // namespace detail

/// Runs the study: per replication generates fresh data, selects knots,
/// forms the statistic and its discrepancy curve once, and applies every
/// (kind, alpha) decision. Aggregation is by replication index, so the
/// result is bit-identical for any thread count. Per-replication errors
/// are counted as failures rather than aborting the study.
inline StudyResult rejection_study(const StudyConfig& config,
                                   std::span<const PivotalTable> tables, int n_threads = 0) {
    if (config.replications < 1) throw DomainError("need at least one replication");
    if (tables.size() != config.kinds.size())
        throw DomainError("need one pivotal table per normalizer kind");
    for (std::size_t ki = 0; ki < config.kinds.size(); ++ki)
        detail::check_table(tables[ki], config.epsilon, config.kinds[ki]);
    for (const double alpha : config.alphas)
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");

    const int reps = config.replications;
    const std::size_t n_kinds = config.kinds.size();
    const std::size_t n_alphas = config.alphas.size();

    // Quantiles are replication-independent; resolve them once.
    std::vector<double> quantiles(n_kinds * n_alphas);
    for (std::size_t ki = 0; ki < n_kinds; ++ki)
        for (std::size_t ai = 0; ai < n_alphas; ++ai)
            quantiles[ki * n_alphas + ai] = quantile(tables[ki], 1.0 - config.alphas[ai]);

    std::vector<char> ok(static_cast<std::size_t>(reps), 0);
    std::vector<char> rejected(static_cast<std::size_t>(reps) * n_kinds * n_alphas, 0);
    std::vector<double> khat(static_cast<std::size_t>(reps), -1.0);

    parallel_for(reps, n_threads, [&](int rep) {
        DgpConfig dgp = config.dgp;
        dgp.seed = detail::replication_seed(config.dgp.seed, rep);
        try {
            StatCurve curve;
            if (dgp.scenario.type == ScenarioType::TwoSampleMeans) {
                const auto [s1, s2] = generate_two_samples(dgp);
                const SplineSpec sp1 = config.spline
                                           ? *config.spline
                                           : SplineSpec{config.order, select_knots_bic(s1, config.order).selected};
                const SplineSpec sp2 = config.spline
                                           ? *config.spline
                                           : SplineSpec{config.order, select_knots_bic(s2, config.order).selected};
                curve = two_sample_stat_curve(s1, s2, config.epsilon, sp1, sp2);
            } else {
                const FunctionalSample sample = generate_sample(dgp);
                const SplineSpec sp = config.spline
                                          ? *config.spline
                                          : SplineSpec{config.order, select_knots_bic(sample, config.order).selected};
                switch (dgp.scenario.type) {
                    case ScenarioType::OneSampleMean:
                        curve = one_sample_stat_curve(sample, config.epsilon, sp);
                        break;
                    case ScenarioType::JumpConstant:
                    case ScenarioType::JumpQuadratic: {
                        const int k = estimate_single(sample, sp, config.epsilon).k_hat;
                        khat[static_cast<std::size_t>(rep)] =
                            static_cast<double>(k) / dgp.n;
                        curve = changepoint_stat_curve(sample, k, config.epsilon, sp);
                        break;
                    }
                    case ScenarioType::MultiJump: {
                        std::vector<double> thetas;
                        if (config.thetas) {
                            thetas = *config.thetas;
                        } else {
                            for (const auto& j : dgp.scenario.jumps) thetas.push_back(j.frac);
                        }
                        curve = multi_changepoint_stat_curve(sample, thetas, config.epsilon, sp);
                        break;
                    }
                    case ScenarioType::TwoSampleMeans:
                        break; // handled above
                }
            }
            for (std::size_t ki = 0; ki < n_kinds; ++ki) {
                const double v = curve.normalizer(config.kinds[ki]);
                for (std::size_t ai = 0; ai < n_alphas; ++ai) {
                    const double threshold = config.delta + quantiles[ki * n_alphas + ai] * v;
                    rejected[(static_cast<std::size_t>(rep) * n_kinds + ki) * n_alphas + ai] =
                        curve.statistic > threshold ? 1 : 0;
                }
            }
            ok[static_cast<std::size_t>(rep)] = 1;
        } catch (const Error&) {
            // counted as a failure below
        }
    });

    StudyResult result;
    result.config = config;
    result.reject_freq.assign(n_kinds, std::vector<double>(n_alphas, 0.0));
    for (int rep = 0; rep < reps; ++rep) {
        if (!ok[static_cast<std::size_t>(rep)]) {
            ++result.failures;
            continue;
        }
        ++result.replications_done;
        if (khat[static_cast<std::size_t>(rep)] >= 0.0)
            result.khat_fracs.push_back(khat[static_cast<std::size_t>(rep)]);
        for (std::size_t ki = 0; ki < n_kinds; ++ki)
            for (std::size_t ai = 0; ai < n_alphas; ++ai)
                result.reject_freq[ki][ai] +=
                    rejected[(static_cast<std::size_t>(rep) * n_kinds + ki) * n_alphas + ai];
    }
    if (result.replications_done > 0)
        for (auto& row : result.reject_freq)
            for (auto& f : row) f /= result.replications_done;
    return result;
}

/// CSV export, one row per (study, kind, alpha):
/// scheme,law,scenario,a,delta,alpha,epsilon,kind,n,replications,reject_freq,failures
template <typename Stream>
void write_study_csv(Stream& os, std::span<const StudyResult> results) {
    os << "scheme,law,scenario,a,delta,alpha,epsilon,kind,n,replications,reject_freq,failures\n";
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : results) {
        const auto& c = r.config;
        for (std::size_t ki = 0; ki < c.kinds.size(); ++ki) {
            for (std::size_t ai = 0; ai < c.alphas.size(); ++ai) {
                os << to_string(c.dgp.scheme) << ',' << to_string(c.dgp.law) << ','
                   << to_string(c.dgp.scenario.type) << ',' << num(c.dgp.scenario.a) << ','
                   << num(c.delta) << ',' << num(c.alphas[ai]) << ',' << num(c.epsilon) << ','
                   << to_string(c.kinds[ki]) << ',' << c.dgp.n << ',' << r.replications_done << ','
                   << num(r.reject_freq[ki][ai]) << ',' << r.failures << '\n';
            }
        }
    }
}

} // namespace snfts
