#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snfts/changepoint.hpp"
#include "snfts/errors.hpp"
#include "snfts/fit.hpp"
#include "snfts/pivotal.hpp"
#include "snfts/sample.hpp"
#include "snfts/spline.hpp"

namespace snfts {

/// Configuration shared by the four relevant-hypothesis tests.
struct TestSpec {
    double delta = 1.0;   // relevance threshold, squared-L2 units
    double alpha = 0.05;
    double epsilon = 0.1; // trimming parameter
    NormalizerKind kind = NormalizerKind::Integral;
    std::optional<SplineSpec> spline = std::nullopt; // absent: BIC-selected knots
    int order = 4;                                   // spline order when BIC-auto

    void validate() const {
        if (!(delta > 0.0)) throw DomainError("relevance threshold delta must be > 0");
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
        if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must lie in (0,1)");
        if (spline) spline->validate();
    }
};

/// Decision record: reject holds exactly when statistic > threshold with
/// threshold = delta + quantile * normalizer (so a degenerate normalizer
/// compares the statistic against delta alone).
struct TestReport {
    std::string family;
    double statistic = 0.0;
    double normalizer = 0.0;
    double quantile = 0.0;
    double threshold = 0.0;
    bool reject = false;
    bool degenerate_normalizer = false;

    double delta = 0.0;
    double alpha = 0.0;
    double epsilon = 0.0;
    NormalizerKind kind = NormalizerKind::Integral;
    int n = 0;
    int n2 = 0; // second sample size (two-sample only)
    SplineSpec spline{};
    SplineSpec spline2{};
    bool has_second_spline = false;
    std::vector<int> change_points; // k-hat, or the [n theta_k]
    std::vector<double> thetas;     // multi-change-point fractions
};

/// A piecewise constant function of t on [eps, 1): pieces [left_i, right_i)
/// with constant value; the right endpoint of the last piece is 1.
struct PiecewiseValues {
    std::vector<double> left;
    std::vector<double> right;
    std::vector<double> value;
};

/// Exact normalizer from the piecewise-constant discrepancy D(t):
/// Integral  sqrt( sum_i D_i^2 (r_i^5 - l_i^5) / 5 )       (t^4 in closed form)
/// Sup       max_i r_i^2 |D_i|                             (t^2 increasing)
/// Range     max(0, max_i max(l_i^2 D_i, r_i^2 D_i))
///           - min(0, min_i min(l_i^2 D_i, r_i^2 D_i))     (t=1 contributes 0)
inline double normalizer_value(const PiecewiseValues& d, NormalizerKind kind) {
    switch (kind) {
        case NormalizerKind::Integral: {
            double acc = 0.0;
            for (std::size_t i = 0; i < d.value.size(); ++i) {
                const double l = d.left[i], r = d.right[i];
                const double l2 = l * l, r2 = r * r;
                const double pow5 = r2 * r2 * r - l2 * l2 * l;
                acc += d.value[i] * d.value[i] * pow5 / 5.0;
            }
            return std::sqrt(acc);
        }
        case NormalizerKind::Sup: {
            double best = 0.0;
            for (std::size_t i = 0; i < d.value.size(); ++i)
                best = std::max(best, d.right[i] * d.right[i] * std::abs(d.value[i]));
            return best;
        }
        case NormalizerKind::Range: {
            double hi = 0.0, lo = 0.0;
            for (std::size_t i = 0; i < d.value.size(); ++i) {
                const double a = d.left[i] * d.left[i] * d.value[i];
                const double b = d.right[i] * d.right[i] * d.value[i];
                hi = std::max({hi, a, b});
                lo = std::min({lo, a, b});
            }
            return hi - lo;
        }
    }
    return 0.0;
}

/// Full-sample statistic together with the piecewise-exact prefix
/// discrepancy curve D(t) = I(t) - I(1) that every normalizer kind is a
/// functional of. Computing this once serves all three kinds.
struct StatCurve {
    double statistic = 0.0;
    PiecewiseValues discrepancy;

    double normalizer(NormalizerKind kind) const { return normalizer_value(discrepancy, kind); }
};

namespace detail {

/// Prefix-fit coefficient family over one curve window: coefficients of the
/// weighted least-squares fit on the first m curves for every
/// m in [floor(eps * len), len], built in one incremental pass.
class PrefixCoefficients {
public:
    PrefixCoefficients(std::span<const Curve> curves, const SplineSpec& spec, double epsilon,
                       const std::string& what)
        : len_(static_cast<int>(curves.size())), dim_(spec.dimension()) {
        min_prefix_ = floor_index(epsilon * len_);
        if (min_prefix_ < 1)
            throw InsufficientDataError(what + ": the trimmed prefix floor(eps*" +
                                        std::to_string(len_) + ") selects no curves");
        long obs = 0;
        for (int i = 0; i < min_prefix_; ++i) obs += curves[static_cast<std::size_t>(i)].n_obs();
        if (obs < dim_)
            throw InsufficientDataError(what + ": the smallest prefix has " + std::to_string(obs) +
                                        " effective observations, fewer than the basis dimension " +
                                        std::to_string(dim_));
        coeffs_.resize(static_cast<std::size_t>(len_ - min_prefix_ + 1) *
                       static_cast<std::size_t>(dim_));
        PrefixFitter fitter(spec);
        for (int i = 0; i < len_; ++i) {
            fitter.add_curve(curves[static_cast<std::size_t>(i)]);
            const int m = i + 1;
            if (m < min_prefix_) continue;
            const std::vector<double> c = fitter.solve();
            std::copy(c.begin(), c.end(),
                      coeffs_.begin() + static_cast<std::ptrdiff_t>(
                                            static_cast<std::size_t>(m - min_prefix_) *
                                            static_cast<std::size_t>(dim_)));
        }
    }

    int len() const { return len_; }
    int min_prefix() const { return min_prefix_; }

    std::span<const double> at(int m) const {
        return std::span<const double>(coeffs_)
            .subspan(static_cast<std::size_t>(m - min_prefix_) * static_cast<std::size_t>(dim_),
                     static_cast<std::size_t>(dim_));
    }

private:
    int len_;
    int dim_;
    int min_prefix_ = 0;
    std::vector<double> coeffs_;
};

/// Sweeps the exact jump set of t -> (floor(len_s * t))_s over [eps, 1):
/// pieces are delimited by the union of the jump points i/len_s, and eval
/// is called once per piece with the vector of per-segment prefixes.
template <typename EvalFn>
PiecewiseValues sweep_prefix_pieces(double epsilon, std::span<const int> seg_lens,
                                    std::span<const int> min_prefixes, EvalFn&& eval) {
    struct Event {
        double t;
        int seg;
        int prefix;
    };
    std::vector<Event> events;
    for (std::size_t s = 0; s < seg_lens.size(); ++s) {
        const int len = seg_lens[s];
        for (int i = min_prefixes[s] + 1; i <= len - 1; ++i)
            events.push_back(Event{static_cast<double>(i) / len, static_cast<int>(s), i});
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.seg < b.seg;
    });

    std::vector<int> prefixes(min_prefixes.begin(), min_prefixes.end());
    PiecewiseValues out;
    double cursor = epsilon;
    std::size_t i = 0;
    while (i <= events.size()) {
        const double piece_right = (i == events.size()) ? 1.0 : events[i].t;
        out.left.push_back(cursor);
        out.right.push_back(piece_right);
        out.value.push_back(eval(std::span<const int>(prefixes)));
        if (i == events.size()) break;
        while (i < events.size() && events[i].t == piece_right) {
            prefixes[static_cast<std::size_t>(events[i].seg)] = events[i].prefix;
            ++i;
        }
        cursor = piece_right;
    }
    return out;
}

/// Turns the piecewise I(t) into D(t) = I(t) - statistic. Discrepancies that
/// agree with zero to 12 digits relative to the magnitude of the fitted
/// functions are numerical cancellation noise (identical prefix fits), not
/// signal; they are snapped to zero so degenerate inputs report V = 0.
/// magnitude_hint carries the squared norms of the full fits, which set the
/// relevant scale when the statistic itself is a near-zero difference.
inline StatCurve make_stat_curve(double statistic, PiecewiseValues&& curve,
                                 double magnitude_hint) {
    StatCurve out;
    out.statistic = statistic;
    out.discrepancy = std::move(curve);
    double scale = std::max(std::abs(statistic), std::abs(magnitude_hint));
    for (const double v : out.discrepancy.value) scale = std::max(scale, std::abs(v));
    double max_d = 0.0;
    for (auto& v : out.discrepancy.value) {
        v -= statistic;
        max_d = std::max(max_d, std::abs(v));
    }
    if (max_d <= 1e-12 * scale)
        for (auto& v : out.discrepancy.value) v = 0.0;
    return out;
}

inline void check_table(const PivotalTable& table, double epsilon, NormalizerKind kind) {
    if (table.config.kind != kind || std::abs(table.config.epsilon - epsilon) > 5e-7)
        throw DomainError(std::string("pivotal table was built for (") +
                          to_string(table.config.kind) + ", eps=" +
                          std::to_string(table.config.epsilon) + "), test requires (" +
                          to_string(kind) + ", eps=" + std::to_string(epsilon) + ")");
}

/// Shared decision assembly from the statistic and its normalizer.
inline void finish_report(TestReport& report, const StatCurve& curve, const TestSpec& spec,
                          const PivotalTable& table) {
    const double v = curve.normalizer(spec.kind);
    report.statistic = curve.statistic;
    report.normalizer = v;
    report.degenerate_normalizer = (v == 0.0);
    report.quantile = quantile(table, 1.0 - spec.alpha);
    report.threshold = spec.delta + report.quantile * v;
    report.reject = curve.statistic > report.threshold;
    report.delta = spec.delta;
    report.alpha = spec.alpha;
    report.epsilon = spec.epsilon;
    report.kind = spec.kind;
}

inline SplineSpec resolve_spline(const FunctionalSample& sample, const TestSpec& spec) {
    if (spec.spline) return *spec.spline;
    return SplineSpec{spec.order, select_knots_bic(sample, spec.order).selected};
}

} // namespace detail

/// T_n = ||mhat||^2 and its prefix discrepancy curve for the one-sample test.
inline StatCurve one_sample_stat_curve(const FunctionalSample& sample, double epsilon,
                                       const SplineSpec& spline) {
    const detail::PrefixCoefficients family(sample.span(), spline, epsilon, "sample");
    const SquaredL2Quadrature quad(spline);
    const int n = sample.n();
    const double statistic = quad.integral_sq(family.at(n));

    const int lens[1] = {n};
    const int mins[1] = {family.min_prefix()};
    PiecewiseValues curve = detail::sweep_prefix_pieces(
        epsilon, lens, mins,
        [&](std::span<const int> m) { return quad.integral_sq(family.at(m[0])); });
    return detail::make_stat_curve(statistic, std::move(curve), statistic);
}

/// T-dagger = ||mhat_1 - mhat_2||^2 and its curve; prefixes are
/// floor(n_d t) per sample, pieces the union jump set of both floors.
inline StatCurve two_sample_stat_curve(const FunctionalSample& sample1,
                                       const FunctionalSample& sample2, double epsilon,
                                       const SplineSpec& spline1, const SplineSpec& spline2) {
    const detail::PrefixCoefficients fam1(sample1.span(), spline1, epsilon, "sample 1");
    const detail::PrefixCoefficients fam2(sample2.span(), spline2, epsilon, "sample 2");
    const SquaredL2Quadrature quad(spline1, spline2);
    const double statistic = quad.integral_sq_diff(fam1.at(sample1.n()), fam2.at(sample2.n()));

    const int lens[2] = {sample1.n(), sample2.n()};
    const int mins[2] = {fam1.min_prefix(), fam2.min_prefix()};
    PiecewiseValues curve = detail::sweep_prefix_pieces(
        epsilon, lens, mins, [&](std::span<const int> m) {
            return quad.integral_sq_diff(fam1.at(m[0]), fam2.at(m[1]));
        });
    const double magnitude =
        quad.integral_sq(fam1.at(sample1.n())) + quad.integral_sq_second(fam2.at(sample2.n()));
    return detail::make_stat_curve(statistic, std::move(curve), magnitude);
}

/// S_n = ||deltahat(1,.)||^2 with deltahat the difference between the
/// pre-change prefix fits (curves 1..floor(k t)) and the post-change
/// prefix fits (curves k+1..k+floor((n-k)t)).
inline StatCurve changepoint_stat_curve(const FunctionalSample& sample, int k, double epsilon,
                                        const SplineSpec& spline) {
    const int n = sample.n();
    const std::span<const Curve> curves = sample.span();
    const detail::PrefixCoefficients fam1(curves.first(static_cast<std::size_t>(k)), spline,
                                          epsilon, "pre-change segment");
    const detail::PrefixCoefficients fam2(curves.subspan(static_cast<std::size_t>(k)), spline,
                                          epsilon, "post-change segment");
    const SquaredL2Quadrature quad(spline);
    const double statistic = quad.integral_sq_diff(fam1.at(k), fam2.at(n - k));

    const int lens[2] = {k, n - k};
    const int mins[2] = {fam1.min_prefix(), fam2.min_prefix()};
    PiecewiseValues curve = detail::sweep_prefix_pieces(
        epsilon, lens, mins, [&](std::span<const int> m) {
            return quad.integral_sq_diff(fam1.at(m[0]), fam2.at(m[1]));
        });
    const double magnitude = quad.integral_sq(fam1.at(k)) + quad.integral_sq(fam2.at(n - k));
    return detail::make_stat_curve(statistic, std::move(curve), magnitude);
}

/// Segment boundaries [n theta_k] for the multiple change point test.
inline std::vector<int> segment_bounds(int n, std::span<const double> thetas) {
    if (thetas.empty()) throw DomainError("need at least one change point fraction");
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        if (!(thetas[i] > 0.0 && thetas[i] < 1.0))
            throw DomainError("change point fraction " + std::to_string(thetas[i]) +
                              " outside (0,1)");
        if (i > 0 && !(thetas[i] > thetas[i - 1]))
            throw DomainError("change point fractions must be strictly increasing");
    }
    std::vector<int> bounds(thetas.size() + 2, 0);
    for (std::size_t k = 0; k < thetas.size(); ++k)
        bounds[k + 1] = detail::floor_index(n * thetas[k]);
    bounds.back() = n;
    for (std::size_t k = 1; k < bounds.size(); ++k)
        if (bounds[k] <= bounds[k - 1])
            throw InsufficientDataError("segment " + std::to_string(k) + " is empty");
    return bounds;
}

/// S-dagger = sum_k ||deltahat_k(1,.)||^2 over the K adjacent-segment
/// differences, with per-segment prefix fits and the union piece set.
inline StatCurve multi_changepoint_stat_curve(const FunctionalSample& sample,
                                              std::span<const double> thetas, double epsilon,
                                              const SplineSpec& spline) {
    const int n = sample.n();
    const std::vector<int> bounds = segment_bounds(n, thetas);
    const std::span<const Curve> curves = sample.span();

    std::vector<detail::PrefixCoefficients> fams;
    std::vector<int> lens;
    fams.reserve(bounds.size() - 1);
    for (std::size_t k = 1; k < bounds.size(); ++k) {
        const int lo = bounds[k - 1];
        const int hi = bounds[k];
        fams.emplace_back(
            curves.subspan(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi - lo)),
            spline, epsilon, "segment " + std::to_string(k));
        lens.push_back(hi - lo);
    }

    const SquaredL2Quadrature quad(spline);
    auto sum_sq_jumps = [&](std::span<const int> m) {
        double acc = 0.0;
        for (std::size_t s = 0; s + 1 < fams.size(); ++s)
            acc += quad.integral_sq_diff(fams[s + 1].at(m[s + 1]), fams[s].at(m[s]));
        return acc;
    };

    const std::vector<int> full(lens.begin(), lens.end());
    const double statistic = sum_sq_jumps(full);

    std::vector<int> mins;
    mins.reserve(fams.size());
    for (const auto& f : fams) mins.push_back(f.min_prefix());
    PiecewiseValues curve = detail::sweep_prefix_pieces(epsilon, lens, mins, sum_sq_jumps);
    double magnitude = 0.0;
    for (std::size_t s = 0; s < fams.size(); ++s)
        magnitude += quad.integral_sq(fams[s].at(lens[s]));
    return detail::make_stat_curve(statistic, std::move(curve), magnitude);
}

/// One-sample relevant test of H0: ||m - m0||^2_{L2} <= delta. A supplied
/// baseline m0 recenters every observation to Y_ij - m0(X_ij) before any
/// fitting; the pivotal table must match (epsilon, kind).
inline TestReport one_sample_test(const FunctionalSample& sample,
                                  const std::function<double(double)>& baseline,
                                  const TestSpec& spec, const PivotalTable& table) {
    spec.validate();
    detail::check_table(table, spec.epsilon, spec.kind);
    const FunctionalSample data = baseline ? sample.recentered(baseline) : sample;
    const SplineSpec sp = detail::resolve_spline(data, spec);

    TestReport report;
    report.family = "one-sample";
    report.n = data.n();
    report.spline = sp;
    detail::finish_report(report, one_sample_stat_curve(data, spec.epsilon, sp), spec, table);
    return report;
}

inline TestReport one_sample_test(const FunctionalSample& sample, const TestSpec& spec,
                                  const PivotalTable& table) {
    return one_sample_test(sample, nullptr, spec, table);
}

/// Two-sample relevant test of H0: ||m1 - m2||^2_{L2} <= delta. Smoothing
/// may differ between the samples: explicit overrides win, otherwise each
/// sample gets its own BIC selection.
inline TestReport two_sample_test(const FunctionalSample& sample1, const FunctionalSample& sample2,
                                  const TestSpec& spec, const PivotalTable& table,
                                  std::optional<SplineSpec> spline1 = std::nullopt,
                                  std::optional<SplineSpec> spline2 = std::nullopt) {
    spec.validate();
    detail::check_table(table, spec.epsilon, spec.kind);
    auto resolve = [&](const FunctionalSample& s, const std::optional<SplineSpec>& override_spec) {
        if (override_spec) return *override_spec;
        if (spec.spline) return *spec.spline;
        return SplineSpec{spec.order, select_knots_bic(s, spec.order).selected};
    };
    const SplineSpec sp1 = resolve(sample1, spline1);
    const SplineSpec sp2 = resolve(sample2, spline2);

    TestReport report;
    report.family = "two-sample";
    report.n = sample1.n();
    report.n2 = sample2.n();
    report.spline = sp1;
    report.spline2 = sp2;
    report.has_second_spline = true;
    detail::finish_report(report, two_sample_stat_curve(sample1, sample2, spec.epsilon, sp1, sp2),
                          spec, table);
    return report;
}

/// Single relevant change point test of H0: ||delta||^2_{L2} <= delta with
/// delta the jump at k_hat. An absent k_hat is estimated by the L2-CUSUM
/// localizer; k_hat must fall inside the trimmed range [eps n, (1-eps) n].
inline TestReport changepoint_test(const FunctionalSample& sample, std::optional<int> k_hat,
                                   const TestSpec& spec, const PivotalTable& table) {
    spec.validate();
    detail::check_table(table, spec.epsilon, spec.kind);
    const SplineSpec sp = detail::resolve_spline(sample, spec);
    const int n = sample.n();
    const int k = k_hat ? *k_hat : estimate_single(sample, sp, spec.epsilon).k_hat;
    const int k_lo = detail::ceil_index(spec.epsilon * n);
    const int k_hi = detail::floor_index((1.0 - spec.epsilon) * n);
    if (k < k_lo || k > k_hi)
        throw DomainError("change point " + std::to_string(k) + " outside the trimmed range [" +
                          std::to_string(k_lo) + "," + std::to_string(k_hi) + "]");

    TestReport report;
    report.family = "change-point";
    report.n = n;
    report.spline = sp;
    report.change_points = {k};
    detail::finish_report(report, changepoint_stat_curve(sample, k, spec.epsilon, sp), spec, table);
    return report;
}

/// Multiple relevant change point test of H0: sum_k ||delta_k||^2 <= delta,
/// given estimated locations 0 < theta_1 < ... < theta_K < 1.
inline TestReport multi_changepoint_test(const FunctionalSample& sample,
                                         std::span<const double> thetas, const TestSpec& spec,
                                         const PivotalTable& table) {
    spec.validate();
    detail::check_table(table, spec.epsilon, spec.kind);
    const SplineSpec sp = detail::resolve_spline(sample, spec);
    const std::vector<int> bounds = segment_bounds(sample.n(), thetas);

    TestReport report;
    report.family = "multi-change-point";
    report.n = sample.n();
    report.spline = sp;
    report.thetas.assign(thetas.begin(), thetas.end());
    report.change_points.assign(bounds.begin() + 1, bounds.end() - 1);
    detail::finish_report(report, multi_changepoint_stat_curve(sample, thetas, spec.epsilon, sp),
                          spec, table);
    return report;
}

} // namespace snfts
