#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snfts/banded.hpp"
#include "snfts/errors.hpp"
#include "snfts/sample.hpp"
#include "snfts/spline.hpp"

namespace snfts {

/// Incremental accumulator for the pooled weighted least-squares fit:
/// each curve contributes (1/N_i) sum_j B(X_ij) B(X_ij)^T to the Gram
/// matrix and (1/N_i) sum_j B(X_ij) Y_ij to the right-hand side. Prefix
/// fits for every t then cost one pass over the data plus one banded
/// solve per prefix.
class PrefixFitter {
public:
    explicit PrefixFitter(const SplineSpec& spec)
        : basis_(spec),
          gram_(spec.dimension(), spec.order - 1 > 0 ? spec.order - 1 : 0),
          rhs_(static_cast<std::size_t>(spec.dimension()), 0.0) {}

    void add_curve(const Curve& curve) {
        const double w = 1.0 / curve.n_obs();
        double vals[16];
        for (const auto& p : curve.points) {
            const int first = basis_.eval_nonzero(p.x, vals);
            gram_.add_outer(first, std::span<const double>(vals, static_cast<std::size_t>(basis_.order())), w);
            const double wy = w * p.y;
            for (int a = 0; a < basis_.order(); ++a)
                rhs_[static_cast<std::size_t>(first + a)] += wy * vals[a];
        }
        ++curves_added_;
        obs_added_ += curve.n_obs();
    }

    int curves_added() const { return curves_added_; }
    long obs_added() const { return obs_added_; }
    const Basis& basis() const { return basis_; }

    /// Coefficients of the least-squares fit over the curves added so far.
    /// The 1/m normalization cancels between the Gram matrix and the
    /// right-hand side, so the unnormalized system is solved directly.
    std::vector<double> solve() const {
        if (curves_added_ == 0) throw DomainError("prefix fit over an empty set of curves");
        BandedCholesky chol(gram_);
        return chol.solve(rhs_);
    }

    /// Gram matrix Q_t = (1/m) sum_{i<=m} (1/N_i) sum_j B(X_ij) B(X_ij)^T.
    BandedSymMatrix normalized_gram() const {
        if (curves_added_ == 0) throw DomainError("Gram matrix over an empty set of curves");
        BandedSymMatrix g = gram_;
        g.scale(1.0 / curves_added_);
        return g;
    }

    /// Unnormalized accumulated Gram and right-hand side.
    const BandedSymMatrix& raw_gram() const { return gram_; }
    const std::vector<double>& raw_rhs() const { return rhs_; }

private:
    Basis basis_;
    BandedSymMatrix gram_;
    std::vector<double> rhs_;
    int curves_added_ = 0;
    long obs_added_ = 0;
};

namespace detail {

inline std::span<const Curve> resolve_window(const FunctionalSample& sample,
                                             const std::optional<std::pair<int, int>>& window) {
    if (!window) return sample.span();
    return sample.window(window->first, window->second);
}

inline int prefix_length(std::size_t window_len, double t) {
    if (!(t > 0.0 && t <= 1.0))
        throw DomainError("sample fraction t = " + std::to_string(t) + " outside (0,1]");
    const int m = floor_index(static_cast<double>(window_len) * t);
    if (m < 1) throw DomainError("sample fraction t = " + std::to_string(t) + " selects no curves");
    return m;
}

} // namespace detail

/// Weighted least-squares spline fit from the first floor(m*t) curves of the
/// window (default: the whole sample), observations weighted 1/N_i.
inline SplineFit fit_partial_mean(const FunctionalSample& sample, const SplineSpec& spec,
                                  double t = 1.0,
                                  std::optional<std::pair<int, int>> window = std::nullopt) {
    const std::span<const Curve> curves = detail::resolve_window(sample, window);
    const int m = detail::prefix_length(curves.size(), t);
    PrefixFitter fitter(spec);
    for (int i = 0; i < m; ++i) fitter.add_curve(curves[static_cast<std::size_t>(i)]);
    return SplineFit{spec, fitter.solve(), t};
}

/// Normalized Gram matrix of the same prefix.
inline BandedSymMatrix gram(const FunctionalSample& sample, const SplineSpec& spec, double t = 1.0,
                            std::optional<std::pair<int, int>> window = std::nullopt) {
    const std::span<const Curve> curves = detail::resolve_window(sample, window);
    const int m = detail::prefix_length(curves.size(), t);
    PrefixFitter fitter(spec);
    for (int i = 0; i < m; ++i) fitter.add_curve(curves[static_cast<std::size_t>(i)]);
    return fitter.normalized_gram();
}

/// Candidate range and per-candidate values of the BIC knot search.
struct KnotSelection {
    int selected = 0;
    std::vector<int> candidates;
    std::vector<double> bic; // NaN where the candidate fit was ill-conditioned
};

/// Default candidate range for the interior knot count:
/// [ min{0.5 (n nbar)^{1/9} (log n)^{2/9}, 0.5 n^{1/8} (log n)^{1/4}},
///   min{n^{1/4} nbar^{5/8}, 2 n^{3/10}} ]
/// with nbar the harmonic mean of the N_i, rounded outward and clamped to >= 0.
inline std::pair<int, int> default_knot_range(int n, double harmonic_mean_obs) {
    const double logn = std::log(static_cast<double>(n));
    const double lo = std::min(0.5 * std::pow(n * harmonic_mean_obs, 1.0 / 9.0) * std::pow(logn, 2.0 / 9.0),
                               0.5 * std::pow(static_cast<double>(n), 1.0 / 8.0) * std::pow(logn, 0.25));
    const double hi = std::min(std::pow(static_cast<double>(n), 0.25) * std::pow(harmonic_mean_obs, 0.625),
                               2.0 * std::pow(static_cast<double>(n), 0.3));
    const int lo_i = std::max(0, static_cast<int>(std::floor(lo)));
    const int hi_i = std::max(0, static_cast<int>(std::ceil(hi)));
    return {lo_i, hi_i};
}

/// BIC(J) = log( (1/n) sum_i (1/N_i) sum_j {Y_ij - mhat_J(X_ij)}^2 )
///          + (J + p) log(n) / n,
/// minimized over the candidate range; ties break toward the smaller J.
inline KnotSelection select_knots_bic(const FunctionalSample& sample, int order,
                                      std::optional<std::pair<int, int>> candidate_range = std::nullopt) {
    const int n = sample.n();
    const auto [lo, hi] = candidate_range ? *candidate_range
                                          : default_knot_range(n, sample.harmonic_mean_obs());
    if (lo > hi)
        throw DomainError("empty knot candidate range [" + std::to_string(lo) + "," +
                          std::to_string(hi) + "]");

    KnotSelection result;
    const double penalty_scale = std::log(static_cast<double>(n)) / n;

    // Residuals below the double-precision cancellation floor are
    // indistinguishable from zero; clamping keeps log() from amplifying
    // rounding noise on noiseless in-span data, so the penalty decides.
    double mean_sq_y = 0.0;
    for (const auto& curve : sample.curves()) {
        const double w = 1.0 / curve.n_obs();
        for (const auto& p : curve.points) mean_sq_y += w * p.y * p.y;
    }
    mean_sq_y /= n;
    const double rss_floor = 1e-24 * mean_sq_y;

    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    for (int j = lo; j <= hi; ++j) {
        result.candidates.push_back(j);
        const SplineSpec spec{order, j};
        double value = std::numeric_limits<double>::quiet_NaN();
        try {
            const SplineFit fit = fit_partial_mean(sample, spec);
            Basis basis(spec);
            double vals[16];
            double rss = 0.0;
            for (const auto& curve : sample.curves()) {
                const double w = 1.0 / curve.n_obs();
                for (const auto& p : curve.points) {
                    const int first = basis.eval_nonzero(p.x, vals);
                    double fitted = 0.0;
                    for (int a = 0; a < order; ++a)
                        fitted += vals[a] * fit.coefficients[static_cast<std::size_t>(first + a)];
                    const double r = p.y - fitted;
                    rss += w * r * r;
                }
            }
            value = std::log(std::max(rss / n, rss_floor)) + (j + order) * penalty_scale;
            if (!any || value < best) {
                best = value;
                result.selected = j;
                any = true;
            }
        } catch (const IllConditionedError&) {
            // candidate leaves empty knot intervals; skip it
        }
        result.bic.push_back(value);
    }
    if (!any)
        throw IllConditionedError("no knot candidate in [" + std::to_string(lo) + "," +
                                  std::to_string(hi) + "] yields a well-conditioned fit");
    return result;
}

} // namespace snfts
