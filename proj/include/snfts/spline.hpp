#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "snfts/banded.hpp"
#include "snfts/errors.hpp"

namespace snfts {

/// Equally spaced polynomial spline space on [0,1]: order p (degree p-1)
/// with J_n interior knots t_l = l/(J_n+1). Boundary knots are clamped
/// (p-fold at 0 and 1) so the space contains all polynomials of degree < p.
struct SplineSpec {
    int order = 4;          // p >= 1; 4 = cubic
    int interior_knots = 0; // J_n >= 0

    int dimension() const { return interior_knots + order; }

    bool operator==(const SplineSpec&) const = default;

    void validate() const {
        if (order < 1) throw DomainError("spline order must be >= 1");
        if (order > 16) throw DomainError("spline order > 16 is not supported");
        if (interior_knots < 0) throw DomainError("interior knot count must be >= 0");
    }
};

/// Gauss-Legendre rule on [-1,1].
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Nodes and weights by Newton iteration on the Legendre polynomial;
/// accurate to machine precision for any practical point count.
inline QuadratureRule gauss_legendre(int n_points) {
    if (n_points < 1) throw DomainError("quadrature rule needs at least one point");
    QuadratureRule rule;
    rule.nodes.assign(static_cast<std::size_t>(n_points), 0.0);
    rule.weights.assign(static_cast<std::size_t>(n_points), 0.0);
    const int half = (n_points + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n_points + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 64; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n_points; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n_points * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[static_cast<std::size_t>(i)] = -x;
        rule.nodes[static_cast<std::size_t>(n_points - 1 - i)] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[static_cast<std::size_t>(i)] = w;
        rule.weights[static_cast<std::size_t>(n_points - 1 - i)] = w;
    }
    if (n_points == 1) {
        rule.nodes[0] = 0.0;
        rule.weights[0] = 2.0;
    }
    return rule;
}

/// B-spline basis over a SplineSpec: clamped knot vector plus the local
/// Cox-de Boor evaluation. At any x at most p basis functions are nonzero
/// and they sum to one.
class Basis {
public:
    explicit Basis(SplineSpec spec) : spec_(spec) {
        spec_.validate();
        const int p = spec_.order;
        const int j = spec_.interior_knots;
        knots_.resize(static_cast<std::size_t>(j + 2 * p));
        for (int i = 0; i < j + 2 * p; ++i) {
            const double v = static_cast<double>(i - (p - 1)) / (j + 1);
            knots_[static_cast<std::size_t>(i)] = std::clamp(v, 0.0, 1.0);
        }
    }

    const SplineSpec& spec() const { return spec_; }
    int dimension() const { return spec_.dimension(); }
    int order() const { return spec_.order; }

    /// Index l of the knot subinterval I_l containing x; x = 1 falls in I_{J_n}.
    int subinterval(double x) const {
        const int j = spec_.interior_knots;
        int l = static_cast<int>(x * (j + 1));
        return std::min(l, j);
    }

    /// Writes the p nonzero basis values B_{first..first+p-1}(x) into out
    /// and returns first (0-based). out must hold order() doubles.
    int eval_nonzero(double x, double* out) const {
        if (!(x >= 0.0 && x <= 1.0))
            throw DomainError("basis evaluation point " + std::to_string(x) + " outside [0,1]");
        const int p = spec_.order;
        const int l = subinterval(x);
        const int span = p - 1 + l; // knots_[span] <= x < knots_[span+1]
        double left[16], right[16];
        out[0] = 1.0;
        for (int d = 1; d < p; ++d) {
            left[d] = x - knots_[static_cast<std::size_t>(span + 1 - d)];
            right[d] = knots_[static_cast<std::size_t>(span + d)] - x;
            double saved = 0.0;
            for (int r = 0; r < d; ++r) {
                const double tmp = out[r] / (right[r + 1] + left[d - r]);
                out[r] = saved + right[r + 1] * tmp;
                saved = left[d - r] * tmp;
            }
            out[d] = saved;
        }
        return l;
    }

    /// Full basis vector (B_1(x), ..., B_{J_n+p}(x)).
    std::vector<double> eval(double x) const {
        std::vector<double> full(static_cast<std::size_t>(dimension()), 0.0);
        double vals[16];
        const int first = eval_nonzero(x, vals);
        for (int a = 0; a < spec_.order; ++a)
            full[static_cast<std::size_t>(first + a)] = vals[a];
        return full;
    }

    /// Knot breakpoints 0, 1/(J+1), ..., 1 delimiting the subintervals.
    std::vector<double> breakpoints() const {
        const int j = spec_.interior_knots;
        std::vector<double> b(static_cast<std::size_t>(j + 2));
        for (int l = 0; l <= j + 1; ++l)
            b[static_cast<std::size_t>(l)] = static_cast<double>(l) / (j + 1);
        return b;
    }

private:
    SplineSpec spec_;
    std::vector<double> knots_;
};

/// basis_eval: the full basis vector at x (length J_n + p).
inline std::vector<double> basis_eval(const SplineSpec& spec, double x) {
    return Basis(spec).eval(x);
}

/// An estimated mean function: spline coefficients plus the sample fraction
/// the fit used. The function is x -> B(x)^T coefficients.
struct SplineFit {
    SplineSpec spec;
    std::vector<double> coefficients;
    double fraction = 1.0;

    double eval(double x) const {
        Basis basis(spec);
        double vals[16];
        const int first = basis.eval_nonzero(x, vals);
        double acc = 0.0;
        for (int a = 0; a < spec.order; ++a)
            acc += vals[a] * coefficients[static_cast<std::size_t>(first + a)];
        return acc;
    }
};

namespace detail {

/// Merged breakpoint grid of two specs. Equal rationals l/(J+1) compare
/// equal as doubles (IEEE division is correctly rounded), so exact
/// deduplication suffices.
inline std::vector<double> union_breakpoints(const SplineSpec& a, const SplineSpec& b) {
    std::vector<double> pts = Basis(a).breakpoints();
    const std::vector<double> other = Basis(b).breakpoints();
    pts.insert(pts.end(), other.begin(), other.end());
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

} // namespace detail

/// Exact integrals of squared splines (and squared differences) for one or
/// two fixed specs. Gauss-Legendre nodes are laid on the union breakpoint
/// grid with max(p_a, p_b) points per cell, exact for the degree
/// 2*max(p)-2 integrands, and all basis values are precomputed so repeated
/// evaluation over coefficient families is cheap. Results are sums of
/// w * (value)^2 with w > 0, hence nonnegative by construction.
class SquaredL2Quadrature {
public:
    explicit SquaredL2Quadrature(const SplineSpec& spec) : SquaredL2Quadrature(spec, spec) {}

    SquaredL2Quadrature(const SplineSpec& spec_a, const SplineSpec& spec_b)
        : basis_a_(spec_a), basis_b_(spec_b) {
        const std::vector<double> cells = detail::union_breakpoints(spec_a, spec_b);
        const int q = std::max(spec_a.order, spec_b.order);
        const QuadratureRule rule = gauss_legendre(q);
        const std::size_t n_nodes = (cells.size() - 1) * static_cast<std::size_t>(q);
        weights_.reserve(n_nodes);
        first_a_.reserve(n_nodes);
        first_b_.reserve(n_nodes);
        vals_a_.reserve(n_nodes * static_cast<std::size_t>(spec_a.order));
        vals_b_.reserve(n_nodes * static_cast<std::size_t>(spec_b.order));
        double buf[16];
        for (std::size_t c = 0; c + 1 < cells.size(); ++c) {
            const double mid = 0.5 * (cells[c] + cells[c + 1]);
            const double half = 0.5 * (cells[c + 1] - cells[c]);
            for (int k = 0; k < q; ++k) {
                const double x = mid + half * rule.nodes[static_cast<std::size_t>(k)];
                weights_.push_back(half * rule.weights[static_cast<std::size_t>(k)]);
                first_a_.push_back(basis_a_.eval_nonzero(x, buf));
                vals_a_.insert(vals_a_.end(), buf, buf + spec_a.order);
                first_b_.push_back(basis_b_.eval_nonzero(x, buf));
                vals_b_.insert(vals_b_.end(), buf, buf + spec_b.order);
            }
        }
    }

    const SplineSpec& spec_a() const { return basis_a_.spec(); }
    const SplineSpec& spec_b() const { return basis_b_.spec(); }

    /// Integral of f_a^2 over [0,1] for coefficients in spec_a.
    double integral_sq(std::span<const double> coeff_a) const {
        const int pa = basis_a_.order();
        double acc = 0.0;
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            const double f = dot(coeff_a, first_a_[k], &vals_a_[k * static_cast<std::size_t>(pa)], pa);
            acc += weights_[k] * f * f;
        }
        return acc;
    }

    /// Integral of f_b^2 over [0,1] for coefficients in spec_b.
    double integral_sq_second(std::span<const double> coeff_b) const {
        const int pb = basis_b_.order();
        double acc = 0.0;
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            const double f = dot(coeff_b, first_b_[k], &vals_b_[k * static_cast<std::size_t>(pb)], pb);
            acc += weights_[k] * f * f;
        }
        return acc;
    }

    /// Integral of (f_a - f_b)^2 over [0,1].
    double integral_sq_diff(std::span<const double> coeff_a, std::span<const double> coeff_b) const {
        const int pa = basis_a_.order();
        const int pb = basis_b_.order();
        double acc = 0.0;
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            const double fa = dot(coeff_a, first_a_[k], &vals_a_[k * static_cast<std::size_t>(pa)], pa);
            const double fb = dot(coeff_b, first_b_[k], &vals_b_[k * static_cast<std::size_t>(pb)], pb);
            const double d = fa - fb;
            acc += weights_[k] * d * d;
        }
        return acc;
    }

    /// Analytic basis inner-product matrix M with M_kl = integral of B_k B_l,
    /// for spec_a; symmetric positive definite, banded with bandwidth p-1.
    BandedSymMatrix inner_product_matrix() const {
        const int pa = basis_a_.order();
        BandedSymMatrix m(basis_a_.dimension(), pa - 1 > 0 ? pa - 1 : 0);
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            std::span<const double> v(&vals_a_[k * static_cast<std::size_t>(pa)],
                                      static_cast<std::size_t>(pa));
            m.add_outer(first_a_[k], v, weights_[k]);
        }
        return m;
    }

private:
    static double dot(std::span<const double> coeff, int first, const double* vals, int p) {
        double acc = 0.0;
        for (int a = 0; a < p; ++a)
            acc += vals[a] * coeff[static_cast<std::size_t>(first + a)];
        return acc;
    }

    Basis basis_a_;
    Basis basis_b_;
    std::vector<double> weights_;
    std::vector<int> first_a_, first_b_;
    std::vector<double> vals_a_, vals_b_;
};

/// Exact integral of (f_a - f_b)^2 over [0,1]. Mixed specs are integrated on
/// the union breakpoint grid; every pair of equally spaced specs on [0,1]
/// admits that common refinement.
inline double integrate_sq_diff(const SplineFit& fit_a, const SplineFit& fit_b) {
    SquaredL2Quadrature quad(fit_a.spec, fit_b.spec);
    return quad.integral_sq_diff(fit_a.coefficients, fit_b.coefficients);
}

} // namespace snfts
