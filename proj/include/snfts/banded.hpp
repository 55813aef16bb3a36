#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snfts/errors.hpp"

namespace snfts {

/// Symmetric banded matrix, lower storage. band(d, j) holds A(j+d, j) for
/// diagonal offset d in [0, bandwidth]. B-spline Gram matrices have
/// bandwidth p-1 by local support.
class BandedSymMatrix {
public:
    BandedSymMatrix() = default;
    BandedSymMatrix(int dim, int bandwidth)
        : dim_(dim), bw_(bandwidth), data_(static_cast<std::size_t>(dim) * (bandwidth + 1), 0.0) {}

    int dim() const { return dim_; }
    int bandwidth() const { return bw_; }

    double& band(int d, int j) { return data_[static_cast<std::size_t>(j) * (bw_ + 1) + d]; }
    double band(int d, int j) const { return data_[static_cast<std::size_t>(j) * (bw_ + 1) + d]; }

    /// Full-matrix accessor; zero outside the band.
    double at(int i, int j) const {
        if (i < j) std::swap(i, j);
        const int d = i - j;
        if (d > bw_ || i >= dim_ || j < 0) return 0.0;
        return band(d, j);
    }

    /// Accumulates w * v v^T for a vector with contiguous support
    /// [first, first+len): the update stays inside the band when len <= bw+1.
    void add_outer(int first, std::span<const double> v, double w) {
        const int len = static_cast<int>(v.size());
        for (int a = 0; a < len; ++a) {
            const double wa = w * v[static_cast<std::size_t>(a)];
            for (int b = a; b < len; ++b)
                band(b - a, first + a) += wa * v[static_cast<std::size_t>(b)];
        }
    }

    void scale(double s) {
        for (auto& e : data_) e *= s;
    }

    /// Quadratic form x^T A x.
    double quad_form(std::span<const double> x) const {
        double acc = 0.0;
        for (int j = 0; j < dim_; ++j) {
            acc += band(0, j) * x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
            const int top = std::min(bw_, dim_ - 1 - j);
            for (int d = 1; d <= top; ++d)
                acc += 2.0 * band(d, j) * x[static_cast<std::size_t>(j + d)] * x[static_cast<std::size_t>(j)];
        }
        return acc;
    }

private:
    int dim_ = 0;
    int bw_ = 0;
    std::vector<double> data_;
};

/// Cholesky factorization A = L L^T of a symmetric positive definite banded
/// matrix. Throws IllConditionedError when a pivot collapses: the cheap
/// reciprocal-condition estimate min(pivot)/max(pivot) must stay >= tol.
class BandedCholesky {
public:
    explicit BandedCholesky(const BandedSymMatrix& a, double rcond_tol = 1e-12)
        : dim_(a.dim()), bw_(a.bandwidth()), l_(a) {
        double min_pivot = 0.0, max_pivot = 0.0;
        for (int j = 0; j < dim_; ++j) {
            double d = l_.band(0, j);
            for (int k = std::max(0, j - bw_); k < j; ++k) {
                const double ljk = l_.band(j - k, k);
                d -= ljk * ljk;
            }
            if (!(d > 0.0))
                throw IllConditionedError("normal-equation matrix is singular (pivot " +
                                          std::to_string(d) + " at column " + std::to_string(j) + ")");
            if (j == 0) {
                min_pivot = max_pivot = d;
            } else {
                min_pivot = std::min(min_pivot, d);
                max_pivot = std::max(max_pivot, d);
            }
            const double ljj = std::sqrt(d);
            l_.band(0, j) = ljj;
            const int last = std::min(dim_ - 1, j + bw_);
            for (int i = j + 1; i <= last; ++i) {
                double s = l_.band(i - j, j);
                for (int k = std::max(0, i - bw_); k < j; ++k)
                    s -= l_.band(i - k, k) * l_.band(j - k, k);
                l_.band(i - j, j) = s / ljj;
            }
        }
        rcond_ = max_pivot > 0.0 ? min_pivot / max_pivot : 0.0;
        if (rcond_ < rcond_tol)
            throw IllConditionedError("normal-equation matrix is ill-conditioned (rcond estimate " +
                                      std::to_string(rcond_) + ")");
    }

    int dim() const { return dim_; }
    double rcond_estimate() const { return rcond_; }

    /// Solves A x = b.
    std::vector<double> solve(std::span<const double> b) const {
        std::vector<double> x(b.begin(), b.end());
        solve_in_place(x);
        return x;
    }

    void solve_in_place(std::vector<double>& x) const {
        // forward: L y = b
        for (int j = 0; j < dim_; ++j) {
            x[static_cast<std::size_t>(j)] /= l_.band(0, j);
            const int last = std::min(dim_ - 1, j + bw_);
            for (int i = j + 1; i <= last; ++i)
                x[static_cast<std::size_t>(i)] -= l_.band(i - j, j) * x[static_cast<std::size_t>(j)];
        }
        // backward: L^T x = y
        for (int j = dim_ - 1; j >= 0; --j) {
            const int last = std::min(dim_ - 1, j + bw_);
            double s = x[static_cast<std::size_t>(j)];
            for (int i = j + 1; i <= last; ++i)
                s -= l_.band(i - j, j) * x[static_cast<std::size_t>(i)];
            x[static_cast<std::size_t>(j)] = s / l_.band(0, j);
        }
    }

private:
    int dim_;
    int bw_;
    BandedSymMatrix l_;
    double rcond_ = 0.0;
};

} // namespace snfts
