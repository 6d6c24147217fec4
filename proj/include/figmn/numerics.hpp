#pragma once

#include <span>
#include <vector>

#include "figmn/errors.hpp"

namespace figmn {

using Vector = std::vector<double>;

/// Dense row-major square matrix. Dimensions in this project are tiny
/// (<= 8), so there is no blocked or sparse storage.
class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(int order) : n_(order), a_(static_cast<std::size_t>(order) * order, 0.0) {}

    static SquareMatrix identity(int order);
    static SquareMatrix diagonal(std::span<const double> d);

    int order() const { return n_; }

    double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }

    std::span<const double> entries() const { return a_; }
    std::span<double> entries() { return a_; }

    Vector multiply(std::span<const double> v) const;

    // v^T M v
    double quadratic_form(std::span<const double> v) const;

    // Rows/cols picked by index lists; result is rows.size() x cols.size()
    // packed into a SquareMatrix when square, otherwise use block().
    SquareMatrix submatrix(std::span<const int> idx) const;

    // General rectangular block as row-major values (rows.size() x cols.size()).
    std::vector<double> block(std::span<const int> rows, std::span<const int> cols) const;

    // Repair floating-point symmetry drift by averaging with the transpose.
    void symmetrize();

    double max_asymmetry() const;

    bool operator==(const SquareMatrix&) const = default;

private:
    int n_ = 0;
    std::vector<double> a_;
};

/// M + c * v v^T, computed so that (i,j) and (j,i) are the same expression.
SquareMatrix rank_one_symmetric_update(const SquareMatrix& m, std::span<const double> v, double c);

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
struct Cholesky {
    SquareMatrix lower;

    double determinant() const;   // det(L)^2
    Vector solve(std::span<const double> b) const;
};

/// Throws NotPositiveDefinite when a pivot is <= 1e-12.
Cholesky cholesky_factor(const SquareMatrix& m);

/// Inverse of a symmetric positive definite matrix via Cholesky.
SquareMatrix invert_symmetric(const SquareMatrix& m);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

double chi2_cdf(int dof, double x);

/// x with CDF_{chi2(dof)}(x) = p, |CDF(x) - p| <= 1e-8. Throws
/// std::invalid_argument for p outside (0,1) or dof < 1.
double chi2_quantile(int dof, double p);

struct Chi2Threshold {
    int dof = 0;
    double percentile = 0.0;
    double value = 0.0;
};

Chi2Threshold make_chi2_threshold(int dof, double percentile);

}  // namespace figmn
