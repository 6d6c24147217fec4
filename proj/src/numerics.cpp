#include "figmn/numerics.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace figmn {

SquareMatrix SquareMatrix::identity(int order) {
    SquareMatrix m(order);
    for (int i = 0; i < order; ++i) m(i, i) = 1.0;
    return m;
}

SquareMatrix SquareMatrix::diagonal(std::span<const double> d) {
    SquareMatrix m(static_cast<int>(d.size()));
    for (int i = 0; i < m.order(); ++i) m(i, i) = d[i];
    return m;
}

Vector SquareMatrix::multiply(std::span<const double> v) const {
    if (static_cast<int>(v.size()) != n_)
        throw std::invalid_argument("SquareMatrix::multiply: dimension mismatch");
    Vector y(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
        double s = 0.0;
        for (int j = 0; j < n_; ++j) s += (*this)(i, j) * v[j];
        y[i] = s;
    }
    return y;
}

double SquareMatrix::quadratic_form(std::span<const double> v) const {
    if (static_cast<int>(v.size()) != n_)
        throw std::invalid_argument("SquareMatrix::quadratic_form: dimension mismatch");
    double s = 0.0;
    for (int i = 0; i < n_; ++i) {
        double row = 0.0;
        for (int j = 0; j < n_; ++j) row += (*this)(i, j) * v[j];
        s += v[i] * row;
    }
    return s;
}

SquareMatrix SquareMatrix::submatrix(std::span<const int> idx) const {
    SquareMatrix m(static_cast<int>(idx.size()));
    for (int i = 0; i < m.order(); ++i)
        for (int j = 0; j < m.order(); ++j) m(i, j) = (*this)(idx[i], idx[j]);
    return m;
}

std::vector<double> SquareMatrix::block(std::span<const int> rows, std::span<const int> cols) const {
    std::vector<double> b(rows.size() * cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) b[i * cols.size() + j] = (*this)(rows[i], cols[j]);
    return b;
}

void SquareMatrix::symmetrize() {
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j) {
            const double v = 0.5 * ((*this)(i, j) + (*this)(j, i));
            (*this)(i, j) = v;
            (*this)(j, i) = v;
        }
}

double SquareMatrix::max_asymmetry() const {
    double worst = 0.0;
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j) worst = std::max(worst, std::fabs((*this)(i, j) - (*this)(j, i)));
    return worst;
}

SquareMatrix rank_one_symmetric_update(const SquareMatrix& m, std::span<const double> v, double c) {
    if (static_cast<int>(v.size()) != m.order())
        throw std::invalid_argument("rank_one_symmetric_update: dimension mismatch");
    SquareMatrix out(m.order());
    for (int i = 0; i < m.order(); ++i) {
        out(i, i) = m(i, i) + c * v[i] * v[i];
        for (int j = i + 1; j < m.order(); ++j) {
            const double val = m(i, j) + c * v[i] * v[j];
            out(i, j) = val;
            out(j, i) = val;
        }
    }
    return out;
}

namespace {
constexpr double kPivotTolerance = 1e-12;
}

Cholesky cholesky_factor(const SquareMatrix& m) {
    const int n = m.order();
    Cholesky f{SquareMatrix(n)};
    SquareMatrix& L = f.lower;
    for (int j = 0; j < n; ++j) {
        double d = m(j, j);
        for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
        if (!(d > kPivotTolerance))
            throw NotPositiveDefinite("cholesky_factor: pivot <= 1e-12 at row " + std::to_string(j));
        L(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / L(j, j);
        }
    }
    return f;
}

double Cholesky::determinant() const {
    double det = 1.0;
    for (int i = 0; i < lower.order(); ++i) det *= lower(i, i) * lower(i, i);
    return det;
}

Vector Cholesky::solve(std::span<const double> b) const {
    const int n = lower.order();
    if (static_cast<int>(b.size()) != n) throw std::invalid_argument("Cholesky::solve: dimension mismatch");
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= lower(i, k) * y[k];
        y[i] = s / lower(i, i);
    }
    Vector x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < n; ++k) s -= lower(k, i) * x[k];
        x[i] = s / lower(i, i);
    }
    return x;
}

SquareMatrix invert_symmetric(const SquareMatrix& m) {
    const int n = m.order();
    const Cholesky f = cholesky_factor(m);
    const SquareMatrix& L = f.lower;

    // X = L^{-1}, lower triangular.
    SquareMatrix X(n);
    for (int i = 0; i < n; ++i) {
        X(i, i) = 1.0 / L(i, i);
        for (int j = 0; j < i; ++j) {
            double s = 0.0;
            for (int k = j; k < i; ++k) s += L(i, k) * X(k, j);
            X(i, j) = -s / L(i, i);
        }
    }

    // M^{-1} = X^T X; filling both triangles from one expression keeps it
    // symmetric to the last bit.
    SquareMatrix inv(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double s = 0.0;
            for (int k = j; k < n; ++k) s += X(k, i) * X(k, j);
            inv(i, j) = s;
            inv(j, i) = s;
        }
    return inv;
}

double regularized_gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::invalid_argument("regularized_gamma_p: a > 0, x >= 0 required");
    if (x == 0.0) return 0.0;

    if (x < a + 1.0) {
        // series representation
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int n = 0; n < 1000; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * std::numeric_limits<double>::epsilon()) break;
        }
        return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }

    // continued fraction for Q(a,x), modified Lentz
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < std::numeric_limits<double>::epsilon()) break;
    }
    const double q = std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    return 1.0 - q;
}

double chi2_cdf(int dof, double x) {
    if (dof < 1) throw std::invalid_argument("chi2_cdf: dof >= 1 required");
    if (x <= 0.0) return 0.0;
    return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(int dof, double p) {
    if (dof < 1) throw std::invalid_argument("chi2_quantile: dof >= 1 required");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile: p in (0,1) required");

    double lo = 0.0;
    double hi = static_cast<double>(dof);
    while (chi2_cdf(dof, hi) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e8) break;
    }
    // bisection; monotone CDF, so the bracket contracts to machine precision
    for (int it = 0; it < 200 && hi - lo > std::numeric_limits<double>::epsilon() * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf(dof, mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

Chi2Threshold make_chi2_threshold(int dof, double percentile) {
    return Chi2Threshold{dof, percentile, chi2_quantile(dof, percentile)};
}

}  // namespace figmn
