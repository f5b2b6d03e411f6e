#pragma once

// Ordinary least squares with coefficient inference.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neus/distributions.hpp"
#include "neus/error.hpp"

namespace neus {

struct RegressionFit {
    Eigen::VectorXd coefficients;  // one per design column; dropped columns are 0
    Eigen::VectorXd std_errors;    // NaN for dropped columns
    Eigen::VectorXd p_values;
    std::vector<std::size_t> dropped; // collinear columns removed, in column order
    bool has_intercept = true;
    double intercept = 0.0;
    double intercept_se = 0.0;
    double intercept_p = 1.0;
    double sse = 0.0;
    double sst = 0.0; // about the sample mean
    std::size_t n = 0;
    std::size_t r = 0; // regressors kept, excluding the intercept
    Eigen::VectorXd residuals;

    double df_resid() const { return double(n) - double(r) - (has_intercept ? 1.0 : 0.0); }
    double sigma2() const { return sse / df_resid(); }
    double r_squared() const { return 1.0 - sse / sst; }

    /// Linear prediction for one row of regressors (same column order as the fit).
    double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        return intercept + coefficients.dot(x);
    }
};

/// OLS of y on the columns of x, optionally with an intercept. Columns that
/// are (numerically) linear combinations of earlier columns are dropped in
/// order and listed in `dropped`. Inference assumes homoskedastic normal errors.
inline RegressionFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool intercept = true,
                         double collinearity_tol = 1e-10) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (y.size() != n) fail(ErrorKind::data, "ols: design and response lengths differ");

    Eigen::MatrixXd full(n, p + (intercept ? 1 : 0));
    if (intercept) full.col(0).setOnes();
    full.rightCols(p) = x;

    // decide kept columns by sequential Gram-Schmidt
    std::vector<Eigen::Index> keep;
    std::vector<std::size_t> dropped;
    Eigen::MatrixXd basis(n, 0);
    for (Eigen::Index c = 0; c < full.cols(); ++c) {
        Eigen::VectorXd v = full.col(c);
        const double norm0 = v.norm();
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index k = 0; k < basis.cols(); ++k) v -= basis.col(k).dot(v) * basis.col(k);
        const double norm = v.norm();
        if (norm0 == 0.0 || norm <= collinearity_tol * norm0) {
            if (intercept && c == 0) fail(ErrorKind::data, "ols: empty sample");
            dropped.push_back(static_cast<std::size_t>(c - (intercept ? 1 : 0)));
            continue;
        }
        basis.conservativeResize(n, basis.cols() + 1);
        basis.col(basis.cols() - 1) = v / norm;
        keep.push_back(c);
    }

    const auto k = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd xk(n, k);
    for (Eigen::Index j = 0; j < k; ++j) xk.col(j) = full.col(keep[static_cast<std::size_t>(j)]);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(xk);
    const Eigen::VectorXd beta = qr.solve(y);

    RegressionFit fit;
    fit.has_intercept = intercept;
    fit.n = static_cast<std::size_t>(n);
    fit.r = static_cast<std::size_t>(k - (intercept ? 1 : 0));
    fit.dropped = std::move(dropped);
    fit.residuals = y - xk * beta;
    fit.sse = fit.residuals.squaredNorm();
    fit.sst = (y.array() - y.mean()).matrix().squaredNorm();
    fit.coefficients = Eigen::VectorXd::Zero(p);
    fit.std_errors = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
    fit.p_values = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());

    const double df = fit.df_resid();
    Eigen::VectorXd se = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
    if (df >= 1.0) {
        const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        const Eigen::MatrixXd r_inv =
            r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
        const double s2 = fit.sse / df;
        se = (s2 * r_inv.rowwise().squaredNorm().array()).sqrt();
    }
    auto p_of = [&](double b, double s) {
        if (!(df >= 1.0) || std::isnan(s)) return std::numeric_limits<double>::quiet_NaN();
        if (s == 0.0) return b == 0.0 ? 1.0 : 0.0;
        return stats::t_two_sided_p(b / s, df);
    };
    for (Eigen::Index j = 0; j < k; ++j) {
        const auto c = keep[static_cast<std::size_t>(j)];
        if (intercept && c == 0) {
            fit.intercept = beta(j);
            fit.intercept_se = se(j);
            fit.intercept_p = p_of(beta(j), se(j));
        } else {
            const auto col = c - (intercept ? 1 : 0);
            fit.coefficients(col) = beta(j);
            fit.std_errors(col) = se(j);
            fit.p_values(col) = p_of(beta(j), se(j));
        }
    }
    return fit;
}

} // namespace neus
