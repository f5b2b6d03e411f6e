#pragma once

// Per-stock basis selection: market residualization, MCP coordinate descent
// over a lambda path, rolling forward validation, the one-standard-error rule,
// the support cap, and the final least-squares fit.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "neus/date.hpp"
#include "neus/error.hpp"
#include "neus/parallel.hpp"
#include "neus/regression.hpp"

namespace neus::factor {

/// Weekly simple returns on a shared week grid. Split indices are week
/// positions: training [0, train_end), validation [train_end, validation_end),
/// testing [validation_end, T). Missing stock observations are NaN.
struct ReturnPanel {
    std::vector<Date> weeks;
    std::vector<std::string> stock_ids;
    Eigen::MatrixXd stocks; // T x n_stocks
    std::vector<std::string> basis_ids;
    Eigen::MatrixXd basis;  // T x p
    Eigen::VectorXd market;
    Eigen::VectorXd risk_free;
    std::size_t train_end = 0;
    std::size_t validation_end = 0;

    std::size_t size() const { return weeks.size(); }

    void validate() const {
        const auto t = static_cast<Eigen::Index>(weeks.size());
        if (stocks.rows() != t || basis.rows() != t || market.size() != t || risk_free.size() != t)
            fail(ErrorKind::data, "return panel: series lengths differ from the week grid");
        if (stocks.cols() != static_cast<Eigen::Index>(stock_ids.size()) ||
            basis.cols() != static_cast<Eigen::Index>(basis_ids.size()))
            fail(ErrorKind::data, "return panel: id lists do not match column counts");
        if (!(train_end >= 1 && train_end < validation_end && validation_end < weeks.size()))
            fail(ErrorKind::config, "return panel: need 1 <= train_end < validation_end < T");
    }

    /// First `n_weeks` weeks; split indices are clamped to the new length.
    ReturnPanel truncated(std::size_t n_weeks) const {
        ReturnPanel p = *this;
        n_weeks = std::min(n_weeks, weeks.size());
        const auto n = static_cast<Eigen::Index>(n_weeks);
        p.weeks.resize(n_weeks);
        p.stocks = stocks.topRows(n);
        p.basis = basis.topRows(n);
        p.market = market.head(n);
        p.risk_free = risk_free.head(n);
        p.train_end = std::min(train_end, n_weeks);
        p.validation_end = std::min(validation_end, n_weeks);
        return p;
    }
};

/// Panel with the risk-free rate subtracted from every series.
struct ExcessPanel {
    std::vector<Date> weeks;
    std::vector<std::string> stock_ids;
    Eigen::MatrixXd stocks;
    std::vector<std::string> basis_ids;
    Eigen::MatrixXd basis;
    Eigen::VectorXd market;
    std::size_t train_end = 0;
    std::size_t validation_end = 0;

    std::size_t size() const { return weeks.size(); }
};

/// Subtracts r_f week by week. Market, risk-free and basis series must be
/// complete; stock gaps stay NaN and are handled at selection time.
inline ExcessPanel excess_returns(const ReturnPanel& panel) {
    const auto t = static_cast<Eigen::Index>(panel.size());
    if (panel.market.size() != t || panel.risk_free.size() != t || panel.basis.rows() != t ||
        panel.stocks.rows() != t)
        fail(ErrorKind::data, "excess_returns: series not aligned to the week grid");
    auto missing = [&](const std::string& series, Eigen::Index week) {
        fail(ErrorKind::data, "excess_returns: series '" + series + "' missing week " +
                                  panel.weeks[static_cast<std::size_t>(week)].str());
    };
    for (Eigen::Index i = 0; i < t; ++i) {
        if (!std::isfinite(panel.risk_free(i))) missing("risk_free", i);
        if (!std::isfinite(panel.market(i))) missing("market", i);
        for (Eigen::Index j = 0; j < panel.basis.cols(); ++j)
            if (!std::isfinite(panel.basis(i, j))) missing(panel.basis_ids[static_cast<std::size_t>(j)], i);
    }
    ExcessPanel e;
    e.weeks = panel.weeks;
    e.stock_ids = panel.stock_ids;
    e.basis_ids = panel.basis_ids;
    e.stocks = panel.stocks.colwise() - panel.risk_free;
    e.basis = panel.basis.colwise() - panel.risk_free;
    e.market = panel.market - panel.risk_free;
    e.train_end = panel.train_end;
    e.validation_end = panel.validation_end;
    return e;
}

/// Least-squares loadings on the market and the residual series.
struct Residualized {
    Eigen::VectorXd loadings;   // alpha_0 per series
    Eigen::VectorXd intercepts; // zero unless fitted with an intercept
    Eigen::MatrixXd residuals;  // n x k
};

/// Regresses each column of `series` on `market` (no intercept unless asked)
/// and returns loadings and residuals.
inline Residualized residualize_market(const Eigen::MatrixXd& series, const Eigen::VectorXd& market,
                                       bool with_intercept = false) {
    const auto n = market.size();
    if (n < 2) fail(ErrorKind::data, "residualize_market: window must contain at least two weeks");
    if (series.rows() != n) fail(ErrorKind::data, "residualize_market: length mismatch");
    Residualized r;
    if (!with_intercept) {
        const double mm = market.squaredNorm();
        if (mm == 0.0) fail(ErrorKind::numerical, "residualize_market: market excess return is identically zero");
        r.loadings = series.transpose() * market / mm;
        r.intercepts = Eigen::VectorXd::Zero(series.cols());
        r.residuals = series - market * r.loadings.transpose();
        return r;
    }
    const double mean_m = market.mean();
    const Eigen::VectorXd mc = market.array() - mean_m;
    const double ss = mc.squaredNorm();
    if (ss == 0.0) fail(ErrorKind::numerical, "residualize_market: market has zero variance over the window");
    const Eigen::RowVectorXd means = series.colwise().mean();
    r.loadings = (series.rowwise() - means).transpose() * mc / ss;
    r.intercepts = means.transpose() - r.loadings * mean_m;
    r.residuals = (series - market * r.loadings.transpose()).rowwise() - r.intercepts.transpose();
    return r;
}

enum class Penalty { mcp, lasso };

struct McpConfig {
    double a = 3.0;
    int n_lambda = 100;
    double lambda_min_ratio = 1e-3;
    int max_support = 20;
    int window = 260;
    double tol = 1e-7;
    int max_iterations = 10000;
    Penalty penalty = Penalty::mcp;
    bool market_intercept = false;
    int workers = 1;

    void validate() const {
        if (!(a > 1.0)) fail(ErrorKind::config, "mcp: a must be > 1");
        if (n_lambda < 1) fail(ErrorKind::config, "mcp: n_lambda must be >= 1");
        if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0))
            fail(ErrorKind::config, "mcp: lambda_min_ratio must lie in (0, 1)");
        if (max_support < 1) fail(ErrorKind::config, "mcp: max_support must be >= 1");
        if (window < 2) fail(ErrorKind::config, "mcp: window must be >= 2");
        if (!(tol > 0.0) || max_iterations < 1) fail(ErrorKind::config, "mcp: bad convergence settings");
    }
};

/// q_a(x; lambda) = lambda|x| - x^2/(2a) for |x| <= a lambda, else a lambda^2 / 2.
inline double mcp_penalty(double x, double lambda, double a) {
    const double ax = std::fabs(x);
    return ax <= a * lambda ? lambda * ax - x * x / (2.0 * a) : 0.5 * a * lambda * lambda;
}

inline double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

/// Minimizer of (b - z)^2 / 2 + q_a(b; lambda) for a > 1.
inline double firm_threshold(double z, double lambda, double a) {
    const double az = std::fabs(z);
    if (az <= lambda) return 0.0;
    if (az <= a * lambda) return soft_threshold(z, lambda) / (1.0 - 1.0 / a);
    return z;
}

inline double penalty_value(double x, double lambda, const McpConfig& cfg) {
    return cfg.penalty == Penalty::lasso ? lambda * std::fabs(x) : mcp_penalty(x, lambda, cfg.a);
}

/// Descending path: lambda_max then log-spaced down to lambda_max * ratio.
inline std::vector<double> lambda_path_from_max(double lambda_max, const McpConfig& cfg) {
    std::vector<double> path;
    if (cfg.n_lambda == 1) return {lambda_max};
    const double step = std::log(cfg.lambda_min_ratio) / (cfg.n_lambda - 1);
    for (int k = 0; k < cfg.n_lambda; ++k) path.push_back(lambda_max * std::exp(step * k));
    path.back() = lambda_max * cfg.lambda_min_ratio;
    return path;
}

/// Standardized least-squares problem in covariance form:
///   minimize yy/2 - b'z + b'Cb/2 + sum_j q(b_j)
/// which equals (1/2n)||y - Xs b||^2 + sum_j q(b_j) for columns Xs scaled to
/// unit root-mean-square (C = Xs'Xs/n, z = Xs'y/n, yy = y'y/n).
struct StandardizedProblem {
    Eigen::MatrixXd gram;
    Eigen::VectorXd z;
    double yy = 0.0;
    Eigen::VectorXd scale;      // column scale factors; 0 marks an unusable column
    std::vector<char> usable;
};

inline Eigen::VectorXd column_scales(const Eigen::MatrixXd& x) {
    const double n = static_cast<double>(x.rows());
    return (x.colwise().squaredNorm().transpose() / n).cwiseSqrt();
}

inline StandardizedProblem standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    StandardizedProblem sp;
    const double n = static_cast<double>(x.rows());
    sp.scale = column_scales(x);
    const auto p = x.cols();
    sp.usable.assign(static_cast<std::size_t>(p), 0);
    Eigen::VectorXd inv(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        sp.usable[static_cast<std::size_t>(j)] = sp.scale(j) > 0.0;
        inv(j) = sp.scale(j) > 0.0 ? 1.0 / sp.scale(j) : 0.0;
    }
    sp.gram = inv.asDiagonal() * (x.transpose() * x / n) * inv.asDiagonal();
    for (Eigen::Index j = 0; j < p; ++j)
        if (sp.usable[static_cast<std::size_t>(j)]) sp.gram(j, j) = 1.0;
    sp.z = inv.asDiagonal() * (x.transpose() * y / n);
    sp.yy = y.squaredNorm() / n;
    return sp;
}

inline double objective(const StandardizedProblem& sp, const Eigen::VectorXd& b, double lambda,
                        const McpConfig& cfg) {
    double pen = 0.0;
    for (Eigen::Index j = 0; j < b.size(); ++j) pen += penalty_value(b(j), lambda, cfg);
    return 0.5 * sp.yy - b.dot(sp.z) + 0.5 * b.dot(sp.gram * b) + pen;
}

/// Factorization of the last quadratic piece tried by `active_set_step`,
/// keyed by its nonzero pattern and penalty regions. The piece does not
/// depend on lambda, so consecutive path points often reuse it.
struct ActiveSetCache {
    std::vector<Eigen::Index> active;
    std::vector<char> firm;
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    bool usable = false;
};

/// Nonzero pattern of `b` and, per nonzero, whether it lies in the penalized
/// region of the penalty.
inline void active_pattern(const Eigen::VectorXd& b, double lambda, const McpConfig& cfg,
                           std::vector<Eigen::Index>& active, std::vector<char>& firm) {
    active.clear();
    firm.clear();
    for (Eigen::Index j = 0; j < b.size(); ++j)
        if (b(j) != 0.0) {
            active.push_back(j);
            firm.push_back(cfg.penalty == Penalty::lasso || std::fabs(b(j)) <= cfg.a * lambda);
        }
}

/// Jumps to the stationary point of the quadratic piece holding the current
/// nonzero pattern, signs and penalty regions fixed. Taken only when the
/// solution keeps that pattern and does not raise the objective; `c` is
/// rebuilt afterwards. With `only_cached`, gives up unless the piece is
/// already factorized. Returns whether the step was taken.
inline bool active_set_step(const StandardizedProblem& sp, double lambda, const McpConfig& cfg, Eigen::VectorXd& b,
                            Eigen::VectorXd& c, ActiveSetCache& cache, bool only_cached = false) {
    std::vector<Eigen::Index> act;
    std::vector<char> firm;
    active_pattern(b, lambda, cfg, act, firm);
    if (act.empty()) return false;
    const auto s = static_cast<Eigen::Index>(act.size());
    const bool lasso = cfg.penalty == Penalty::lasso;
    if (!(cache.active == act && cache.firm == firm)) {
        if (only_cached) return false;
        Eigen::MatrixXd h(s, s);
        for (Eigen::Index u = 0; u < s; ++u) {
            for (Eigen::Index v = 0; v < s; ++v)
                h(u, v) = sp.gram(act[static_cast<std::size_t>(u)], act[static_cast<std::size_t>(v)]);
            if (!lasso && firm[static_cast<std::size_t>(u)]) h(u, u) -= 1.0 / cfg.a;
        }
        cache.active = act;
        cache.firm = firm;
        cache.ldlt.compute(h);
        cache.usable = cache.ldlt.info() == Eigen::Success && cache.ldlt.isPositive();
    }
    if (!cache.usable) return false;
    Eigen::VectorXd rhs(s);
    for (Eigen::Index u = 0; u < s; ++u) {
        const auto j = act[static_cast<std::size_t>(u)];
        rhs(u) = sp.z(j);
        if (firm[static_cast<std::size_t>(u)]) rhs(u) -= lambda * (b(j) > 0.0 ? 1.0 : -1.0);
    }
    const Eigen::VectorXd sol = cache.ldlt.solve(rhs);
    if (!sol.allFinite()) return false;
    Eigen::VectorXd cand = b;
    for (Eigen::Index u = 0; u < s; ++u) {
        const auto j = act[static_cast<std::size_t>(u)];
        const double v = sol(u);
        if (v == 0.0 || (v > 0.0) != (b(j) > 0.0)) return false;
        if (!lasso && firm[static_cast<std::size_t>(u)] != (std::fabs(v) <= cfg.a * lambda)) return false;
        cand(j) = v;
    }
    if (objective(sp, cand, lambda, cfg) > objective(sp, b, lambda, cfg)) return false;
    b = cand;
    c = sp.z - sp.gram * b;
    return true;
}

struct CdOutcome {
    int sweeps = 0;
    bool converged = false;
};

/// Cyclic coordinate descent at one lambda, warm-started from `b` with
/// gradient residual `c = z - C b` maintained incrementally. Full sweeps
/// alternate with sweeps over the active set until a full sweep changes no
/// coefficient by more than cfg.tol. `trace`, if given, receives the
/// objective after every sweep.
inline CdOutcome coordinate_descent(const StandardizedProblem& sp, double lambda, const McpConfig& cfg,
                                    Eigen::VectorXd& b, Eigen::VectorXd& c,
                                    std::vector<double>* trace = nullptr, ActiveSetCache* cache = nullptr) {
    const auto p = b.size();
    CdOutcome out;
    auto update = [&](Eigen::Index j) {
        const double u = c(j) + b(j);
        const double nb = cfg.penalty == Penalty::lasso ? soft_threshold(u, lambda) : firm_threshold(u, lambda, cfg.a);
        const double delta = nb - b(j);
        if (delta != 0.0) {
            b(j) = nb;
            c.noalias() -= delta * sp.gram.col(j);
        }
        return std::fabs(delta);
    };
    std::vector<Eigen::Index> active;
    if (cache && active_set_step(sp, lambda, cfg, b, c, *cache, true) && trace)
        trace->push_back(objective(sp, b, lambda, cfg));
    while (out.sweeps < cfg.max_iterations) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j)
            if (sp.usable[static_cast<std::size_t>(j)]) max_change = std::max(max_change, update(j));
        ++out.sweeps;
        if (trace) trace->push_back(objective(sp, b, lambda, cfg));
        if (max_change < cfg.tol) {
            out.converged = true;
            break;
        }
        active.clear();
        for (Eigen::Index j = 0; j < p; ++j)
            if (b(j) != 0.0) active.push_back(j);
        int inner_sweeps = 0;
        while (out.sweeps < cfg.max_iterations) {
            double inner = 0.0;
            for (auto j : active) inner = std::max(inner, update(j));
            ++out.sweeps;
            if (trace) trace->push_back(objective(sp, b, lambda, cfg));
            if (inner < cfg.tol) break;
            ++inner_sweeps;
            if (cache && inner_sweeps % 16 == 0 && active_set_step(sp, lambda, cfg, b, c, *cache)) {
                if (trace) trace->back() = objective(sp, b, lambda, cfg);
                break;
            }
        }
    }
    return out;
}

/// Coefficients along a path for one standardized problem.
struct PathFit {
    Eigen::MatrixXd standardized; // p x n_lambda
    Eigen::MatrixXd coefficients; // p x n_lambda, on the original column scale
    std::vector<char> converged;
    std::vector<int> sweeps;

    bool all_converged() const {
        return std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
    }
};

inline PathFit fit_path(const StandardizedProblem& sp, const std::vector<double>& path, const McpConfig& cfg,
                        std::vector<std::vector<double>>* traces = nullptr) {
    const auto p = sp.z.size();
    const auto k = static_cast<Eigen::Index>(path.size());
    PathFit fit;
    fit.standardized = Eigen::MatrixXd::Zero(p, k);
    fit.coefficients = Eigen::MatrixXd::Zero(p, k);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd c = sp.z;
    ActiveSetCache cache;
    for (Eigen::Index l = 0; l < k; ++l) {
        std::vector<double>* trace = nullptr;
        if (traces) trace = &traces->emplace_back();
        const auto outcome = coordinate_descent(sp, path[static_cast<std::size_t>(l)], cfg, b, c, trace, &cache);
        fit.converged.push_back(outcome.converged);
        fit.sweeps.push_back(outcome.sweeps);
        fit.standardized.col(l) = b;
        for (Eigen::Index j = 0; j < p; ++j)
            fit.coefficients(j, l) = sp.scale(j) > 0.0 ? b(j) / sp.scale(j) : 0.0;
    }
    return fit;
}

/// lambda_max = max_j |X_j . y| / n on unit-RMS columns, then log-spaced.
/// An all-zero response yields the single-point path {0}.
inline std::vector<double> lambda_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const McpConfig& cfg,
                                       std::vector<std::string>* warnings = nullptr) {
    const auto sp = standardize(x, y);
    const double lambda_max = sp.z.size() ? sp.z.cwiseAbs().maxCoeff() : 0.0;
    if (lambda_max == 0.0) {
        if (warnings) warnings->push_back("lambda_path: response is identically zero; using lambda = 0");
        return {0.0};
    }
    return lambda_path_from_max(lambda_max, cfg);
}

/// MCP (or lasso) path on a raw design: columns are scaled to unit RMS,
/// fitted, and coefficients returned on the original scale.
inline PathFit fit_mcp_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& path,
                            const McpConfig& cfg) {
    if (!std::is_sorted(path.rbegin(), path.rend()))
        fail(ErrorKind::config, "fit_mcp_path: path must be descending");
    return fit_path(standardize(x, y), path, cfg);
}

/// lambda* = largest lambda with MSE <= min MSE + SE(argmin). Returns its path index.
inline std::size_t select_lambda_1se(const std::vector<double>& mse, const std::vector<double>& se) {
    if (mse.empty() || mse.size() != se.size()) fail(ErrorKind::data, "select_lambda_1se: bad inputs");
    std::size_t best = 0;
    for (std::size_t k = 1; k < mse.size(); ++k)
        if (mse[k] < mse[best]) best = k;
    const double bound = mse[best] + se[best];
    for (std::size_t k = 0; k < mse.size(); ++k)
        if (mse[k] <= bound) return k;
    return best;
}

/// Keeps at most `cap` coefficients, ranked by |standardized coefficient|
/// (ties to the lower index). Returns the kept indices in ascending order.
inline std::vector<std::size_t> cap_support(const Eigen::VectorXd& standardized, int cap) {
    std::vector<std::size_t> support;
    for (Eigen::Index j = 0; j < standardized.size(); ++j)
        if (standardized(j) != 0.0) support.push_back(static_cast<std::size_t>(j));
    if (support.size() > static_cast<std::size_t>(cap)) {
        std::stable_sort(support.begin(), support.end(), [&](std::size_t i, std::size_t j) {
            return std::fabs(standardized(static_cast<Eigen::Index>(i))) >
                   std::fabs(standardized(static_cast<Eigen::Index>(j)));
        });
        support.resize(static_cast<std::size_t>(cap));
        std::sort(support.begin(), support.end());
    }
    return support;
}

/// Regression design for target weeks [begin, end): response at week t,
/// regressors (market, basis) at week t - lag, all in excess returns.
struct WindowDesign {
    std::size_t begin = 0;
    std::size_t end = 0;
    int lag = 0;
    Eigen::VectorXd market;
    Residualized basis;     // market-residualized basis columns
    StandardizedProblem base; // gram and scales; z and yy filled per stock

    std::size_t rows() const { return end - begin; }
};

inline WindowDesign make_window(const ExcessPanel& panel, std::size_t begin, std::size_t end, int lag,
                                const McpConfig& cfg) {
    if (begin < static_cast<std::size_t>(lag) || end <= begin || end > panel.size())
        fail(ErrorKind::data, "window [" + std::to_string(begin) + ", " + std::to_string(end) +
                                  ") is outside the available history");
    const auto rb = static_cast<Eigen::Index>(begin - static_cast<std::size_t>(lag));
    const auto n = static_cast<Eigen::Index>(end - begin);
    WindowDesign w;
    w.begin = begin;
    w.end = end;
    w.lag = lag;
    w.market = panel.market.segment(rb, n);
    w.basis = residualize_market(panel.basis.middleRows(rb, n), w.market, cfg.market_intercept);
    w.base = standardize(w.basis.residuals, Eigen::VectorXd::Zero(n));
    return w;
}

/// Per-stock quantities on a window: the stock's own market residualization
/// and the standardized problem sharing the window's gram.
struct StockProblem {
    double loading = 0.0;
    double intercept = 0.0;
    StandardizedProblem problem;
};

inline StockProblem stock_problem(const WindowDesign& w, const Eigen::VectorXd& y, bool market_intercept) {
    const auto r = residualize_market(y, w.market, market_intercept);
    StockProblem sp;
    sp.loading = r.loadings(0);
    sp.intercept = r.intercepts(0);
    const Eigen::VectorXd yt = r.residuals.col(0);
    const double n = static_cast<double>(y.size());
    sp.problem.gram = w.base.gram;
    sp.problem.scale = w.base.scale;
    sp.problem.usable = w.base.usable;
    Eigen::VectorXd inv = w.base.scale;
    for (Eigen::Index j = 0; j < inv.size(); ++j) inv(j) = inv(j) > 0.0 ? 1.0 / inv(j) : 0.0;
    sp.problem.z = inv.asDiagonal() * (w.basis.residuals.transpose() * yt / n);
    sp.problem.yy = yt.squaredNorm() / n;
    return sp;
}

struct SelectionResult {
    std::string stock;
    std::size_t stock_index = 0;
    int lag = 0;
    bool skipped = false;
    std::string skip_reason;
    std::vector<double> lambdas;
    std::vector<double> mse;
    std::vector<double> se;
    Eigen::MatrixXd path_coefficients; // p x n_lambda on the training window, original scale
    std::size_t lambda_index = 0;
    double lambda = 0.0;
    std::vector<std::size_t> support; // basis column indices, ascending
    bool capped = false;
    RegressionFit fit;                // y on [market, basis[support]] with intercept, training window
    bool converged = true;
    std::vector<std::string> warnings;
};

/// Regressor matrix for a stock's final model: market then the support columns.
inline Eigen::MatrixXd support_regressors(const ExcessPanel& panel, const std::vector<std::size_t>& support) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(panel.size()), static_cast<Eigen::Index>(support.size() + 1));
    x.col(0) = panel.market;
    for (std::size_t k = 0; k < support.size(); ++k)
        x.col(static_cast<Eigen::Index>(k + 1)) = panel.basis.col(static_cast<Eigen::Index>(support[k]));
    return x;
}

/// OLS with intercept of y at target weeks [begin, end) on regressor rows
/// t - lag. Shared by the selected-basis model and the factor baseline.
inline RegressionFit fit_window(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& y, int lag,
                                std::size_t begin, std::size_t end) {
    if (begin < static_cast<std::size_t>(lag) || end <= begin || end > static_cast<std::size_t>(y.size()))
        fail(ErrorKind::data, "fit_window: window outside the available history");
    const auto n = static_cast<Eigen::Index>(end - begin);
    return ols(regressors.middleRows(static_cast<Eigen::Index>(begin) - lag, n),
               y.segment(static_cast<Eigen::Index>(begin), n), true);
}

/// Final least-squares fit of the stock on market + support over the window.
inline RegressionFit finalize_fit(const ExcessPanel& panel, std::size_t stock, const std::vector<std::size_t>& support,
                                  std::size_t begin, std::size_t end, int lag = 0) {
    return fit_window(support_regressors(panel, support), panel.stocks.col(static_cast<Eigen::Index>(stock)), lag,
                      begin, end);
}

/// alpha + sum_j beta_j x_j for lagged regressors x (market first).
inline double predict_one_week_ahead(const RegressionFit& fit, const Eigen::VectorXd& lagged_regressors) {
    if (lagged_regressors.size() != fit.coefficients.size())
        fail(ErrorKind::data, "predict_one_week_ahead: regressor count mismatch");
    if (!lagged_regressors.allFinite()) fail(ErrorKind::data, "predict_one_week_ahead: missing lagged value");
    return fit.predict(lagged_regressors);
}

/// For each target week t in [begin, end): refit OLS on [t - window, t) and
/// predict week t from regressor row t - lag.
inline std::vector<double> rolling_predictions(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& y, int lag,
                                               int window, std::size_t begin, std::size_t end) {
    std::vector<double> out;
    for (std::size_t t = begin; t < end; ++t) {
        if (t < static_cast<std::size_t>(window))
            fail(ErrorKind::data, "rolling_predictions: insufficient history before week " + std::to_string(t));
        const auto fit = fit_window(regressors, y, lag, t - static_cast<std::size_t>(window), t);
        out.push_back(fit.predict(regressors.row(static_cast<Eigen::Index>(t) - lag).transpose()));
    }
    return out;
}

/// Selection machinery over one excess panel in one mode (lag 0 explains
/// contemporaneous returns, lag 1 predicts one week ahead). Window designs
/// for the training window and every rolling validation window are built
/// once and shared by all stocks; every per-stock computation is pure.
class SelectionEngine {
public:
    SelectionEngine(ExcessPanel panel, McpConfig cfg, int lag)
        : panel_(std::move(panel)), cfg_(std::move(cfg)), lag_(lag) {
        cfg_.validate();
        if (lag_ < 0) fail(ErrorKind::config, "selection: lag must be >= 0");
        const auto w = static_cast<std::size_t>(cfg_.window);
        if (panel_.train_end < w + static_cast<std::size_t>(lag_))
            fail(ErrorKind::data, "selection: insufficient history before validation start (need " +
                                      std::to_string(w + static_cast<std::size_t>(lag_)) + " weeks, have " +
                                      std::to_string(panel_.train_end) + ")");
        const auto last = std::min(panel_.validation_end, panel_.size());
        for (std::size_t t = panel_.train_end; t < std::max(last, panel_.train_end + 1); ++t)
            windows_.push_back(make_window(panel_, t - w, t, lag_, cfg_));
    }

    const ExcessPanel& panel() const { return panel_; }
    const McpConfig& config() const { return cfg_; }
    int lag() const { return lag_; }

    /// Window ending just before target week t (t in the validation range);
    /// the first one is also the training window.
    const WindowDesign& window_before(std::size_t t) const { return windows_.at(t - panel_.train_end); }
    const WindowDesign& training_window() const { return windows_.front(); }

    /// Validation weeks available in this panel.
    std::size_t validation_begin() const { return panel_.train_end; }
    std::size_t validation_last() const { return std::min(panel_.validation_end, panel_.size()); }

    /// Weeks a stock must cover: the training window through the last week.
    bool stock_complete(std::size_t stock) const {
        const auto col = panel_.stocks.col(static_cast<Eigen::Index>(stock));
        const auto start = static_cast<Eigen::Index>(panel_.train_end - static_cast<std::size_t>(cfg_.window));
        return col.segment(start, col.size() - start).allFinite();
    }

    Eigen::VectorXd window_response(const WindowDesign& w, std::size_t stock) const {
        return panel_.stocks.col(static_cast<Eigen::Index>(stock))
            .segment(static_cast<Eigen::Index>(w.begin), static_cast<Eigen::Index>(w.rows()));
    }

    /// Path fitted on the training window.
    std::pair<std::vector<double>, PathFit> training_path(std::size_t stock, std::vector<std::string>* warnings) const {
        const auto& w = training_window();
        const auto sp = stock_problem(w, window_response(w, stock), cfg_.market_intercept);
        const double lambda_max = sp.problem.z.size() ? sp.problem.z.cwiseAbs().maxCoeff() : 0.0;
        std::vector<double> path;
        if (lambda_max == 0.0) {
            if (warnings) warnings->push_back("lambda_path: residualized response is identically zero; using lambda = 0");
            path = {0.0};
        } else {
            path = lambda_path_from_max(lambda_max, cfg_);
        }
        return {path, fit_path(sp.problem, path, cfg_)};
    }

    /// Predictions of target week t for every lambda, refitting the market
    /// residualization and the path on the window [t - window, t).
    Eigen::VectorXd predict_week(std::size_t stock, const std::vector<double>& path, std::size_t t,
                                 bool* converged = nullptr) const {
        const auto& w = window_before(t);
        const auto sp = stock_problem(w, window_response(w, stock), cfg_.market_intercept);
        const auto fit = fit_path(sp.problem, path, cfg_);
        if (converged) *converged = fit.all_converged();
        const auto row = static_cast<Eigen::Index>(t) - lag_;
        const double m = panel_.market(row);
        const Eigen::VectorXd x_resid =
            panel_.basis.row(row).transpose() - w.basis.intercepts - w.basis.loadings * m;
        const double base = sp.intercept + sp.loading * m;
        return (fit.coefficients.transpose() * x_resid).array() + base;
    }

    /// Rolling forward validation: per-lambda MSE and its standard error
    /// (sample standard deviation of squared errors over sqrt(#weeks)).
    std::pair<std::vector<double>, std::vector<double>> rolling_forward_validate(std::size_t stock,
                                                                                 const std::vector<double>& path,
                                                                                 bool* converged = nullptr) const {
        const auto begin = validation_begin();
        const auto end = validation_last();
        if (end <= begin) fail(ErrorKind::data, "rolling_forward_validate: empty validation range");
        const auto k = static_cast<Eigen::Index>(path.size());
        const auto weeks = static_cast<Eigen::Index>(end - begin);
        Eigen::MatrixXd sq(weeks, k);
        bool all_conv = true;
        const auto y = panel_.stocks.col(static_cast<Eigen::Index>(stock));
        for (std::size_t t = begin; t < end; ++t) {
            bool conv = true;
            const auto pred = predict_week(stock, path, t, &conv);
            all_conv = all_conv && conv;
            sq.row(static_cast<Eigen::Index>(t - begin)) =
                (pred.array() - y(static_cast<Eigen::Index>(t))).square().matrix().transpose();
        }
        if (converged) *converged = all_conv;
        std::vector<double> mse(static_cast<std::size_t>(k)), se(static_cast<std::size_t>(k));
        for (Eigen::Index l = 0; l < k; ++l) {
            const double mean = sq.col(l).mean();
            const double var = weeks > 1 ? (sq.col(l).array() - mean).square().sum() / double(weeks - 1) : 0.0;
            mse[static_cast<std::size_t>(l)] = mean;
            se[static_cast<std::size_t>(l)] = std::sqrt(var) / std::sqrt(double(weeks));
        }
        return {mse, se};
    }

    /// Full selection for one stock: training path, rolling validation,
    /// 1se lambda, support cap, final least-squares fit on the training window.
    SelectionResult select(std::size_t stock) const {
        SelectionResult r;
        r.stock = panel_.stock_ids.at(stock);
        r.stock_index = stock;
        r.lag = lag_;
        if (!stock_complete(stock)) {
            r.skipped = true;
            r.skip_reason = "incomplete return history";
            return r;
        }
        auto [path, train_fit] = training_path(stock, &r.warnings);
        r.lambdas = path;
        r.path_coefficients = train_fit.coefficients;
        bool conv = train_fit.all_converged();
        bool val_conv = true;
        std::tie(r.mse, r.se) = rolling_forward_validate(stock, path, &val_conv);
        r.converged = conv && val_conv;
        if (!r.converged) r.warnings.push_back("coordinate descent hit the iteration limit");
        r.lambda_index = select_lambda_1se(r.mse, r.se);
        r.lambda = path[r.lambda_index];
        const Eigen::VectorXd chosen = train_fit.standardized.col(static_cast<Eigen::Index>(r.lambda_index));
        const auto nonzero = static_cast<std::size_t>((chosen.array() != 0.0).count());
        r.support = cap_support(chosen, cfg_.max_support);
        r.capped = nonzero > r.support.size();
        const auto& w = training_window();
        r.fit = finalize_fit(panel_, stock, r.support, w.begin, w.end, lag_);
        if (!r.fit.dropped.empty()) r.warnings.push_back("collinear regressors dropped from the final fit");
        return r;
    }

    std::vector<SelectionResult> select_all(int workers) const {
        std::vector<SelectionResult> out(panel_.stock_ids.size());
        parallel_for(out.size(), workers, [&](std::size_t i) { out[i] = select(i); });
        return out;
    }

private:
    ExcessPanel panel_;
    McpConfig cfg_;
    int lag_ = 0;
    std::vector<WindowDesign> windows_;
};

} // namespace neus::factor
