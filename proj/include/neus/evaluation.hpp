#pragma once

// Goodness of fit, intercept and nested F tests, multiple-testing control,
// and industry aggregation.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "neus/distributions.hpp"
#include "neus/error.hpp"
#include "neus/factor_model.hpp"
#include "neus/regression.hpp"

namespace neus::eval {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

/// 1 - [SSE/(n-r-1)] / [SST/(n-1)]. NaN when SST is zero or df < 1.
inline double adjusted_r2_insample(const RegressionFit& fit) {
    const double n = static_cast<double>(fit.n);
    const double df = n - static_cast<double>(fit.r) - 1.0;
    if (df < 1.0 || fit.sst <= 0.0) return nan;
    return 1.0 - (fit.sse / df) / (fit.sst / (n - 1.0));
}

/// Out-of-sample adjusted R^2 with the denominator taken about a fixed
/// baseline mean (the validation-period mean). May be negative.
inline double adjusted_r2_oos(const std::vector<double>& predictions, const std::vector<double>& actuals,
                              double baseline_mean, int r) {
    if (predictions.size() != actuals.size()) fail(ErrorKind::data, "adjusted_r2_oos: length mismatch");
    const double n = static_cast<double>(actuals.size());
    const double df = n - r - 1.0;
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        sse += (actuals[i] - predictions[i]) * (actuals[i] - predictions[i]);
        sst += (actuals[i] - baseline_mean) * (actuals[i] - baseline_mean);
    }
    if (df < 1.0 || sst <= 0.0) return nan;
    return 1.0 - (sse / df) / (sst / (n - 1.0));
}

/// Two-sided t-test p-value for a zero intercept (df = n - r - 1).
inline double intercept_test(const RegressionFit& fit) {
    if (!fit.has_intercept) fail(ErrorKind::data, "intercept_test: fit has no intercept");
    return fit.intercept_p;
}

struct FTestRecord {
    double ss_f = 0.0; // restricted
    double ss_g = 0.0; // full
    int r1 = 5;
    int r2 = 0;
    std::size_t n = 0;
    double f = 0.0;
    double p = 1.0;
};

/// F = [(SS_F - SS_G) / r2] / [SS_G / (n - r1 - r2)] ~ F(r2, n - r1 - r2).
inline FTestRecord nested_f_test(double ss_f, double ss_g, int r2, std::size_t n, int r1 = 5) {
    FTestRecord rec{ss_f, ss_g, r1, r2, n, 0.0, 1.0};
    const double df2 = static_cast<double>(n) - r1 - r2;
    if (r2 < 0 || df2 < 1.0) fail(ErrorKind::data, "nested_f_test: need n > r1 + r2");
    if (ss_g > ss_f) {
        // rounding can leave the full model marginally worse; treat as no improvement
        if (ss_g - ss_f > 1e-12 * std::max(1.0, ss_f))
            fail(ErrorKind::data, "nested_f_test: full-model SSE exceeds restricted SSE");
        ss_g = ss_f;
    }
    if (r2 == 0 || ss_f == ss_g) return rec;
    if (ss_g == 0.0) {
        rec.f = std::numeric_limits<double>::infinity();
        rec.p = 0.0;
        return rec;
    }
    rec.f = ((ss_f - ss_g) / r2) / (ss_g / df2);
    rec.p = stats::f_upper_tail(rec.f, r2, df2);
    return rec;
}

enum class Correction { bonferroni, bh, bhy };

/// Buckets of Table-1 style summaries: [0, 0.05], (0.05, 0.9], (0.9, 1].
inline std::array<std::size_t, 3> bucket_counts(const std::vector<double>& values) {
    std::array<std::size_t, 3> counts{0, 0, 0};
    for (double v : values) {
        if (std::isnan(v)) continue;
        if (v <= 0.05) ++counts[0];
        else if (v <= 0.9) ++counts[1];
        else ++counts[2];
    }
    return counts;
}

inline constexpr std::array<std::string_view, 3> bucket_labels{"0-0.05", "0.05-0.9", "0.9-1"};

/// Step-up adjusted p-values: q_(i) = min_{k>=i} min(1, m c p_(k) / k),
/// with c = 1 (BH) or c = sum_{i<=m} 1/i (BHY).
inline std::vector<double> step_up_qvalues(const std::vector<double>& p, double c) {
    const auto m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::vector<double> q(m, 1.0);
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const double v = std::min(1.0, double(m) * c * p[order[k]] / double(k + 1));
        running = std::min(running, v);
        q[order[k]] = running;
    }
    return q;
}

inline double harmonic_number(std::size_t m) {
    double c = 0.0;
    for (std::size_t i = 1; i <= m; ++i) c += 1.0 / double(i);
    return c;
}

struct MultipleTestReport {
    std::vector<double> p_values;
    double level = 0.05;
    std::vector<char> bonferroni;   // p <= level / m
    std::vector<char> bh;           // BH step-up at level
    std::vector<char> bhy;          // BHY step-up at level
    std::vector<double> bh_qvalues;
    std::vector<double> bhy_qvalues;
    std::array<std::size_t, 3> p_buckets{};
    std::array<std::size_t, 3> bhy_q_buckets{};

    static std::size_t count(const std::vector<char>& v) {
        return static_cast<std::size_t>(std::count(v.begin(), v.end(), 1));
    }
};

/// Applies Bonferroni, BH and BHY at `level`. Step-up decisions are taken as
/// q <= level, which is equivalent to the largest-k step-up rule.
inline MultipleTestReport multiple_test_correct(const std::vector<double>& p_values, double level = 0.05) {
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::data, "multiple_test_correct: p-value outside [0, 1]");
    MultipleTestReport rep;
    rep.p_values = p_values;
    rep.level = level;
    const auto m = p_values.size();
    rep.bh_qvalues = step_up_qvalues(p_values, 1.0);
    rep.bhy_qvalues = step_up_qvalues(p_values, harmonic_number(m));
    rep.bonferroni.resize(m);
    rep.bh.resize(m);
    rep.bhy.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        rep.bonferroni[i] = p_values[i] <= level / double(m);
        rep.bh[i] = rep.bh_qvalues[i] <= level;
        rep.bhy[i] = rep.bhy_qvalues[i] <= level;
    }
    rep.p_buckets = bucket_counts(p_values);
    rep.bhy_q_buckets = bucket_counts(rep.bhy_qvalues);
    return rep;
}

/// Rejections of a single named correction.
inline std::vector<char> reject(const std::vector<double>& p_values, Correction method, double level = 0.05) {
    const auto rep = multiple_test_correct(p_values, level);
    switch (method) {
    case Correction::bonferroni: return rep.bonferroni;
    case Correction::bh: return rep.bh;
    case Correction::bhy: return rep.bhy;
    }
    return {};
}

inline const std::vector<std::string>& industry_names() {
    static const std::vector<std::string> names{
        "Financial Services",         "Technology",
        "Agriculture",                "Industrial Goods",
        "Consumer Goods",             "Basic Materials/Resources",
        "Health Care/Life Sciences",  "Leisure/Arts/Hospitality",
        "Media/Entertainment",        "Transportation/Logistics",
        "Utilities",                  "Telecommunication Services",
        "Automotive",                 "Real Estate/Construction",
        "Business/Consumer Services", "Energy",
        "Retail/Wholesale"};
    return names;
}

inline constexpr std::string_view unclassified = "Unclassified";

/// Adjusted R^2 values of one stock for the aggregated tasks.
struct StockScores {
    std::string stock;
    double in_sample = nan;
    double out_of_sample = nan;
};

struct IndustryRow {
    std::string industry;
    std::size_t n_stocks = 0;
    std::map<std::string, double> in_sample;     // model -> mean
    std::map<std::string, double> out_of_sample; // model -> mean
};

struct IndustryReport {
    std::vector<IndustryRow> rows; // canonical industry order, then "Unclassified"
    std::vector<std::string> unmapped_stocks;
    std::vector<std::string> warnings;
};

inline double mean_finite(const std::vector<double>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            s += x;
            ++n;
        }
    return n ? s / double(n) : nan;
}

/// Standard error of the mean over finite entries.
inline double standard_error(const std::vector<double>& v) {
    const double m = mean_finite(v);
    double ss = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            ss += (x - m) * (x - m);
            ++n;
        }
    return n > 1 ? std::sqrt(ss / double(n - 1)) / std::sqrt(double(n)) : nan;
}

/// Per-industry means of each model's scores. Stocks whose industry is
/// missing or outside the canonical list are grouped as "Unclassified".
inline IndustryReport industry_summary(const std::map<std::string, std::vector<StockScores>>& scores_by_model,
                                       const std::map<std::string, std::string>& industry_of) {
    IndustryReport rep;
    const auto& names = industry_names();
    auto canonical = [&](const std::string& stock) -> std::string {
        auto it = industry_of.find(stock);
        if (it == industry_of.end() ||
            std::find(names.begin(), names.end(), it->second) == names.end())
            return std::string(unclassified);
        return it->second;
    };
    std::map<std::string, std::map<std::string, std::vector<double>>> ins, oos;
    std::map<std::string, std::vector<std::string>> members;
    bool first_model = true;
    for (const auto& [model, scores] : scores_by_model) {
        for (const auto& s : scores) {
            const auto ind = canonical(s.stock);
            ins[ind][model].push_back(s.in_sample);
            oos[ind][model].push_back(s.out_of_sample);
            if (first_model) {
                members[ind].push_back(s.stock);
                if (ind == unclassified) rep.unmapped_stocks.push_back(s.stock);
            }
        }
        first_model = false;
    }
    std::sort(rep.unmapped_stocks.begin(), rep.unmapped_stocks.end());
    std::vector<std::string> order = names;
    order.emplace_back(unclassified);
    for (const auto& ind : order) {
        if (!members.contains(ind)) {
            if (ind != unclassified) rep.warnings.push_back("industry '" + ind + "' has no evaluated stocks");
            continue;
        }
        IndustryRow row;
        row.industry = ind;
        row.n_stocks = members[ind].size();
        for (const auto& [model, v] : ins[ind]) row.in_sample[model] = mean_finite(v);
        for (const auto& [model, v] : oos[ind]) row.out_of_sample[model] = mean_finite(v);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

/// Factor-baseline OLS (with intercept) of a stock's excess returns on the
/// factor columns over target weeks [begin, end). Uses the same fitting path
/// as the selected-basis model.
inline RegressionFit baseline_ff5_fit(const Eigen::MatrixXd& factors, const Eigen::VectorXd& stock_excess,
                                      std::size_t begin, std::size_t end, int lag = 0) {
    if (factors.rows() != stock_excess.size())
        fail(ErrorKind::data, "baseline_ff5_fit: factor series not aligned to the week grid");
    const auto rb = static_cast<Eigen::Index>(begin) - lag;
    const auto n = static_cast<Eigen::Index>(end - begin);
    if (rb < 0 || !factors.middleRows(rb, n).allFinite())
        fail(ErrorKind::data, "baseline_ff5_fit: missing factor weeks in the fitting window");
    return factor::fit_window(factors, stock_excess, lag, begin, end);
}

} // namespace neus::eval
