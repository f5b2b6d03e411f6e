#include <gtest/gtest.h>

#include "neus/evaluation.hpp"
#include "test_support.hpp"

using namespace neus;
using namespace neus::eval;

TEST(AdjustedR2, InSampleCases) {
    RegressionFit f;
    f.n = 100;
    f.r = 5;
    f.sst = 1.0;
    f.sse = 0.5;
    EXPECT_NEAR(adjusted_r2_insample(f), 1.0 - 0.5 * 99.0 / 94.0, 1e-15);
    EXPECT_NEAR(adjusted_r2_insample(f), 0.4734, 1e-4);
    f.sse = 0.0;
    EXPECT_EQ(adjusted_r2_insample(f), 1.0);
    f.r = 0;
    f.sse = 1.0;
    EXPECT_EQ(adjusted_r2_insample(f), 0.0);
    f.sst = 0.0;
    EXPECT_TRUE(std::isnan(adjusted_r2_insample(f)));
}

TEST(AdjustedR2, OutOfSampleCases) {
    const std::vector<double> y{0.01, -0.02, 0.03, 0.0, 0.015};
    EXPECT_EQ(adjusted_r2_oos(y, y, 0.005, 2), 1.0);
    const std::vector<double> base(y.size(), 0.005);
    EXPECT_NEAR(adjusted_r2_oos(base, y, 0.005, 0), 0.0, 1e-15);
    const std::vector<double> bad(y.size(), 0.2);
    EXPECT_LT(adjusted_r2_oos(bad, y, 0.005, 0), 0.0);
    EXPECT_TRUE(std::isnan(adjusted_r2_oos(base, base, 0.005, 0)));
}

TEST(InterceptTest, RequiresIntercept) {
    RegressionFit f;
    f.has_intercept = false;
    EXPECT_THROW(intercept_test(f), Error);
}

TEST(NestedF, HandExamples) {
    const auto a = nested_f_test(100, 80, 5, 265);
    EXPECT_NEAR(a.f, 12.75, 1e-12);
    EXPECT_GT(a.p, 0.0);
    EXPECT_LT(a.p, 1e-9);
    const auto b = nested_f_test(50, 50, 3, 100);
    EXPECT_EQ(b.f, 0.0);
    EXPECT_EQ(b.p, 1.0);
    const auto c = nested_f_test(50, 0, 3, 100);
    EXPECT_TRUE(std::isinf(c.f));
    EXPECT_EQ(c.p, 0.0);
    EXPECT_THROW(nested_f_test(50, 60, 3, 100), Error);
    EXPECT_THROW(nested_f_test(50, 40, 3, 8), Error);
}

TEST(MultipleTesting, AllOnesRejectNothing) {
    const auto rep = multiple_test_correct(std::vector<double>(7, 1.0));
    EXPECT_EQ(MultipleTestReport::count(rep.bh), 0u);
    EXPECT_EQ(MultipleTestReport::count(rep.bhy), 0u);
    EXPECT_EQ(MultipleTestReport::count(rep.bonferroni), 0u);
    for (double q : rep.bhy_qvalues) EXPECT_EQ(q, 1.0);
}

TEST(MultipleTesting, StepUpHandExample) {
    const std::vector<double> p{0.01, 0.02, 0.04, 0.05};
    const auto rep = multiple_test_correct(p);
    EXPECT_EQ(MultipleTestReport::count(rep.bh), 4u);
    EXPECT_EQ(MultipleTestReport::count(rep.bonferroni), 1u);
    // q_(i) = min_{k>=i} m p_(k) / k
    const std::vector<double> q{0.04, 0.04, 0.05, 0.05};
    const double c = 1.0 + 0.5 + 1.0 / 3 + 0.25;
    EXPECT_NEAR(harmonic_number(4), c, 1e-15);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(rep.bh_qvalues[i], q[i], 1e-15);
        EXPECT_NEAR(rep.bhy_qvalues[i], q[i] * c, 1e-15);
    }
    EXPECT_EQ(MultipleTestReport::count(rep.bhy), 0u);
    // step-up: a large p ranked last still gets rejected when the tail qualifies
    const auto r2 = reject({0.04, 0.001, 0.03}, Correction::bh);
    EXPECT_EQ(r2, (std::vector<char>{1, 1, 1}));
}

TEST(MultipleTesting, NestingOnRandomInputs) {
    Rng rng(1);
    for (int rep = 0; rep < 500; ++rep) {
        std::vector<double> p(40);
        for (auto& v : p) v = uniform01(rng) < 0.3 ? 1e-4 * uniform01(rng) : uniform01(rng);
        const auto r = multiple_test_correct(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_LE(r.bonferroni[i], r.bhy[i]);
            EXPECT_LE(r.bhy[i], r.bh[i]);
        }
    }
}

TEST(MultipleTesting, BonferroniCanRejectWhereBhyDoesNot) {
    // a single small p-value among 100: p <= 0.05 / 100, but 100 c(100) p > 0.05
    std::vector<double> p(100, 0.5);
    p[0] = 0.0004;
    const auto r = multiple_test_correct(p);
    EXPECT_TRUE(r.bonferroni[0]);
    EXPECT_TRUE(r.bh[0]);
    EXPECT_FALSE(r.bhy[0]);
    EXPECT_NEAR(r.bhy_qvalues[0], 100 * harmonic_number(100) * 0.0004, 1e-12);
}

TEST(MultipleTesting, Buckets) {
    const auto b = bucket_counts({0.0, 0.05, 0.051, 0.9, 0.91, 1.0});
    EXPECT_EQ(b[0], 2u);
    EXPECT_EQ(b[1], 2u);
    EXPECT_EQ(b[2], 2u);
    EXPECT_EQ(bucket_labels[0], "0-0.05");
    EXPECT_THROW(multiple_test_correct({1.2}), Error);
}

TEST(Industry, MeansAndUnclassified) {
    EXPECT_EQ(industry_names().size(), 17u);
    std::map<std::string, std::vector<StockScores>> scores;
    scores["NEUS"] = {{"A", 0.5, 0.1}, {"B", 0.3, -0.1}, {"C", 0.2, 0.0}, {"D", 0.9, 0.4}};
    scores["FF5"] = {{"A", 0.4, 0.0}, {"B", 0.2, 0.1}, {"C", 0.1, 0.0}, {"D", 0.8, 0.3}};
    const std::map<std::string, std::string> ind{{"A", "Technology"}, {"B", "Technology"}, {"C", "Energy"},
                                                 {"D", "Pets"}};
    const auto rep = industry_summary(scores, ind);
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_EQ(rep.rows[0].industry, "Technology");
    EXPECT_NEAR(rep.rows[0].in_sample.at("NEUS"), 0.4, 1e-15);
    EXPECT_EQ(rep.rows[1].industry, "Energy");
    EXPECT_EQ(rep.rows[1].in_sample.at("FF5"), 0.1);
    EXPECT_EQ(rep.rows[2].industry, "Unclassified");
    EXPECT_EQ(rep.unmapped_stocks, std::vector<std::string>{"D"});
    EXPECT_EQ(rep.warnings.size(), 15u);

    auto shuffled = scores;
    for (auto& [m, v] : shuffled) std::reverse(v.begin(), v.end());
    const auto rep2 = industry_summary(shuffled, ind);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        EXPECT_EQ(rep.rows[i].in_sample, rep2.rows[i].in_sample);
        EXPECT_EQ(rep.rows[i].out_of_sample, rep2.rows[i].out_of_sample);
    }
}

TEST(Baseline, FactorCombinationIsPerfectFitAndSharesPath) {
    Rng rng(6);
    const Eigen::MatrixXd f = fixtures::random_normal(120, 5, rng, 0.02);
    const Eigen::VectorXd y = f * Eigen::VectorXd::LinSpaced(5, -1, 1);
    const auto fit = baseline_ff5_fit(f, y, 10, 120);
    EXPECT_NEAR(fit.r_squared(), 1.0, 1e-12);
    const auto same = factor::fit_window(f, y, 0, 10, 120);
    EXPECT_EQ(fit.coefficients, same.coefficients);
    Eigen::MatrixXd g = f;
    g(50, 2) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(baseline_ff5_fit(g, y, 10, 120), Error);
}
