#include <gtest/gtest.h>

#include "neus/projection.hpp"
#include "test_support.hpp"

using namespace neus;
using namespace neus::projection;

namespace {

// Gaussian blobs around random centers; returns points and labels.
std::pair<Eigen::MatrixXd, std::vector<int>> blobs(int k, int per, int dim, double spread, std::uint64_t seed) {
    Rng rng(seed);
    const Eigen::MatrixXd centers = fixtures::random_normal(k, dim, rng, 1.0);
    Eigen::MatrixXd x(k * per, dim);
    std::vector<int> labels;
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < per; ++i) {
            x.row(c * per + i) = centers.row(c) + fixtures::random_normal(1, dim, rng, spread);
            labels.push_back(c);
        }
    return {x, labels};
}

double one_nn_accuracy(const Eigen::MatrixXd& y, const std::vector<int>& labels) {
    const auto d = pairwise_distances(y, Metric::euclidean);
    int ok = 0;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        Eigen::Index best = i == 0 ? 1 : 0;
        for (Eigen::Index j = 0; j < y.rows(); ++j)
            if (j != i && d(i, j) < d(i, best)) best = j;
        ok += labels[std::size_t(i)] == labels[std::size_t(best)];
    }
    return double(ok) / double(y.rows());
}

} // namespace

TEST(Knn, OrthogonalAndDuplicatePoints) {
    const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(3, 3);
    const auto g = knn_graph(e, 2, Metric::cosine);
    for (std::size_t i = 0; i < 3; ++i) {
        ASSERT_EQ(g.indices[i].size(), 2u);
        for (double d : g.distances[i]) EXPECT_NEAR(d, 1.0, 1e-15);
        for (auto j : g.indices[i]) EXPECT_NE(j, i);
    }
    Eigen::MatrixXd dup(4, 2);
    dup << 1, 0, 0.5, 0.5, 1, 0, 0, 1;
    const auto h = knn_graph(dup, 2, Metric::cosine);
    EXPECT_EQ(h.indices[0][0], 2u);
    EXPECT_EQ(h.distances[0][0], 0.0);
}

TEST(Knn, ZeroRowUnderCosineNamesRow) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 3);
    x.row(2).setZero();
    try {
        knn_graph(x, 2, Metric::cosine);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    }
}

TEST(Knn, SortedAndBounded) {
    Rng rng(3);
    const auto g = knn_graph(fixtures::random_normal(40, 10, rng), 6, Metric::cosine);
    for (const auto& d : g.distances) {
        EXPECT_TRUE(std::is_sorted(d.begin(), d.end()));
        for (double v : d) EXPECT_TRUE(v >= 0.0 && v <= 2.0);
    }
}

TEST(FuzzySet, ConstraintsAndSymmetrization) {
    Rng rng(4);
    for (int k : {4, 15}) {
        const auto g = knn_graph(fixtures::random_normal(60, 8, rng), k, Metric::cosine);
        const auto fg = fuzzy_simplicial_set(g);
        EXPECT_TRUE(fg.warnings.empty());
        for (std::size_t i = 0; i < fg.n; ++i) {
            EXPECT_EQ(fg.directed_weights[i][0], 1.0);
            double s = 0.0;
            for (double w : fg.directed_weights[i]) s += w;
            EXPECT_NEAR(s, std::log2(double(k)), 1e-5);
        }
        for (const auto& e : fg.edges) {
            EXPECT_GT(e.weight, 0.0);
            EXPECT_LE(e.weight, 1.0);
            EXPECT_EQ(edge_weight(fg, e.tail, e.head), e.weight);
            auto dir = [&](std::size_t a, std::size_t b) {
                for (std::size_t r = 0; r < g.indices[a].size(); ++r)
                    if (g.indices[a][r] == b) return fg.directed_weights[a][r];
                return 0.0;
            };
            const double a = dir(e.head, e.tail), b = dir(e.tail, e.head);
            EXPECT_NEAR(e.weight, a + b - a * b, 1e-15);
        }
    }
    // 0.5 + 0.5 - 0.25
    const double w = 0.5;
    EXPECT_EQ(w + w - w * w, 0.75);
}

TEST(CurveParams, ReferenceValuesForDefaultMinDist) {
    const auto p = find_ab_params(1.0, 0.1);
    EXPECT_NEAR(p.a, 1.577, 5e-3);
    EXPECT_NEAR(p.b, 0.895, 5e-3);
}

TEST(Layout, ZeroEpochsAndDeterminism) {
    auto [x, labels] = blobs(1, 60, 20, 0.1, 5);
    const auto fg = fuzzy_simplicial_set(knn_graph(x, 10, Metric::cosine));
    ASSERT_TRUE(is_connected(fg));
    const auto init = spectral_init(fg, 5, 1);
    EXPECT_EQ(optimize_layout(fg, init, 0, 1).coords, init);
    EXPECT_NEAR(init.cwiseAbs().maxCoeff(), 10.0, 1e-3);
    const auto a = optimize_layout(fg, init, 100, 1);
    const auto b = optimize_layout(fg, init, 100, 1);
    EXPECT_EQ(a.coords, b.coords);
    EXPECT_TRUE(a.coords.allFinite());
}

TEST(Layout, TwoBlobsSeparate) {
    auto [x, labels] = blobs(2, 50, 100, 0.3, 6);
    UmapConfig cfg;
    cfg.epochs = 200;
    const auto p = project(x, cfg);
    EXPECT_EQ(p.coords.rows(), 100);
    EXPECT_EQ(p.coords.cols(), 5);
    EXPECT_GE(one_nn_accuracy(p.coords, labels), 0.95);
    EXPECT_GE(trustworthiness(x, p.coords, 10, Metric::cosine), 0.9);
}

TEST(Layout, DisconnectedGraphFallsBackToRandomInit) {
    Eigen::MatrixXd x(8, 3);
    x << 1, 0, 0, 1, 0.01, 0, 1, 0, 0.01, 1, 0.01, 0.01, 0, 1, 0, 0.01, 1, 0, 0, 1, 0.01, 0.01, 1, 0.01;
    const auto fg = fuzzy_simplicial_set(knn_graph(x, 3, Metric::cosine));
    EXPECT_FALSE(is_connected(fg));
    EXPECT_EQ(spectral_init(fg, 2, 9), random_init(8, 2, 9));
}

TEST(Layout, SmallInputClampsNeighbors) {
    Rng rng(7);
    std::vector<std::string> warnings;
    UmapConfig cfg;
    cfg.epochs = 20;
    const auto p = project(fixtures::random_normal(6, 4, rng), cfg, &warnings);
    EXPECT_EQ(p.coords.rows(), 6);
    EXPECT_FALSE(warnings.empty());
}

TEST(Trustworthiness, IdentityIsOne) {
    Rng rng(8);
    const Eigen::MatrixXd x = fixtures::random_normal(30, 4, rng);
    EXPECT_NEAR(trustworthiness(x, x, 5), 1.0, 1e-15);
    const Eigen::MatrixXd noise = fixtures::random_normal(30, 4, rng);
    EXPECT_LT(trustworthiness(x, noise, 5), 0.9);
}

TEST(Projected, CsvRoundTrip) {
    ProjectedVectors p;
    p.coords = Eigen::MatrixXd(2, 2);
    p.coords << 1.5, -2.25, 3.0, 0.125;
    const auto csv = projected_to_csv(p, {"A", "B"});
    EXPECT_EQ(csv.substr(0, 10), "ticker,x1,");
    const auto [tickers, coords] = projected_from_csv(csv);
    EXPECT_EQ(tickers, (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(coords, p.coords);
}
