#include <gtest/gtest.h>

#include "neus/clustering.hpp"
#include "test_support.hpp"

using namespace neus;
using namespace neus::clustering;

namespace {

Eigen::MatrixXd line(std::initializer_list<double> xs) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (double x : xs) p(i++, 0) = x;
    return p;
}

} // namespace

TEST(Minimax, CollinearExample) {
    const auto d = minimax_linkage_cluster(line({0, 1, 10}), projection::Metric::euclidean);
    ASSERT_EQ(d.merges.size(), 2u);
    EXPECT_EQ(d.merges[0].left, 0u);
    EXPECT_EQ(d.merges[0].right, 1u);
    EXPECT_EQ(d.merges[0].height, 1.0);
    EXPECT_EQ(d.merges[0].prototype, 0u);
    EXPECT_EQ(d.merges[1].left, 3u);
    EXPECT_EQ(d.merges[1].right, 2u);
    EXPECT_EQ(d.merges[1].height, 9.0);
    EXPECT_EQ(d.merges[1].prototype, 1u);
    EXPECT_EQ(d.merges[1].size, 3u);
}

TEST(Minimax, PairTiesToLowerIndex) {
    const auto d = minimax_linkage_cluster(line({4, 2}), projection::Metric::euclidean);
    ASSERT_EQ(d.merges.size(), 1u);
    EXPECT_EQ(d.merges[0].prototype, 0u);
    EXPECT_EQ(d.merges[0].height, 2.0);
}

TEST(Minimax, PrototypesAreBruteForceCentersAndHeightsMonotone) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const auto n = static_cast<Eigen::Index>(2 + uniform_index(rng, 11));
        const Eigen::MatrixXd pts = fixtures::random_normal(n, 3, rng);
        const auto dist = projection::pairwise_distances(pts, projection::Metric::euclidean);
        const auto d = minimax_linkage(dist);
        std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < members.size(); ++i) members[i] = {i};
        for (std::size_t k = 0; k < d.merges.size(); ++k) {
            const auto& m = d.merges[k];
            if (k) EXPECT_GE(m.height, d.merges[k - 1].height);
            auto mem = members[m.left];
            mem.insert(mem.end(), members[m.right].begin(), members[m.right].end());
            std::sort(mem.begin(), mem.end());
            const auto [c, r] = minimax_center(dist, mem);
            EXPECT_EQ(m.prototype, c);
            EXPECT_EQ(m.height, r);
            members.push_back(mem);
        }
    }
}

TEST(Cut, DegenerateAndFull) {
    Rng rng(1);
    const Eigen::MatrixXd pts = fixtures::random_normal(9, 2, rng);
    const auto d = minimax_linkage_cluster(pts, projection::Metric::euclidean);
    const auto zero = cut_dendrogram(d, 0.0);
    EXPECT_EQ(zero.cluster_count(), 9u);
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_EQ(zero.assignment[i], i);
        EXPECT_EQ(zero.prototype_indices[i], i);
    }
    const auto all = cut_dendrogram(d, d.merges.back().height);
    EXPECT_EQ(all.cluster_count(), 1u);
    EXPECT_EQ(all.prototype_indices[0], d.merges.back().prototype);
    EXPECT_THROW(cut_dendrogram(d, -1.0), Error);
}

TEST(Cut, RefinementAndMembership) {
    Rng rng(2);
    const Eigen::MatrixXd pts = fixtures::random_normal(25, 3, rng);
    const auto dist = projection::pairwise_distances(pts, projection::Metric::euclidean);
    const auto d = minimax_linkage(dist);
    for (std::size_t k = 1; k <= 25; ++k) {
        const auto b = cut_dendrogram(d, cut_height_for_clusters(d, k));
        EXPECT_EQ(b.cluster_count(), k);
        for (std::size_t c = 0; c < b.cluster_count(); ++c) {
            EXPECT_EQ(b.assignment[b.prototype_indices[c]], c);
            std::vector<std::size_t> mem;
            for (std::size_t i = 0; i < 25; ++i)
                if (b.assignment[i] == c) mem.push_back(i);
            EXPECT_EQ(minimax_center(dist, mem).first, b.prototype_indices[c]);
        }
        if (k > 1) {
            const auto coarse = cut_dendrogram(d, cut_height_for_clusters(d, k - 1));
            std::map<std::size_t, std::size_t> parent;
            for (std::size_t i = 0; i < 25; ++i) {
                auto [it, fresh] = parent.emplace(b.assignment[i], coarse.assignment[i]);
                EXPECT_EQ(it->second, coarse.assignment[i]);
            }
        }
    }
}

TEST(Cut, PermutationChangesOnlyLabels) {
    Rng rng(3);
    const Eigen::MatrixXd pts = fixtures::random_normal(20, 2, rng);
    std::vector<Eigen::Index> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd shuffled(20, 2);
    for (Eigen::Index i = 0; i < 20; ++i) shuffled.row(i) = pts.row(perm[std::size_t(i)]);
    const auto a = minimax_linkage_cluster(pts, projection::Metric::euclidean);
    const auto b = minimax_linkage_cluster(shuffled, projection::Metric::euclidean);
    const double h = cut_height_for_clusters(a, 4);
    const auto ca = cut_dendrogram(a, h), cb = cut_dendrogram(b, h);
    std::vector<std::size_t> la(20), lb(20);
    for (std::size_t i = 0; i < 20; ++i) {
        la[static_cast<std::size_t>(perm[i])] = cb.assignment[i];
        lb[i] = ca.assignment[i];
    }
    EXPECT_EQ(adjusted_rand_index(la, lb), 1.0);
}

TEST(Ari, KnownValues) {
    EXPECT_EQ(adjusted_rand_index({0, 0, 1, 1}, {5, 5, 2, 2}), 1.0);
    // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285715
    EXPECT_NEAR(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 2}), 4.0 / 7.0, 1e-15);
    EXPECT_LT(adjusted_rand_index({0, 0, 0, 1, 1, 1}, {0, 1, 2, 0, 1, 2}), 0.0);
}

TEST(Basis, CsvRoundTrip) {
    Rng rng(4);
    const auto d = minimax_linkage_cluster(fixtures::random_normal(10, 2, rng), projection::Metric::euclidean,
                                           {"A", "B", "C", "D", "E", "F", "G", "H", "I", "J"});
    const auto b = cut_dendrogram(d, cut_height_for_clusters(d, 3));
    const auto back = basis_from_csv(basis_to_csv(b));
    EXPECT_EQ(back.assignment, b.assignment);
    EXPECT_EQ(back.prototypes, b.prototypes);
    EXPECT_EQ(back.cut_height, b.cut_height);
}
