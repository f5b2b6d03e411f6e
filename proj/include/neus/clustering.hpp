#pragma once

// Agglomerative clustering with minimax linkage and prototype extraction.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neus/csv.hpp"
#include "neus/error.hpp"
#include "neus/projection.hpp"

namespace neus::clustering {

struct Merge {
    std::size_t left = 0;   // node id: < n is a leaf, otherwise n + merge index
    std::size_t right = 0;
    double height = 0.0;
    std::size_t prototype = 0; // point index
    std::size_t size = 0;
};

struct Dendrogram {
    std::size_t n = 0;
    std::vector<Merge> merges; // n - 1 records in merge order
    std::vector<std::string> labels;
};

struct BasisSet {
    std::vector<std::string> prototypes;         // one per cluster, ordered by cluster id
    std::vector<std::size_t> prototype_indices;  // point index per cluster
    std::vector<std::size_t> assignment;         // cluster id per point
    std::vector<std::string> labels;             // point labels
    double cut_height = 0.0;

    std::size_t cluster_count() const { return prototypes.size(); }
};

/// Minimax center of `members`: the member whose largest distance to any
/// other member is smallest (ties to the lowest index). Returns (center, radius).
inline std::pair<std::size_t, double> minimax_center(const Eigen::MatrixXd& dist,
                                                     const std::vector<std::size_t>& members) {
    std::size_t best = members.front();
    double best_r = std::numeric_limits<double>::infinity();
    for (auto c : members) {
        double r = 0.0;
        for (auto x : members) r = std::max(r, dist(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(x)));
        if (r < best_r || (r == best_r && c < best)) {
            best_r = r;
            best = c;
        }
    }
    return {best, best_r};
}

/// Agglomerative clustering on a precomputed distance matrix. The linkage of
/// two clusters is the minimax radius of their union; the minimizing point is
/// recorded as the merged cluster's prototype. Ties: lowest point index for
/// prototypes, then lowest cluster (smallest member) for merge order.
inline Dendrogram minimax_linkage(const Eigen::MatrixXd& dist, std::vector<std::string> labels = {}) {
    const auto n = static_cast<std::size_t>(dist.rows());
    if (n < 2) fail(ErrorKind::data, "minimax_linkage: need at least two points");
    if (!dist.allFinite()) fail(ErrorKind::data, "minimax_linkage: non-finite distances");
    if (labels.empty())
        for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));

    // Clusters live in slots 0..n-1 keyed by their smallest member.
    std::vector<std::vector<std::size_t>> members(n);
    std::vector<std::size_t> node(n);
    std::vector<char> active(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        members[i] = {i};
        node[i] = i;
    }
    // far(c, s): max distance from point c to the members of slot s
    Eigen::MatrixXd far = dist;
    constexpr double inf = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd link = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), inf);
    std::vector<std::size_t> link_proto(n * n, 0);

    auto eval = [&](std::size_t s, std::size_t t) {
        double best = inf;
        std::size_t proto = 0;
        auto consider = [&](std::size_t c) {
            const double r = std::max(far(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s)),
                                      far(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)));
            if (r < best || (r == best && c < proto)) {
                best = r;
                proto = c;
            }
        };
        for (auto c : members[s]) consider(c);
        for (auto c : members[t]) consider(c);
        const auto lo = std::min(s, t), hi = std::max(s, t);
        link(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi)) = best;
        link_proto[lo * n + hi] = proto;
    };
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = s + 1; t < n; ++t) eval(s, t);

    Dendrogram d;
    d.n = n;
    d.labels = std::move(labels);
    for (std::size_t step = 0; step + 1 < n; ++step) {
        double best = inf;
        std::size_t bs = 0, bt = 0;
        for (std::size_t s = 0; s < n; ++s) {
            if (!active[s]) continue;
            for (std::size_t t = s + 1; t < n; ++t) {
                if (!active[t]) continue;
                const double h = link(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
                if (h < best) {
                    best = h;
                    bs = s;
                    bt = t;
                }
            }
        }
        Merge m{node[bs], node[bt], best, link_proto[bs * n + bt],
                members[bs].size() + members[bt].size()};
        d.merges.push_back(m);

        // merged cluster keeps slot bs (bs < bt, so it retains the smallest member)
        members[bs].insert(members[bs].end(), members[bt].begin(), members[bt].end());
        std::sort(members[bs].begin(), members[bs].end());
        members[bt].clear();
        active[bt] = 0;
        node[bs] = n + step;
        far.col(static_cast<Eigen::Index>(bs)) =
            far.col(static_cast<Eigen::Index>(bs)).cwiseMax(far.col(static_cast<Eigen::Index>(bt)));
        for (std::size_t t = 0; t < n; ++t)
            if (active[t] && t != bs) eval(bs, t);
    }
    return d;
}

inline Dendrogram minimax_linkage_cluster(const Eigen::MatrixXd& points, projection::Metric metric,
                                          std::vector<std::string> labels = {}) {
    return minimax_linkage(projection::pairwise_distances(points, metric), std::move(labels));
}

/// Clusters are the maximal subtrees whose merge height is <= `height`.
/// Cluster ids follow the order of each cluster's smallest point index.
inline BasisSet cut_dendrogram(const Dendrogram& d, double height) {
    if (!(height >= 0.0)) fail(ErrorKind::config, "cut_dendrogram: height must be >= 0");
    const auto n = d.n;
    // representative prototype and member list per node
    std::vector<std::vector<std::size_t>> node_members(n + d.merges.size());
    std::vector<std::size_t> node_proto(n + d.merges.size());
    std::vector<char> absorbed(n + d.merges.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        node_members[i] = {i};
        node_proto[i] = i;
    }
    for (std::size_t k = 0; k < d.merges.size(); ++k) {
        const auto& m = d.merges[k];
        const auto id = n + k;
        node_proto[id] = m.prototype;
        if (m.height <= height) {
            node_members[id] = node_members[m.left];
            node_members[id].insert(node_members[id].end(), node_members[m.right].begin(),
                                    node_members[m.right].end());
            absorbed[m.left] = absorbed[m.right] = 1;
        } else {
            absorbed[id] = 1; // not formed at this cut
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> roots; // (smallest member, node)
    for (std::size_t id = 0; id < node_members.size(); ++id) {
        if (absorbed[id] || node_members[id].empty()) continue;
        roots.emplace_back(*std::min_element(node_members[id].begin(), node_members[id].end()), id);
    }
    std::sort(roots.begin(), roots.end());

    BasisSet b;
    b.cut_height = height;
    b.labels = d.labels;
    b.assignment.assign(n, 0);
    for (std::size_t c = 0; c < roots.size(); ++c) {
        const auto id = roots[c].second;
        for (auto p : node_members[id]) b.assignment[p] = c;
        b.prototype_indices.push_back(node_proto[id]);
        b.prototypes.push_back(d.labels[node_proto[id]]);
    }
    return b;
}

/// Height halfway between the merges that leave `k` and `k - 1` clusters;
/// cutting there yields exactly `k` clusters when those heights differ.
inline double cut_height_for_clusters(const Dendrogram& d, std::size_t k) {
    if (k < 1 || k > d.n) fail(ErrorKind::config, "cut_height_for_clusters: k out of range");
    std::vector<double> h;
    for (const auto& m : d.merges) h.push_back(m.height);
    std::sort(h.begin(), h.end());
    if (k == d.n) return h.front() / 2.0;
    const double below = d.n - k >= 1 ? h[d.n - k - 1] : 0.0;
    const double above = k >= 2 ? h[d.n - k] : below + 1.0;
    return (below + above) / 2.0;
}

/// Adjusted Rand index between two labelings of the same points.
inline double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.size() != b.size()) fail(ErrorKind::data, "adjusted_rand_index: size mismatch");
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    std::map<std::size_t, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1;
        ra[a[i]] += 1;
        rb[b[i]] += 1;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0, sa = 0, sb = 0;
    for (const auto& [_, c] : table) index += choose2(c);
    for (const auto& [_, c] : ra) sa += choose2(c);
    for (const auto& [_, c] : rb) sb += choose2(c);
    const double total = choose2(static_cast<double>(a.size()));
    const double expected = sa * sb / total;
    const double max_index = (sa + sb) / 2.0;
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

/// `# cut_height=<h>` then `ticker,cluster_id,is_prototype`.
inline std::string basis_to_csv(const BasisSet& b) {
    std::string out = "# cut_height=" + csv::format_number(b.cut_height, 17) + "\n";
    out += "ticker,cluster_id,is_prototype\n";
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
        const bool proto = b.prototype_indices[b.assignment[i]] == i;
        out += csv::quote(b.labels[i]) + "," + std::to_string(b.assignment[i]) + "," + (proto ? "1" : "0") + "\n";
    }
    return out;
}

inline BasisSet basis_from_csv(std::string_view content) {
    BasisSet b;
    std::string body(content);
    if (body.rfind("# cut_height=", 0) == 0) {
        const auto eol = body.find('\n');
        b.cut_height = std::stod(body.substr(13, eol - 13));
        body = body.substr(eol + 1);
    }
    const auto rows = csv::parse(body);
    if (rows.empty() || rows[0].size() != 3 || rows[0][0] != "ticker")
        fail(ErrorKind::schema, "basis set: bad header");
    std::map<std::size_t, std::size_t> proto_of;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 3) fail(ErrorKind::schema, "basis set: ragged row");
        const auto idx = b.labels.size();
        b.labels.push_back(rows[r][0]);
        const auto cid = static_cast<std::size_t>(std::stoul(rows[r][1]));
        b.assignment.push_back(cid);
        if (rows[r][2] == "1") proto_of[cid] = idx;
    }
    for (std::size_t c = 0; c < proto_of.size(); ++c) {
        if (!proto_of.contains(c)) fail(ErrorKind::schema, "basis set: cluster without prototype");
        b.prototype_indices.push_back(proto_of[c]);
        b.prototypes.push_back(b.labels[proto_of[c]]);
    }
    return b;
}

} // namespace neus::clustering
