#pragma once

// UMAP: exact k-NN graph, fuzzy simplicial set, spectral init, SGD layout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neus/csv.hpp"
#include "neus/error.hpp"
#include "neus/random.hpp"

namespace neus::projection {

enum class Metric { euclidean, cosine };

inline std::string_view to_string(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

inline Metric parse_metric(std::string_view s) {
    if (s == "cosine") return Metric::cosine;
    if (s == "euclidean") return Metric::euclidean;
    fail(ErrorKind::config, "unknown metric '" + std::string(s) + "'");
}

struct NeighborGraph {
    int k = 0;
    Metric metric = Metric::cosine;
    std::vector<std::vector<std::size_t>> indices;  // per point, ascending distance
    std::vector<std::vector<double>> distances;

    std::size_t size() const { return indices.size(); }
};

struct Edge {
    std::size_t head = 0;
    std::size_t tail = 0;
    double weight = 0.0;
};

struct FuzzyGraph {
    std::size_t n = 0;
    std::vector<double> rho;
    std::vector<double> sigma;
    /// Directed membership strengths before symmetrization, aligned with the neighbor graph.
    std::vector<std::vector<double>> directed_weights;
    /// Symmetrized edges, both directions of each pair, sorted by (head, tail).
    std::vector<Edge> edges;
    std::vector<std::string> warnings;
};

struct ProjectedVectors {
    Eigen::MatrixXd coords; // n x d_out, row order matches input
    int epochs = 0;
    std::uint64_t seed = 0;
};

inline Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& x, Metric metric) {
    const auto n = x.rows();
    Eigen::MatrixXd d(n, n);
    if (metric == Metric::cosine) {
        Eigen::VectorXd norms = x.rowwise().norm();
        for (Eigen::Index i = 0; i < n; ++i)
            if (norms(i) == 0.0)
                fail(ErrorKind::data, "cosine metric: row " + std::to_string(i) + " is a zero vector");
        const Eigen::MatrixXd u = norms.cwiseInverse().asDiagonal() * x;
        const Eigen::MatrixXd g = u * u.transpose();
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                d(i, j) = i == j ? 0.0 : std::clamp(1.0 - g(i, j), 0.0, 2.0);
    } else {
        for (Eigen::Index i = 0; i < n; ++i) {
            d(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).norm();
        }
    }
    return d;
}

/// Exact k nearest neighbors by brute force, self excluded, ties to lower index.
inline NeighborGraph knn_graph(const Eigen::MatrixXd& vectors, int k, Metric metric) {
    const auto n = static_cast<std::size_t>(vectors.rows());
    if (k < 1 || n < static_cast<std::size_t>(k) + 1)
        fail(ErrorKind::config, "knn_graph: need n >= k + 1 (n=" + std::to_string(n) +
                                    ", k=" + std::to_string(k) + ")");
    const Eigen::MatrixXd d = pairwise_distances(vectors, metric);
    NeighborGraph g;
    g.k = k;
    g.metric = metric;
    g.indices.resize(n);
    g.distances.resize(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
        const auto row = static_cast<Eigen::Index>(i);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](std::size_t a, std::size_t b) {
            const double da = d(row, static_cast<Eigen::Index>(a));
            const double db = d(row, static_cast<Eigen::Index>(b));
            return da != db ? da < db : a < b;
        });
        for (int r = 0; r < k; ++r) {
            g.indices[i].push_back(order[static_cast<std::size_t>(r)]);
            g.distances[i].push_back(d(row, static_cast<Eigen::Index>(order[static_cast<std::size_t>(r)])));
        }
    }
    return g;
}

/// Per point: rho = nearest-neighbor distance, sigma solved by bisection so the
/// membership strengths exp(-max(0, d - rho) / sigma) sum to log2(k).
/// Memberships are then symmetrized with the probabilistic t-conorm.
inline FuzzyGraph fuzzy_simplicial_set(const NeighborGraph& g, double tolerance = 1e-5,
                                       int max_iterations = 64) {
    const auto n = g.size();
    FuzzyGraph fg;
    fg.n = n;
    fg.rho.assign(n, 0.0);
    fg.sigma.assign(n, 1.0);
    fg.directed_weights.resize(n);
    const double target = std::log2(static_cast<double>(g.k));

    for (std::size_t i = 0; i < n; ++i) {
        const auto& dist = g.distances[i];
        const double rho = dist.front();
        fg.rho[i] = rho;
        auto total = [&](double sigma) {
            double s = 0.0;
            for (double d : dist) s += std::exp(-std::max(0.0, d - rho) / sigma);
            return s;
        };
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double mid = 1.0;
        bool converged = false;
        for (int it = 0; it < max_iterations; ++it) {
            const double s = total(mid);
            if (std::fabs(s - target) < tolerance) {
                converged = true;
                break;
            }
            if (s > target) {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
            }
        }
        if (!converged) {
            // fall back to the tighter bracketing bound
            if (!std::isinf(hi) && std::fabs(total(hi) - target) < std::fabs(total(mid) - target)) mid = hi;
            if (lo > 0.0 && std::fabs(total(lo) - target) < std::fabs(total(mid) - target)) mid = lo;
            fg.warnings.push_back("fuzzy_simplicial_set: bandwidth bisection did not converge for point " +
                                  std::to_string(i));
        }
        fg.sigma[i] = mid;
        for (double d : dist) fg.directed_weights[i].push_back(std::exp(-std::max(0.0, d - rho) / mid));
    }

    // symmetrize: w + w' - w * w'
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
    auto directed = [&](std::size_t i, std::size_t j) {
        const auto& idx = g.indices[i];
        for (std::size_t r = 0; r < idx.size(); ++r)
            if (idx[r] == j) return fg.directed_weights[i][r];
        return 0.0;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < g.indices[i].size(); ++r) {
            const auto j = g.indices[i][r];
            const double wij = fg.directed_weights[i][r];
            const double wji = directed(j, i);
            const double w = wij + wji - wij * wji;
            if (w <= 0.0) continue;
            adj[i].emplace_back(j, w);
            if (wji == 0.0) adj[j].emplace_back(i, w); // j does not list i, add the reverse edge here
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& row = adj[i];
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end(),
                              [](const auto& a, const auto& b) { return a.first == b.first; }),
                  row.end());
        for (const auto& [j, w] : row) fg.edges.push_back({i, j, w});
    }
    return fg;
}

/// Symmetrized weight between two points, or 0 when not adjacent.
inline double edge_weight(const FuzzyGraph& fg, std::size_t i, std::size_t j) {
    auto it = std::lower_bound(fg.edges.begin(), fg.edges.end(), std::pair{i, j},
                               [](const Edge& e, const std::pair<std::size_t, std::size_t>& key) {
                                   return std::pair{e.head, e.tail} < key;
                               });
    return it != fg.edges.end() && it->head == i && it->tail == j ? it->weight : 0.0;
}

struct CurveParams {
    double a = 0.0;
    double b = 0.0;
};

/// Fits 1 / (1 + a x^(2b)) to the offset-exponential target defined by
/// `min_dist` and `spread` (300 points on [0, 3 spread]) by Levenberg-Marquardt.
inline CurveParams find_ab_params(double spread, double min_dist) {
    constexpr int n_points = 300;
    std::vector<double> xs(n_points), ys(n_points);
    for (int i = 0; i < n_points; ++i) {
        xs[i] = 3.0 * spread * i / (n_points - 1);
        ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }
    auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(n_points);
        if (jac) jac->resize(n_points, 2);
        for (int i = 0; i < n_points; ++i) {
            const double x = xs[i];
            const double x2b = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
            const double denom = 1.0 + a * x2b;
            r(i) = 1.0 / denom - ys[i];
            if (jac) {
                (*jac)(i, 0) = -x2b / (denom * denom);
                (*jac)(i, 1) = x > 0.0 ? -a * x2b * 2.0 * std::log(x) / (denom * denom) : 0.0;
            }
        }
        return r.squaredNorm();
    };
    double a = 1.0, b = 1.0, mu = 1e-3;
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    double cost = residuals(a, b, r, &jac);
    for (int it = 0; it < 500; ++it) {
        const Eigen::Matrix2d jtj = jac.transpose() * jac;
        const Eigen::Vector2d jtr = jac.transpose() * r;
        Eigen::Matrix2d lhs = jtj;
        lhs.diagonal() += mu * jtj.diagonal();
        const Eigen::Vector2d step = lhs.ldlt().solve(-jtr);
        Eigen::VectorXd r_new;
        const double a_new = a + step(0), b_new = b + step(1);
        const double cost_new = a_new > 0 && b_new > 0 ? residuals(a_new, b_new, r_new, nullptr)
                                                       : std::numeric_limits<double>::infinity();
        if (cost_new < cost) {
            const bool done = cost - cost_new < 1e-15 * (1.0 + cost);
            a = a_new;
            b = b_new;
            cost = residuals(a, b, r, &jac);
            mu = std::max(mu / 3.0, 1e-12);
            if (done) break;
        } else {
            mu *= 4.0;
            if (mu > 1e12) break;
        }
    }
    return {a, b};
}

struct UmapConfig {
    int n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int n_components = 5;
    int epochs = 500;
    int negative_sample_rate = 5;
    double learning_rate = 1.0;
    double repulsion_strength = 1.0;
    Metric metric = Metric::cosine;
    bool spectral_init = true;
    std::uint64_t seed = 42;
};

inline bool is_connected(const FuzzyGraph& fg) {
    if (fg.n == 0) return true;
    std::vector<std::vector<std::size_t>> adj(fg.n);
    for (const auto& e : fg.edges) adj[e.head].push_back(e.tail);
    std::vector<char> seen(fg.n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        for (auto w : adj[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                stack.push_back(w);
            }
    }
    return count == fg.n;
}

inline Eigen::MatrixXd random_init(std::size_t n, int d_out, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "random-init"));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d_out);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (int k = 0; k < d_out; ++k) x(i, k) = uniform(rng, -10.0, 10.0);
    return x;
}

/// Bottom non-trivial eigenvectors of the symmetric normalized Laplacian,
/// scaled to max |coord| = 10 plus small noise. Falls back to uniform random
/// coordinates when the graph is disconnected or too small.
inline Eigen::MatrixXd spectral_init(const FuzzyGraph& fg, int d_out, std::uint64_t seed) {
    const auto n = static_cast<Eigen::Index>(fg.n);
    if (n <= d_out + 1 || !is_connected(fg)) return random_init(fg.n, d_out, seed);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : fg.edges) w(static_cast<Eigen::Index>(e.head), static_cast<Eigen::Index>(e.tail)) = e.weight;
    const Eigen::VectorXd deg = w.rowwise().sum();
    const Eigen::VectorXd inv_sqrt = deg.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd lap = -(inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal());
    lap.diagonal().array() += 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
    if (solver.info() != Eigen::Success) return random_init(fg.n, d_out, seed);
    Eigen::MatrixXd x = solver.eigenvectors().middleCols(1, d_out);
    // fix sign so the largest-magnitude entry of each column is positive
    for (int c = 0; c < d_out; ++c) {
        Eigen::Index arg = 0;
        x.col(c).cwiseAbs().maxCoeff(&arg);
        if (x(arg, c) < 0) x.col(c) *= -1.0;
    }
    x *= 10.0 / x.cwiseAbs().maxCoeff();
    Rng rng(derive_seed(seed, "spectral-noise"));
    for (Eigen::Index i = 0; i < n; ++i)
        for (int c = 0; c < d_out; ++c) x(i, c) += 1e-4 * normal(rng);
    return x;
}

/// SGD on the fuzzy cross-entropy with kernel 1 / (1 + a d^(2b)). Each edge is
/// sampled in proportion to its weight; each sample draws
/// `negative_sample_rate` repulsive partners. Gradients are clipped to +-4 and
/// the learning rate decays linearly to zero. Single-threaded and deterministic.
inline ProjectedVectors optimize_layout(const FuzzyGraph& fg, Eigen::MatrixXd init, int epochs,
                                        std::uint64_t seed, const UmapConfig& cfg = {}) {
    if (init.cols() < 1) fail(ErrorKind::config, "optimize_layout: d_out must be >= 1");
    ProjectedVectors out{std::move(init), epochs, seed};
    if (epochs <= 0 || fg.edges.empty()) return out;

    const auto [a, b] = find_ab_params(cfg.spread, cfg.min_dist);
    const auto dim = out.coords.cols();
    const auto n = static_cast<std::uint64_t>(fg.n);

    double max_w = 0.0;
    for (const auto& e : fg.edges) max_w = std::max(max_w, e.weight);
    std::vector<Edge> edges;
    for (const auto& e : fg.edges)
        if (e.weight >= max_w / epochs) edges.push_back(e);

    std::vector<double> per_sample(edges.size()), next_sample(edges.size()), per_negative(edges.size()),
        next_negative(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        per_sample[i] = max_w / edges[i].weight;
        next_sample[i] = per_sample[i];
        per_negative[i] = per_sample[i] / cfg.negative_sample_rate;
        next_negative[i] = per_negative[i];
    }

    // row-major working copy for cache-friendly row access
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> y = out.coords;
    auto clip = [](double v) { return std::clamp(v, -4.0, 4.0); };
    Rng rng(derive_seed(seed, "layout"));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double alpha = cfg.learning_rate * (1.0 - double(epoch) / double(epochs));
        for (std::size_t i = 0; i < edges.size(); ++i) {
            if (next_sample[i] > epoch) continue;
            const auto j = static_cast<Eigen::Index>(edges[i].head);
            const auto k = static_cast<Eigen::Index>(edges[i].tail);
            double* cur = y.row(j).data();
            double* other = y.row(k).data();
            double d2 = 0.0;
            for (Eigen::Index c = 0; c < dim; ++c) d2 += (cur[c] - other[c]) * (cur[c] - other[c]);
            double coeff = 0.0;
            if (d2 > 0.0) coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
            for (Eigen::Index c = 0; c < dim; ++c) {
                const double g = clip(coeff * (cur[c] - other[c]));
                cur[c] += g * alpha;
                other[c] -= g * alpha;
            }
            next_sample[i] += per_sample[i];

            const auto n_neg = static_cast<int>((epoch - next_negative[i]) / per_negative[i]);
            for (int p = 0; p < n_neg; ++p) {
                const auto r = static_cast<Eigen::Index>(uniform_index(rng, n));
                if (r == j) continue;
                const double* rep = y.row(r).data();
                double rd2 = 0.0;
                for (Eigen::Index c = 0; c < dim; ++c) rd2 += (cur[c] - rep[c]) * (cur[c] - rep[c]);
                if (rd2 <= 0.0) continue;
                const double rc = 2.0 * cfg.repulsion_strength * b /
                                  ((0.001 + rd2) * (a * std::pow(rd2, b) + 1.0));
                for (Eigen::Index c = 0; c < dim; ++c) cur[c] += clip(rc * (cur[c] - rep[c])) * alpha;
            }
            next_negative[i] += n_neg * per_negative[i];
        }
    }
    out.coords = y;
    if (!out.coords.allFinite()) fail(ErrorKind::numerical, "optimize_layout: non-finite coordinates");
    return out;
}

/// Full projection: k-NN graph, fuzzy set, initialization, layout.
/// `n_neighbors` is clamped to n - 1 for small inputs.
inline ProjectedVectors project(const Eigen::MatrixXd& vectors, const UmapConfig& cfg,
                                std::vector<std::string>* warnings = nullptr) {
    const int n = static_cast<int>(vectors.rows());
    if (n < 2) fail(ErrorKind::data, "project: need at least two points");
    int k = cfg.n_neighbors;
    if (k > n - 1) {
        if (warnings)
            warnings->push_back("project: n_neighbors reduced to " + std::to_string(n - 1));
        k = n - 1;
    }
    const auto graph = knn_graph(vectors, k, cfg.metric);
    auto fg = fuzzy_simplicial_set(graph);
    if (warnings) warnings->insert(warnings->end(), fg.warnings.begin(), fg.warnings.end());
    auto init = cfg.spectral_init ? spectral_init(fg, cfg.n_components, cfg.seed)
                                  : random_init(fg.n, cfg.n_components, cfg.seed);
    return optimize_layout(fg, std::move(init), cfg.epochs, cfg.seed, cfg);
}

/// Trustworthiness of an embedding: penalizes points that enter the k-NN set
/// in the low-dimensional space but are far in the original ranking.
inline double trustworthiness(const Eigen::MatrixXd& original, const Eigen::MatrixXd& embedded, int k,
                              Metric original_metric = Metric::euclidean) {
    const auto n = static_cast<std::size_t>(original.rows());
    if (n < static_cast<std::size_t>(2 * k + 2))
        fail(ErrorKind::config, "trustworthiness: need n >= 2k + 2");
    const Eigen::MatrixXd d_orig = pairwise_distances(original, original_metric);
    const Eigen::MatrixXd d_emb = pairwise_distances(embedded, Metric::euclidean);
    double penalty = 0.0;
    std::vector<std::size_t> order(n);
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        auto by = [&](const Eigen::MatrixXd& d) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (a == i || b == i) return a == i && b != i;
                return d(row, static_cast<Eigen::Index>(a)) < d(row, static_cast<Eigen::Index>(b));
            });
        };
        by(d_orig);
        for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r; // self has rank 0
        by(d_emb);
        for (int r = 1; r <= k; ++r) {
            const auto j = order[static_cast<std::size_t>(r)];
            if (rank[j] > static_cast<std::size_t>(k)) penalty += double(rank[j]) - k;
        }
    }
    const double nn = static_cast<double>(n);
    return 1.0 - penalty * 2.0 / (nn * k * (2.0 * nn - 3.0 * k - 1.0));
}

inline std::string projected_to_csv(const ProjectedVectors& p, const std::vector<std::string>& tickers) {
    std::string out = "ticker";
    for (Eigen::Index c = 0; c < p.coords.cols(); ++c) out += ",x" + std::to_string(c + 1);
    out += '\n';
    for (Eigen::Index i = 0; i < p.coords.rows(); ++i) {
        out += csv::quote(tickers[static_cast<std::size_t>(i)]);
        for (Eigen::Index c = 0; c < p.coords.cols(); ++c) out += "," + csv::format_number(p.coords(i, c), 9);
        out += '\n';
    }
    return out;
}

inline std::pair<std::vector<std::string>, Eigen::MatrixXd> projected_from_csv(std::string_view content) {
    const auto rows = csv::parse(content);
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "ticker")
        fail(ErrorKind::schema, "projected vectors: bad header");
    const auto dim = static_cast<Eigen::Index>(rows[0].size() - 1);
    std::vector<std::string> tickers;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size() - 1), dim);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) fail(ErrorKind::schema, "projected vectors: ragged row");
        tickers.push_back(rows[r][0]);
        for (Eigen::Index c = 0; c < dim; ++c)
            x(static_cast<Eigen::Index>(r - 1), c) = std::stod(rows[r][static_cast<std::size_t>(c + 1)]);
    }
    return {tickers, x};
}

} // namespace neus::projection
