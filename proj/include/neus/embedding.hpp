#pragma once

// PV-DBOW paragraph vectors trained with negative sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "neus/corpus.hpp"
#include "neus/error.hpp"
#include "neus/random.hpp"

namespace neus::embedding {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbeddingConfig {
    int vector_size = 100;
    int window = 5;
    int epochs = 50;
    int min_count = 3;
    double subsample = 1e-5;
    int negative = 5;
    double learning_rate = 0.025;
    double min_learning_rate = 1e-4;
    /// Jointly train skip-gram word vectors over the window.
    bool train_words = true;
    std::uint64_t seed = 1;
    /// 1 = deterministic; >1 = racy parallel updates.
    int threads = 1;

    void validate() const {
        if (vector_size < 1 || window < 1 || min_count < 1 || negative < 1 || epochs < 0)
            fail(ErrorKind::config, "embedding: counts must be positive");
        if (!(subsample > 0.0 && subsample <= 1.0))
            fail(ErrorKind::config, "embedding: subsample must lie in (0, 1]");
        if (!(learning_rate > 0.0)) fail(ErrorKind::config, "embedding: learning_rate must be > 0");
        if (threads < 1) fail(ErrorKind::config, "embedding: threads must be >= 1");
    }
};

/// Walker alias table: O(1) draws from an arbitrary discrete distribution.
class AliasTable {
public:
    AliasTable() = default;

    explicit AliasTable(const std::vector<double>& weights) {
        const auto n = weights.size();
        prob_.assign(n, 0.0);
        alias_.assign(n, 0);
        double total = 0.0;
        for (double w : weights) total += w;
        std::vector<double> scaled(n);
        std::vector<std::uint32_t> small, large;
        for (std::size_t i = 0; i < n; ++i) {
            scaled[i] = weights[i] * static_cast<double>(n) / total;
            (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
        }
        while (!small.empty() && !large.empty()) {
            const auto s = small.back();
            small.pop_back();
            const auto l = large.back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (auto i : large) prob_[i] = 1.0;
        for (auto i : small) prob_[i] = 1.0;
    }

    std::size_t size() const { return prob_.size(); }

    std::uint32_t sample(Rng& rng) const {
        const auto i = uniform_index(rng, prob_.size());
        return uniform01(rng) < prob_[i] ? static_cast<std::uint32_t>(i) : alias_[i];
    }

private:
    std::vector<double> prob_;
    std::vector<std::uint32_t> alias_;
};

struct Vocabulary {
    std::vector<std::string> words;
    std::vector<std::uint64_t> counts;
    std::unordered_map<std::string, std::uint32_t> index;
    std::uint64_t total_count = 0;
    /// Noise distribution proportional to count^0.75.
    AliasTable noise;

    std::size_t size() const { return words.size(); }

    std::vector<double> noise_distribution() const {
        std::vector<double> p(words.size());
        double total = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) total += p[i] = std::pow(double(counts[i]), 0.75);
        for (double& v : p) v /= total;
        return p;
    }
};

/// Words below `min_count` are dropped; indices are assigned by descending
/// count, ties alphabetical.
inline Vocabulary build_vocabulary(const std::vector<corpus::CompanyDocument>& docs,
                                   const EmbeddingConfig& cfg) {
    if (docs.empty()) fail(ErrorKind::config, "embedding: no documents");
    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& d : docs)
        for (const auto& t : d.tokens) ++counts[t];

    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (auto& [w, c] : counts)
        if (c >= static_cast<std::uint64_t>(cfg.min_count)) kept.emplace_back(w, c);
    if (kept.empty())
        fail(ErrorKind::config, "embedding: vocabulary is empty after min_count filtering");
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    Vocabulary v;
    for (auto& [w, c] : kept) {
        v.index.emplace(w, static_cast<std::uint32_t>(v.words.size()));
        v.words.push_back(w);
        v.counts.push_back(c);
        v.total_count += c;
    }
    v.noise = AliasTable(v.noise_distribution());
    return v;
}

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Logistic negative-sampling loss for one input vector `h` against output
/// rows with labels (1 = observed target, 0 = noise):
///   L = -sum_k [ y_k log s(h.u_k) + (1 - y_k) log s(-h.u_k) ]
/// `coef` receives dL/d(h.u_k) = s(h.u_k) - y_k, from which
/// dL/dh = sum_k coef_k u_k and dL/du_k = coef_k h.
template <typename InputVec, typename OutputRows>
double negative_sampling_loss(const InputVec& h, const OutputRows& outputs,
                              const std::vector<int>& labels, std::vector<double>* coef = nullptr) {
    double loss = 0.0;
    if (coef) coef->assign(labels.size(), 0.0);
    for (std::size_t k = 0; k < labels.size(); ++k) {
        const double score = h.dot(outputs.row(static_cast<Eigen::Index>(k)));
        // log s(x) = -log1p(exp(-x)), evaluated stably
        const double signed_score = labels[k] ? score : -score;
        loss += signed_score >= 0 ? std::log1p(std::exp(-signed_score))
                                  : -signed_score + std::log1p(std::exp(signed_score));
        if (coef) (*coef)[k] = sigmoid(score) - labels[k];
    }
    return loss;
}

struct EmbeddingModel {
    RowMatrix company_vectors;   // n_companies x vector_size
    RowMatrix output_vectors;    // |V| x vector_size
    RowMatrix word_vectors;      // |V| x vector_size, empty unless trained with words
    std::vector<std::string> tickers;
    std::unordered_map<std::string, std::size_t> company_index;
    std::vector<std::string> words;
    std::vector<std::uint64_t> word_counts;
    std::vector<double> epoch_loss; // mean loss per target prediction

    int vector_size() const { return static_cast<int>(company_vectors.cols()); }
};

namespace detail {

// One negative-sampling SGD step for input row `h` predicting `target`.
// Returns the loss before the update.
inline double sgd_pair(double* h, std::uint32_t target, const Vocabulary& vocab,
                       RowMatrix& out, int negative, double lr, Rng& rng, Eigen::VectorXd& h_grad) {
    const auto dim = out.cols();
    Eigen::Map<Eigen::VectorXd> hv(h, dim);
    h_grad.setZero();
    double loss = 0.0;
    for (int d = 0; d <= negative; ++d) {
        std::uint32_t w = target;
        int label = 1;
        if (d > 0) {
            w = vocab.noise.sample(rng);
            if (w == target) continue;
            label = 0;
        }
        auto u = out.row(w);
        const double score = hv.dot(u);
        const double signed_score = label ? score : -score;
        loss += signed_score >= 0 ? std::log1p(std::exp(-signed_score))
                                  : -signed_score + std::log1p(std::exp(signed_score));
        const double g = sigmoid(score) - label;
        h_grad.noalias() += g * u.transpose();
        u.noalias() -= (lr * g) * hv.transpose();
    }
    hv.noalias() -= lr * h_grad;
    return loss;
}

} // namespace detail

/// Trains document vectors (and optionally skip-gram word vectors) by SGD
/// with linear learning-rate decay. Deterministic when cfg.threads == 1.
inline EmbeddingModel train_pvdbow(const std::vector<corpus::CompanyDocument>& docs,
                                   const Vocabulary& vocab, const EmbeddingConfig& cfg) {
    cfg.validate();
    const auto dim = cfg.vector_size;
    const auto n_docs = static_cast<Eigen::Index>(docs.size());
    const auto n_words = static_cast<Eigen::Index>(vocab.size());

    EmbeddingModel m;
    m.words = vocab.words;
    m.word_counts = vocab.counts;
    m.company_vectors.resize(n_docs, dim);
    m.output_vectors = RowMatrix::Zero(n_words, dim);
    for (Eigen::Index i = 0; i < n_docs; ++i) {
        const auto& ticker = docs[static_cast<std::size_t>(i)].ticker;
        if (!m.company_index.emplace(ticker, m.tickers.size()).second)
            fail(ErrorKind::data, "embedding: duplicate ticker '" + ticker + "'");
        m.tickers.push_back(ticker);
    }
    {
        Rng init(derive_seed(cfg.seed, "init"));
        for (Eigen::Index i = 0; i < n_docs; ++i)
            for (int k = 0; k < dim; ++k) m.company_vectors(i, k) = uniform(init, -0.5, 0.5) / dim;
        if (cfg.train_words) {
            m.word_vectors.resize(n_words, dim);
            for (Eigen::Index i = 0; i < n_words; ++i)
                for (int k = 0; k < dim; ++k) m.word_vectors(i, k) = uniform(init, -0.5, 0.5) / dim;
        }
    }

    // Token ids per document, out-of-vocabulary words removed.
    std::vector<std::vector<std::uint32_t>> ids(docs.size());
    std::uint64_t words_per_epoch = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        for (const auto& t : docs[i].tokens) {
            auto it = vocab.index.find(t);
            if (it != vocab.index.end()) ids[i].push_back(it->second);
        }
        words_per_epoch += ids[i].size();
    }
    std::vector<double> keep_prob(vocab.size(), 1.0);
    for (std::size_t w = 0; w < vocab.size(); ++w) {
        const double f = double(vocab.counts[w]) / double(vocab.total_count);
        keep_prob[w] = std::min(1.0, std::sqrt(cfg.subsample / f));
    }

    const double total_words = double(words_per_epoch) * cfg.epochs;
    const double lr_span = cfg.learning_rate - cfg.min_learning_rate;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double epoch_start = double(words_per_epoch) * epoch;
        std::vector<double> loss_sum(static_cast<std::size_t>(cfg.threads), 0.0);
        std::vector<std::uint64_t> loss_n(static_cast<std::size_t>(cfg.threads), 0);

        auto run_docs = [&](int shard) {
            Eigen::VectorXd h_grad(dim);
            std::vector<std::uint32_t> sentence;
            // position of each document's first word within the epoch
            std::uint64_t offset = 0;
            for (std::size_t di = 0; di < docs.size(); ++di) {
                const auto start = offset;
                offset += ids[di].size();
                if (static_cast<int>(di % static_cast<std::size_t>(cfg.threads)) != shard) continue;
                Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) * docs.size() + di));
                sentence.clear();
                for (auto w : ids[di])
                    if (keep_prob[w] >= 1.0 || uniform01(rng) < keep_prob[w]) sentence.push_back(w);
                const double progress = (epoch_start + double(start)) / std::max(1.0, total_words);
                const double lr = cfg.learning_rate - lr_span * progress;
                double* doc = m.company_vectors.row(static_cast<Eigen::Index>(di)).data();
                for (std::size_t pos = 0; pos < sentence.size(); ++pos) {
                    const double l = detail::sgd_pair(doc, sentence[pos], vocab, m.output_vectors,
                                                      cfg.negative, lr, rng, h_grad);
                    if (!std::isfinite(l))
                        fail(ErrorKind::numerical, "embedding: non-finite loss at epoch " +
                                                       std::to_string(epoch) + ", document " +
                                                       std::to_string(di) + ", position " +
                                                       std::to_string(pos));
                    loss_sum[static_cast<std::size_t>(shard)] += l;
                    ++loss_n[static_cast<std::size_t>(shard)];
                    if (!cfg.train_words) continue;
                    const auto reduced = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cfg.window)));
                    const int span = cfg.window - reduced;
                    const auto lo = pos >= static_cast<std::size_t>(span) ? pos - span : 0;
                    const auto hi = std::min(sentence.size() - 1, pos + static_cast<std::size_t>(span));
                    for (auto c = lo; c <= hi; ++c) {
                        if (c == pos) continue;
                        double* ctx = m.word_vectors.row(sentence[c]).data();
                        detail::sgd_pair(ctx, sentence[pos], vocab, m.output_vectors, cfg.negative,
                                         lr, rng, h_grad);
                    }
                }
            }
        };

        if (cfg.threads == 1) {
            run_docs(0);
        } else {
            // Hogwild: shards update shared rows without synchronization.
            std::vector<std::jthread> pool;
            for (int t = 0; t < cfg.threads; ++t) pool.emplace_back(run_docs, t);
        }
        double s = 0.0;
        std::uint64_t n = 0;
        for (std::size_t t = 0; t < loss_sum.size(); ++t) {
            s += loss_sum[t];
            n += loss_n[t];
        }
        m.epoch_loss.push_back(n ? s / double(n) : 0.0);
    }
    if (!m.company_vectors.allFinite())
        fail(ErrorKind::numerical, "embedding: non-finite company vectors after training");
    return m;
}

inline Eigen::VectorXd company_embedding(const EmbeddingModel& model, const std::string& ticker) {
    auto it = model.company_index.find(ticker);
    if (it == model.company_index.end())
        fail(ErrorKind::lookup, "embedding: unknown ticker '" + ticker + "'");
    return model.company_vectors.row(static_cast<Eigen::Index>(it->second)).transpose();
}

inline double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.dot(b) / (a.norm() * b.norm());
}

/// Text format, version 1:
///   neus-embedding 1
///   <vector_size> <n_companies> <n_words> <has_word_vectors>
///   <ticker> v1 .. vN            (one line per company)
///   <word> <count> u1 .. uN       (output vectors)
///   <word> w1 .. wN               (input word vectors, when present)
/// Values use 17 significant digits so a load reproduces the model exactly.
inline std::string serialize(const EmbeddingModel& m) {
    std::ostringstream out;
    out.precision(17);
    const auto dim = m.company_vectors.cols();
    const bool has_words = m.word_vectors.rows() > 0;
    out << "neus-embedding 1\n"
        << dim << ' ' << m.tickers.size() << ' ' << m.words.size() << ' ' << (has_words ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < m.tickers.size(); ++i) {
        out << m.tickers[i];
        for (Eigen::Index k = 0; k < dim; ++k) out << ' ' << m.company_vectors(static_cast<Eigen::Index>(i), k);
        out << '\n';
    }
    for (std::size_t i = 0; i < m.words.size(); ++i) {
        out << m.words[i] << ' ' << m.word_counts[i];
        for (Eigen::Index k = 0; k < dim; ++k) out << ' ' << m.output_vectors(static_cast<Eigen::Index>(i), k);
        out << '\n';
    }
    if (has_words) {
        for (std::size_t i = 0; i < m.words.size(); ++i) {
            out << m.words[i];
            for (Eigen::Index k = 0; k < dim; ++k) out << ' ' << m.word_vectors(static_cast<Eigen::Index>(i), k);
            out << '\n';
        }
    }
    return out.str();
}

inline EmbeddingModel deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "neus-embedding" || version != 1)
        fail(ErrorKind::schema, "embedding: unrecognized model header");
    Eigen::Index dim = 0;
    std::size_t n_comp = 0, n_words = 0;
    int has_words = 0;
    in >> dim >> n_comp >> n_words >> has_words;
    if (!in || dim < 1) fail(ErrorKind::schema, "embedding: bad model dimensions");
    EmbeddingModel m;
    m.company_vectors.resize(static_cast<Eigen::Index>(n_comp), dim);
    m.output_vectors.resize(static_cast<Eigen::Index>(n_words), dim);
    for (std::size_t i = 0; i < n_comp; ++i) {
        std::string t;
        in >> t;
        m.company_index.emplace(t, i);
        m.tickers.push_back(t);
        for (Eigen::Index k = 0; k < dim; ++k) in >> m.company_vectors(static_cast<Eigen::Index>(i), k);
    }
    for (std::size_t i = 0; i < n_words; ++i) {
        std::string w;
        std::uint64_t c = 0;
        in >> w >> c;
        m.words.push_back(w);
        m.word_counts.push_back(c);
        for (Eigen::Index k = 0; k < dim; ++k) in >> m.output_vectors(static_cast<Eigen::Index>(i), k);
    }
    if (has_words) {
        m.word_vectors.resize(static_cast<Eigen::Index>(n_words), dim);
        for (std::size_t i = 0; i < n_words; ++i) {
            std::string w;
            in >> w;
            for (Eigen::Index k = 0; k < dim; ++k) in >> m.word_vectors(static_cast<Eigen::Index>(i), k);
        }
    }
    if (!in) fail(ErrorKind::schema, "embedding: truncated model file");
    return m;
}

} // namespace neus::embedding
