#pragma once

// End-to-end orchestration: configuration, input readers, stage artifacts
// cached by content hash, and the report writers.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "neus/clustering.hpp"
#include "neus/corpus.hpp"
#include "neus/csv.hpp"
#include "neus/embedding.hpp"
#include "neus/error.hpp"
#include "neus/evaluation.hpp"
#include "neus/factor_model.hpp"
#include "neus/parallel.hpp"
#include "neus/projection.hpp"

namespace neus::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int schema_version = 1;

struct Paths {
    std::string news;
    corpus::NewsFormat news_format = corpus::NewsFormat::jsonl;
    std::string returns;       // stocks, wide
    std::string basis_returns; // candidate basis assets, wide; defaults to `returns`
    std::string market;
    std::string risk_free;
    std::string ff5;
    std::string industry;
    std::string stopwords;
    std::string output;
};

struct ClusterParams {
    double cut_height = 0.25;
    int n_clusters = 0; // > 0 overrides cut_height
    projection::Metric metric = projection::Metric::euclidean;
};

struct Splits {
    std::string train_end;      // first validation week (date)
    std::string validation_end; // first test week (date)
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    int workers = 1;
    Paths paths;
    corpus::CorpusConfig corpus;
    embedding::EmbeddingConfig embedding;
    projection::UmapConfig projection;
    ClusterParams clustering;
    factor::McpConfig selection;
    Splits splits;
    bool explanation = true;
    bool prediction = true;
    double level = 0.05;
    std::string config_dir;
};

namespace detail {

template <typename T>
void take(const json& obj, const std::string& section, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::config, "config field '" + section + "." + key + "' has the wrong type");
    }
}

inline void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> known) {
    if (!obj.is_object()) fail(ErrorKind::config, "config section '" + section + "' must be an object");
    for (const auto& [k, _] : obj.items())
        if (std::none_of(known.begin(), known.end(), [&](const char* s) { return k == s; }))
            fail(ErrorKind::config, "unknown config field '" + (section.empty() ? k : section + "." + k) + "'");
}

inline std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

} // namespace detail

inline PipelineConfig parse_config(const json& j, const std::string& config_dir) {
    using detail::reject_unknown;
    using detail::take;
    PipelineConfig c;
    c.config_dir = config_dir;
    reject_unknown(j, "", {"schema_version", "seed", "workers", "paths", "corpus", "embedding", "projection",
                           "clustering", "selection", "splits", "modes", "evaluation"});
    int version = 0;
    take(j, "", "schema_version", version);
    if (version != schema_version)
        fail(ErrorKind::config, "config field 'schema_version' must be " + std::to_string(schema_version));
    take(j, "", "seed", c.seed);
    take(j, "", "workers", c.workers);

    const json empty = json::object();
    auto section = [&](const char* name) -> const json& { return j.contains(name) ? j.at(name) : empty; };

    const auto& p = section("paths");
    reject_unknown(p, "paths", {"news", "news_format", "returns", "basis_returns", "market", "risk_free", "ff5",
                                "industry", "stopwords", "output"});
    take(p, "paths", "news", c.paths.news);
    std::string fmt = "jsonl";
    take(p, "paths", "news_format", fmt);
    if (fmt == "jsonl") c.paths.news_format = corpus::NewsFormat::jsonl;
    else if (fmt == "csv") c.paths.news_format = corpus::NewsFormat::csv;
    else fail(ErrorKind::config, "config field 'paths.news_format' must be 'jsonl' or 'csv'");
    take(p, "paths", "returns", c.paths.returns);
    take(p, "paths", "basis_returns", c.paths.basis_returns);
    take(p, "paths", "market", c.paths.market);
    take(p, "paths", "risk_free", c.paths.risk_free);
    take(p, "paths", "ff5", c.paths.ff5);
    take(p, "paths", "industry", c.paths.industry);
    take(p, "paths", "stopwords", c.paths.stopwords);
    take(p, "paths", "output", c.paths.output);
    for (auto* s : {&c.paths.news, &c.paths.returns, &c.paths.basis_returns, &c.paths.market, &c.paths.risk_free,
                    &c.paths.ff5, &c.paths.industry, &c.paths.stopwords, &c.paths.output})
        *s = detail::resolve(config_dir, *s);
    if (c.paths.basis_returns.empty()) c.paths.basis_returns = c.paths.returns;
    if (c.paths.stopwords.empty()) c.paths.stopwords = std::string(NEUS_DATA_DIR) + "/stopwords.txt";
    if (c.paths.output.empty()) fail(ErrorKind::config, "config field 'paths.output' is required");

    const auto& co = section("corpus");
    reject_unknown(co, "corpus", {"min_articles", "n_sample"});
    take(co, "corpus", "min_articles", c.corpus.min_articles);
    take(co, "corpus", "n_sample", c.corpus.n_sample);

    const auto& e = section("embedding");
    reject_unknown(e, "embedding", {"vector_size", "window", "epochs", "min_count", "subsample", "negative",
                                    "learning_rate", "min_learning_rate", "train_words", "threads"});
    take(e, "embedding", "vector_size", c.embedding.vector_size);
    take(e, "embedding", "window", c.embedding.window);
    take(e, "embedding", "epochs", c.embedding.epochs);
    take(e, "embedding", "min_count", c.embedding.min_count);
    take(e, "embedding", "subsample", c.embedding.subsample);
    take(e, "embedding", "negative", c.embedding.negative);
    take(e, "embedding", "learning_rate", c.embedding.learning_rate);
    take(e, "embedding", "min_learning_rate", c.embedding.min_learning_rate);
    take(e, "embedding", "train_words", c.embedding.train_words);
    take(e, "embedding", "threads", c.embedding.threads);

    const auto& pr = section("projection");
    reject_unknown(pr, "projection", {"n_neighbors", "min_dist", "spread", "n_components", "epochs",
                                      "negative_sample_rate", "metric", "spectral_init"});
    take(pr, "projection", "n_neighbors", c.projection.n_neighbors);
    take(pr, "projection", "min_dist", c.projection.min_dist);
    take(pr, "projection", "spread", c.projection.spread);
    take(pr, "projection", "n_components", c.projection.n_components);
    take(pr, "projection", "epochs", c.projection.epochs);
    take(pr, "projection", "negative_sample_rate", c.projection.negative_sample_rate);
    take(pr, "projection", "spectral_init", c.projection.spectral_init);
    std::string metric = "cosine";
    take(pr, "projection", "metric", metric);
    c.projection.metric = projection::parse_metric(metric);

    const auto& cl = section("clustering");
    reject_unknown(cl, "clustering", {"cut_height", "n_clusters", "metric"});
    take(cl, "clustering", "cut_height", c.clustering.cut_height);
    take(cl, "clustering", "n_clusters", c.clustering.n_clusters);
    metric = "euclidean";
    take(cl, "clustering", "metric", metric);
    c.clustering.metric = projection::parse_metric(metric);

    const auto& s = section("selection");
    reject_unknown(s, "selection", {"a", "n_lambda", "lambda_min_ratio", "max_support", "window", "tol",
                                    "max_iterations", "penalty", "market_intercept"});
    take(s, "selection", "a", c.selection.a);
    take(s, "selection", "n_lambda", c.selection.n_lambda);
    take(s, "selection", "lambda_min_ratio", c.selection.lambda_min_ratio);
    take(s, "selection", "max_support", c.selection.max_support);
    take(s, "selection", "window", c.selection.window);
    take(s, "selection", "tol", c.selection.tol);
    take(s, "selection", "max_iterations", c.selection.max_iterations);
    take(s, "selection", "market_intercept", c.selection.market_intercept);
    std::string penalty = "mcp";
    take(s, "selection", "penalty", penalty);
    if (penalty == "mcp") c.selection.penalty = factor::Penalty::mcp;
    else if (penalty == "lasso") c.selection.penalty = factor::Penalty::lasso;
    else fail(ErrorKind::config, "config field 'selection.penalty' must be 'mcp' or 'lasso'");

    const auto& sp = section("splits");
    reject_unknown(sp, "splits", {"train_end", "validation_end"});
    take(sp, "splits", "train_end", c.splits.train_end);
    take(sp, "splits", "validation_end", c.splits.validation_end);

    if (j.contains("modes")) {
        std::vector<std::string> modes;
        detail::take(j, "", "modes", modes);
        c.explanation = c.prediction = false;
        for (const auto& m : modes) {
            if (m == "explanation") c.explanation = true;
            else if (m == "prediction") c.prediction = true;
            else fail(ErrorKind::config, "config field 'modes' has unknown mode '" + m + "'");
        }
        if (!c.explanation && !c.prediction) fail(ErrorKind::config, "config field 'modes' is empty");
    }
    const auto& ev = section("evaluation");
    reject_unknown(ev, "evaluation", {"level"});
    take(ev, "evaluation", "level", c.level);

    if (const char* v = std::getenv("NEUS_SEED"); v && *v) {
        try {
            c.seed = std::stoull(v);
        } catch (const std::exception&) {
            fail(ErrorKind::config, "environment variable NEUS_SEED is not an unsigned integer");
        }
    }
    if (const char* v = std::getenv("NEUS_WORKERS"); v && *v) {
        try {
            c.workers = std::stoi(v);
        } catch (const std::exception&) {
            fail(ErrorKind::config, "environment variable NEUS_WORKERS is not an integer");
        }
    }
    if (c.workers < 1) fail(ErrorKind::config, "config field 'workers' must be >= 1");
    if (!(c.level > 0.0 && c.level < 1.0)) fail(ErrorKind::config, "config field 'evaluation.level' must lie in (0, 1)");
    if (!(c.clustering.cut_height >= 0.0)) fail(ErrorKind::config, "config field 'clustering.cut_height' must be >= 0");
    c.corpus.seed = c.seed;
    c.embedding.seed = c.seed;
    c.projection.seed = c.seed;
    c.selection.workers = c.workers;
    c.corpus.validate();
    c.embedding.validate();
    c.selection.validate();
    return c;
}

inline PipelineConfig load_config(const std::string& path) {
    const auto text = csv::read_file(path);
    const auto j = json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::config, path + ": not valid JSON");
    return parse_config(j, fs::absolute(path).parent_path().string());
}

// --- content hashing -------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorKind::dependency, "sha256: digest failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return out.str();
}

inline std::string file_hash(const std::string& path) { return sha256_hex(csv::read_file(path)); }

// --- input readers ---------------------------------------------------------

struct WideTable {
    std::vector<Date> dates;
    std::vector<std::string> columns;
    Eigen::MatrixXd values; // dates x columns, NaN = missing
};

inline double parse_value(const std::string& field, const std::string& where) {
    const auto t = csv::trim(field);
    if (t.empty() || t == "NA" || t == "NaN" || t == "nan") return std::numeric_limits<double>::quiet_NaN();
    try {
        std::size_t used = 0;
        const double v = std::stod(std::string(t), &used);
        if (used != t.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::schema, where + ": cannot parse number '" + std::string(t) + "'");
    }
}

/// `date,<col1>,<col2>,...` with one row per week, dates ascending.
inline WideTable read_wide(const std::string& path, double scale = 1.0) {
    const auto rows = csv::parse(csv::read_file(path));
    if (rows.empty() || rows[0].size() < 2 || csv::trim(rows[0][0]) != "date")
        fail(ErrorKind::schema, path + ": expected a header starting with 'date'");
    WideTable t;
    for (std::size_t c = 1; c < rows[0].size(); ++c) t.columns.emplace_back(csv::trim(rows[0][c]));
    t.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(t.columns.size()));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != rows[0].size())
            fail(ErrorKind::schema, path + ": row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                                        " fields, expected " + std::to_string(rows[0].size()));
        auto d = Date::parse(csv::trim(row[0]));
        if (!d) fail(ErrorKind::schema, path + ": bad date '" + row[0] + "' on row " + std::to_string(r + 1));
        if (!t.dates.empty() && !(t.dates.back() < *d))
            fail(ErrorKind::schema, path + ": dates must be strictly increasing (row " + std::to_string(r + 1) + ")");
        t.dates.push_back(*d);
        for (std::size_t c = 1; c < row.size(); ++c)
            t.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) =
                parse_value(row[c], path + " row " + std::to_string(r + 1)) * scale;
    }
    return t;
}

/// Aligns column `col` of `t` to `grid`; every grid week must be present.
inline Eigen::VectorXd align_column(const WideTable& t, std::size_t col, const std::vector<Date>& grid,
                                    const std::string& series) {
    std::map<Date, Eigen::Index> at;
    for (std::size_t i = 0; i < t.dates.size(); ++i) at.emplace(t.dates[i], static_cast<Eigen::Index>(i));
    Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        auto it = at.find(grid[i]);
        if (it == at.end()) fail(ErrorKind::data, "series '" + series + "' missing week " + grid[i].str());
        out(static_cast<Eigen::Index>(i)) = t.values(it->second, static_cast<Eigen::Index>(col));
    }
    return out;
}

inline std::map<std::string, std::string> read_industry(const std::string& path) {
    const auto rows = csv::parse(csv::read_file(path));
    if (rows.empty() || rows[0].size() < 2 || csv::trim(rows[0][0]) != "ticker")
        fail(ErrorKind::schema, path + ": expected header 'ticker,industry'");
    std::map<std::string, std::string> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() < 2) fail(ErrorKind::schema, path + ": short row " + std::to_string(r + 1));
        out[std::string(csv::trim(rows[r][0]))] = std::string(csv::trim(rows[r][1]));
    }
    return out;
}

inline const std::vector<std::string>& ff5_columns() {
    static const std::vector<std::string> cols{"Mkt-RF", "SMB", "HML", "RMW", "CMA"};
    return cols;
}

/// Factor file in percent units; returns the five factors as decimals on the grid.
inline Eigen::MatrixXd read_ff5(const std::string& path, const std::vector<Date>& grid) {
    const auto t = read_wide(path, 0.01);
    Eigen::MatrixXd f(static_cast<Eigen::Index>(grid.size()), 5);
    for (std::size_t k = 0; k < 5; ++k) {
        auto it = std::find(t.columns.begin(), t.columns.end(), ff5_columns()[k]);
        if (it == t.columns.end()) fail(ErrorKind::schema, path + ": missing factor column '" + ff5_columns()[k] + "'");
        f.col(static_cast<Eigen::Index>(k)) =
            align_column(t, static_cast<std::size_t>(it - t.columns.begin()), grid, ff5_columns()[k]);
    }
    if (!f.allFinite()) fail(ErrorKind::data, path + ": missing factor values on the week grid");
    return f;
}

inline std::size_t split_index(const std::vector<Date>& grid, const std::string& date, const char* field) {
    const auto d = Date::parse(date);
    if (!d) fail(ErrorKind::config, std::string("config field 'splits.") + field + "' must be a YYYY-MM-DD date");
    return static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), *d) - grid.begin());
}

/// Return panel on the stock file's week grid with the given basis tickers.
inline factor::ReturnPanel load_panel(const PipelineConfig& cfg, const std::vector<std::string>& basis_tickers) {
    const auto stocks = read_wide(cfg.paths.returns);
    factor::ReturnPanel p;
    p.weeks = stocks.dates;
    p.stock_ids = stocks.columns;
    p.stocks = stocks.values;
    const auto basis = cfg.paths.basis_returns == cfg.paths.returns ? stocks : read_wide(cfg.paths.basis_returns);
    p.basis.resize(static_cast<Eigen::Index>(p.weeks.size()), static_cast<Eigen::Index>(basis_tickers.size()));
    for (std::size_t j = 0; j < basis_tickers.size(); ++j) {
        auto it = std::find(basis.columns.begin(), basis.columns.end(), basis_tickers[j]);
        if (it == basis.columns.end())
            fail(ErrorKind::data, "basis asset '" + basis_tickers[j] + "' has no return series in " +
                                      cfg.paths.basis_returns);
        p.basis.col(static_cast<Eigen::Index>(j)) =
            align_column(basis, static_cast<std::size_t>(it - basis.columns.begin()), p.weeks, basis_tickers[j]);
    }
    p.basis_ids = basis_tickers;
    p.market = align_column(read_wide(cfg.paths.market), 0, p.weeks, "market");
    p.risk_free = align_column(read_wide(cfg.paths.risk_free), 0, p.weeks, "risk_free");
    p.train_end = split_index(p.weeks, cfg.splits.train_end, "train_end");
    p.validation_end = split_index(p.weeks, cfg.splits.validation_end, "validation_end");
    p.validate();
    return p;
}

// --- stages and the artifact cache ----------------------------------------

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"corpus", "embed", "project", "cluster", "select", "evaluate", "report"};
    return names;
}

struct StageArtifact {
    std::string stage;
    std::string key;                  // hash of inputs and stage configuration
    std::vector<std::string> outputs; // paths under the output directory
    bool cache_hit = false;
    std::vector<std::string> warnings;
};

struct StageOutput {
    std::map<std::string, std::string> files; // file name -> content
    std::vector<std::string> warnings;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
        fs::create_directories(cfg_.paths.output);
        load_manifest();
    }

    const PipelineConfig& config() const { return cfg_; }
    std::string output_path(const std::string& name) const { return (fs::path(cfg_.paths.output) / name).string(); }

    /// Runs one stage; upstream artifacts must already exist.
    StageArtifact run(const std::string& stage) {
        const auto spec = describe(stage);
        for (const auto& up : spec.upstream) {
            const auto it = manifest_.find(up);
            if (it == manifest_.end() || !outputs_intact(*it))
                fail(ErrorKind::dependency, "stage '" + stage + "' requires the '" + up +
                                                "' artifact; run that stage first");
        }
        json key_doc;
        key_doc["stage"] = stage;
        key_doc["schema_version"] = schema_version;
        key_doc["config"] = spec.config;
        for (const auto& up : spec.upstream) key_doc["upstream"][up] = manifest_.at(up)["outputs"];
        for (const auto& path : spec.inputs) key_doc["inputs"][path] = path.empty() ? "" : file_hash(path);
        const auto key = sha256_hex(key_doc.dump());

        StageArtifact art;
        art.stage = stage;
        art.key = key;
        if (auto it = manifest_.find(stage); it != manifest_.end() && (*it)["key"] == key && outputs_intact(*it)) {
            art.cache_hit = true;
            for (const auto& [name, _] : (*it)["outputs"].items()) art.outputs.push_back(output_path(name));
            return art;
        }
        auto out = spec.compute();
        json entry;
        entry["key"] = key;
        for (const auto& [name, content] : out.files) {
            csv::write_file(output_path(name), content);
            entry["outputs"][name] = sha256_hex(content);
            art.outputs.push_back(output_path(name));
        }
        manifest_[stage] = entry;
        // downstream entries stay; their keys include upstream hashes, so they miss if anything changed
        save_manifest();
        art.warnings = std::move(out.warnings);
        return art;
    }

    std::vector<StageArtifact> run_all() {
        std::vector<StageArtifact> out;
        for (const auto& s : stage_names()) out.push_back(run(s));
        return out;
    }

private:
    struct StageSpec {
        json config;
        std::vector<std::string> upstream;
        std::vector<std::string> inputs;
        std::function<StageOutput()> compute;
    };

    StageSpec describe(const std::string& stage) {
        const auto& c = cfg_;
        if (stage == "corpus")
            return {json{{"min_articles", c.corpus.min_articles}, {"n_sample", c.corpus.n_sample},
                         {"seed", c.seed}, {"news_format", c.paths.news_format == corpus::NewsFormat::csv ? "csv" : "jsonl"}},
                    {},
                    {c.paths.news, c.paths.stopwords, c.paths.basis_returns},
                    [this] { return stage_corpus(); }};
        if (stage == "embed") {
            const auto& e = c.embedding;
            return {json{{"vector_size", e.vector_size}, {"window", e.window}, {"epochs", e.epochs},
                         {"min_count", e.min_count}, {"subsample", e.subsample}, {"negative", e.negative},
                         {"learning_rate", e.learning_rate}, {"min_learning_rate", e.min_learning_rate},
                         {"train_words", e.train_words}, {"threads", e.threads}, {"seed", c.seed}},
                    {"corpus"},
                    {},
                    [this] { return stage_embed(); }};
        }
        if (stage == "project") {
            const auto& u = c.projection;
            return {json{{"n_neighbors", u.n_neighbors}, {"min_dist", u.min_dist}, {"spread", u.spread},
                         {"n_components", u.n_components}, {"epochs", u.epochs},
                         {"negative_sample_rate", u.negative_sample_rate}, {"metric", projection::to_string(u.metric)},
                         {"spectral_init", u.spectral_init}, {"seed", c.seed}},
                    {"embed"},
                    {},
                    [this] { return stage_project(); }};
        }
        if (stage == "cluster")
            return {json{{"cut_height", c.clustering.cut_height}, {"n_clusters", c.clustering.n_clusters},
                         {"metric", projection::to_string(c.clustering.metric)}},
                    {"project"},
                    {},
                    [this] { return stage_cluster(); }};
        if (stage == "select") {
            const auto& s = c.selection;
            return {json{{"a", s.a}, {"n_lambda", s.n_lambda}, {"lambda_min_ratio", s.lambda_min_ratio},
                         {"max_support", s.max_support}, {"window", s.window}, {"tol", s.tol},
                         {"max_iterations", s.max_iterations},
                         {"penalty", s.penalty == factor::Penalty::lasso ? "lasso" : "mcp"},
                         {"market_intercept", s.market_intercept}, {"train_end", c.splits.train_end},
                         {"validation_end", c.splits.validation_end}, {"explanation", c.explanation},
                         {"prediction", c.prediction}},
                    {"cluster"},
                    {c.paths.returns, c.paths.basis_returns, c.paths.market, c.paths.risk_free},
                    [this] { return stage_select(); }};
        }
        if (stage == "evaluate")
            return {json{{"level", c.level}, {"window", c.selection.window}},
                    {"select"},
                    {c.paths.ff5, c.paths.industry},
                    [this] { return stage_evaluate(); }};
        if (stage == "report")
            return {json{{"level", c.level}}, {"evaluate"}, {}, [this] { return stage_report(); }};
        fail(ErrorKind::config, "unknown stage '" + stage + "'");
    }

    bool outputs_intact(const json& entry) const {
        if (!entry.contains("outputs")) return false;
        for (const auto& [name, hash] : entry["outputs"].items()) {
            const auto p = output_path(name);
            if (!fs::exists(p) || file_hash(p) != hash.get<std::string>()) return false;
        }
        return true;
    }

    void load_manifest() {
        const auto p = output_path("manifest.json");
        manifest_ = json::object();
        if (!fs::exists(p)) return;
        manifest_ = json::parse(csv::read_file(p), nullptr, false);
        if (manifest_.is_discarded() || !manifest_.is_object()) manifest_ = json::object();
    }

    void save_manifest() const { csv::write_file(output_path("manifest.json"), manifest_.dump(2) + "\n"); }

    std::string read_output(const std::string& name) const { return csv::read_file(output_path(name)); }

    // --- stage bodies ---

    StageOutput stage_corpus() const {
        StageOutput out;
        auto loaded = corpus::load_articles(cfg_.paths.news, cfg_.paths.news_format);
        out.warnings = loaded.warnings;
        const auto basis = read_wide(cfg_.paths.basis_returns);
        std::set<std::string> tickers(basis.columns.begin(), basis.columns.end());
        auto cc = cfg_.corpus;
        cc.stopwords = corpus::load_stopwords(cfg_.paths.stopwords);
        const auto sel = corpus::select_company_documents(loaded.articles, tickers, cc);
        json summary;
        summary["articles"] = loaded.articles.size();
        summary["malformed"] = loaded.malformed;
        summary["documents"] = sel.documents.size();
        for (const auto& [t, n] : sel.excluded) summary["excluded"][t] = n;
        if (sel.documents.size() < 3) fail(ErrorKind::data, "corpus: fewer than 3 companies meet min_articles");
        out.files["documents.jsonl"] = corpus::documents_to_jsonl(sel.documents);
        out.files["corpus_summary.json"] = summary.dump(2) + "\n";
        return out;
    }

    StageOutput stage_embed() const {
        const auto docs = corpus::documents_from_jsonl(read_output("documents.jsonl"));
        const auto vocab = embedding::build_vocabulary(docs, cfg_.embedding);
        const auto model = embedding::train_pvdbow(docs, vocab, cfg_.embedding);
        return {{{"model.txt", embedding::serialize(model)}}, {}};
    }

    StageOutput stage_project() const {
        const auto model = embedding::deserialize(read_output("model.txt"));
        StageOutput out;
        const auto p = projection::project(model.company_vectors, cfg_.projection, &out.warnings);
        out.files["projected.csv"] = projection::projected_to_csv(p, model.tickers);
        return out;
    }

    StageOutput stage_cluster() const {
        const auto [tickers, coords] = projection::projected_from_csv(read_output("projected.csv"));
        const auto d = clustering::minimax_linkage_cluster(coords, cfg_.clustering.metric, tickers);
        double h = cfg_.clustering.cut_height;
        if (cfg_.clustering.n_clusters > 0)
            h = clustering::cut_height_for_clusters(d, static_cast<std::size_t>(cfg_.clustering.n_clusters));
        return {{{"basis.csv", clustering::basis_to_csv(clustering::cut_dendrogram(d, h))}}, {}};
    }

    StageOutput stage_select() const {
        const auto basis = clustering::basis_from_csv(read_output("basis.csv"));
        const auto panel = load_panel(cfg_, basis.prototypes);
        const auto excess = factor::excess_returns(panel);
        StageOutput out;
        auto run_mode = [&](int lag, const std::string& file) {
            const factor::SelectionEngine eng(excess, cfg_.selection, lag);
            const auto results = eng.select_all(cfg_.workers);
            std::string text;
            for (const auto& r : results) {
                text += selection_to_json(r, excess).dump() + "\n";
                for (const auto& w : r.warnings) out.warnings.push_back(r.stock + ": " + w);
            }
            out.files[file] = text;
        };
        if (cfg_.explanation) run_mode(0, "selection_explain.jsonl");
        if (cfg_.prediction) run_mode(1, "selection_predict.jsonl");
        return out;
    }

    static json selection_to_json(const factor::SelectionResult& r, const factor::ExcessPanel& panel) {
        json j;
        j["stock"] = r.stock;
        j["lag"] = r.lag;
        j["skipped"] = r.skipped;
        if (r.skipped) {
            j["skip_reason"] = r.skip_reason;
            return j;
        }
        j["lambda"] = r.lambda;
        j["lambda_index"] = r.lambda_index;
        j["n_lambda"] = r.lambdas.size();
        std::vector<std::string> support;
        for (auto s : r.support) support.push_back(panel.basis_ids[s]);
        j["support"] = support;
        j["capped"] = r.capped;
        j["intercept"] = r.fit.intercept;
        j["coefficients"] = std::vector<double>(r.fit.coefficients.data(),
                                                r.fit.coefficients.data() + r.fit.coefficients.size());
        j["sigma2"] = r.fit.sigma2();
        j["mse_at_lambda"] = r.mse[r.lambda_index];
        j["mse_min"] = *std::min_element(r.mse.begin(), r.mse.end());
        j["converged"] = r.converged;
        j["warnings"] = r.warnings;
        return j;
    }

    struct StockEval {
        json record;
    };

    StageOutput stage_evaluate() const {
        const auto basis = clustering::basis_from_csv(read_output("basis.csv"));
        const auto panel = load_panel(cfg_, basis.prototypes);
        const auto excess = factor::excess_returns(panel);
        const auto ff5 = read_ff5(cfg_.paths.ff5, panel.weeks);
        const auto industry = read_industry(cfg_.paths.industry);
        const auto window = cfg_.selection.window;
        const auto t_begin = panel.validation_end;
        const auto t_end = panel.size();
        const auto v_begin = panel.train_end;
        if (t_end - t_begin < 8) fail(ErrorKind::data, "evaluate: test period shorter than 8 weeks");

        auto read_selection = [&](const std::string& file) {
            std::map<std::string, json> m;
            if (!fs::exists(output_path(file))) return m;
            std::istringstream in(read_output(file));
            std::string line;
            while (std::getline(in, line))
                if (!line.empty()) {
                    auto j = json::parse(line);
                    m[j["stock"].get<std::string>()] = j;
                }
            return m;
        };
        const auto explain = read_selection("selection_explain.jsonl");
        const auto predict = read_selection("selection_predict.jsonl");

        auto support_columns = [&](const json& sel) {
            std::vector<std::size_t> cols;
            for (const auto& t : sel["support"]) {
                auto it = std::find(excess.basis_ids.begin(), excess.basis_ids.end(), t.get<std::string>());
                cols.push_back(static_cast<std::size_t>(it - excess.basis_ids.begin()));
            }
            return cols;
        };
        auto nan_json = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };

        std::vector<json> records(excess.stock_ids.size());
        parallel_for(records.size(), cfg_.workers, [&](std::size_t s) {
            const auto& id = excess.stock_ids[s];
            json rec;
            rec["stock"] = id;
            auto ind = industry.find(id);
            rec["industry"] = ind == industry.end() ? std::string(eval::unclassified) : ind->second;
            const Eigen::VectorXd y = excess.stocks.col(static_cast<Eigen::Index>(s));
            const auto ex = explain.find(id);
            const auto pr = predict.find(id);
            const bool usable = (cfg_.explanation ? ex != explain.end() && !ex->second["skipped"].get<bool>() : true) &&
                                (cfg_.prediction ? pr != predict.end() && !pr->second["skipped"].get<bool>() : true);
            if (!usable) {
                rec["skipped"] = true;
                records[s] = rec;
                return;
            }
            rec["skipped"] = false;
            const double baseline = y.segment(static_cast<Eigen::Index>(v_begin),
                                              static_cast<Eigen::Index>(t_begin - v_begin)).mean();
            std::vector<double> actual(y.data() + t_begin, y.data() + t_end);

            auto score = [&](const Eigen::MatrixXd& regs, int lag, bool in_sample, json& out, const char* oos_key) {
                const int r = static_cast<int>(regs.cols());
                if (in_sample) {
                    const auto fit = factor::fit_window(regs, y, 0, t_begin, t_end);
                    out["in_sample_adj_r2"] = nan_json(eval::adjusted_r2_insample(fit));
                    out["intercept"] = fit.intercept;
                    out["intercept_p"] = nan_json(fit.intercept_p);
                    out["sse"] = fit.sse;
                    out["n_regressors"] = fit.r;
                }
                const auto pred = factor::rolling_predictions(regs, y, lag, window, t_begin, t_end);
                out[oos_key] = nan_json(eval::adjusted_r2_oos(pred, actual, baseline, r));
            };

            json neus, ff;
            std::vector<std::size_t> sup;
            if (cfg_.explanation) {
                sup = support_columns(ex->second);
                const auto regs = factor::support_regressors(excess, sup);
                neus["support"] = ex->second["support"];
                score(regs, 0, true, neus, "oos_explain_adj_r2");
                score(ff5, 0, true, ff, "oos_explain_adj_r2");

                // FF5 versus FF5 plus the selected prototypes over the test period
                Eigen::MatrixXd full(ff5.rows(), 5 + static_cast<Eigen::Index>(sup.size()));
                full.leftCols(5) = ff5;
                for (std::size_t k = 0; k < sup.size(); ++k)
                    full.col(5 + static_cast<Eigen::Index>(k)) = excess.basis.col(static_cast<Eigen::Index>(sup[k]));
                const auto restricted = factor::fit_window(ff5, y, 0, t_begin, t_end);
                const auto unrestricted = factor::fit_window(full, y, 0, t_begin, t_end);
                const int r2 = static_cast<int>(unrestricted.r) - static_cast<int>(restricted.r);
                const auto ft = eval::nested_f_test(restricted.sse, std::min(unrestricted.sse, restricted.sse), r2,
                                                    t_end - t_begin, static_cast<int>(restricted.r));
                rec["ftest"] = {{"r2", ft.r2}, {"n", ft.n}, {"ss_f", ft.ss_f}, {"ss_g", ft.ss_g},
                                {"f", nan_json(ft.f)}, {"p", ft.p}};
            }
            if (cfg_.prediction) {
                const auto sup1 = support_columns(pr->second);
                neus["predict_support"] = pr->second["support"];
                score(factor::support_regressors(excess, sup1), 1, false, neus, "oos_predict_adj_r2");
                score(ff5, 1, false, ff, "oos_predict_adj_r2");
            }
            rec["neus"] = neus;
            rec["ff5"] = ff;
            records[s] = rec;
        });
        std::string text;
        for (const auto& r : records) text += r.dump() + "\n";
        return {{{"evaluation.jsonl", text}}, {}};
    }

    StageOutput stage_report() const { return {write_reports(read_output("evaluation.jsonl"), cfg_.level), {}}; }

public:
    /// Builds the four report files from evaluation records.
    static std::map<std::string, std::string> write_reports(const std::string& evaluation_jsonl, double level) {
        std::vector<json> recs;
        std::istringstream in(evaluation_jsonl);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) {
                auto j = json::parse(line, nullptr, false);
                if (j.is_discarded()) fail(ErrorKind::schema, "evaluation records: invalid JSON line");
                if (!j["skipped"].get<bool>()) recs.push_back(std::move(j));
            }
        std::sort(recs.begin(), recs.end(), [](const json& a, const json& b) { return a["stock"] < b["stock"]; });
        auto num = [](const json& obj, const char* key) {
            return obj.contains(key) && obj[key].is_number() ? obj[key].get<double>()
                                                             : std::numeric_limits<double>::quiet_NaN();
        };
        auto fmt = [](double v) { return std::isfinite(v) ? csv::format_number(v, 6) : std::string("NA"); };
        const std::vector<std::pair<std::string, std::string>> models{{"NEUS", "neus"}, {"FF5", "ff5"}};

        std::map<std::string, std::string> files;

        // Table 1 layout: shares of intercept p-values and BHY q-values per bucket.
        {
            std::string out = "model,n_stocks";
            for (auto b : eval::bucket_labels) out += ",p_" + std::string(b);
            for (auto b : eval::bucket_labels) out += ",bhy_q_" + std::string(b);
            out += "\n";
            for (const auto& [name, key] : models) {
                std::vector<double> p;
                for (const auto& r : recs) {
                    const double v = num(r[key], "intercept_p");
                    if (std::isfinite(v)) p.push_back(v);
                }
                out += name + "," + std::to_string(p.size());
                if (p.empty()) {
                    out += ",NA,NA,NA,NA,NA,NA\n";
                    continue;
                }
                const auto rep = eval::multiple_test_correct(p, level);
                for (auto c : rep.p_buckets) out += "," + fmt(double(c) / double(p.size()));
                for (auto c : rep.bhy_q_buckets) out += "," + fmt(double(c) / double(p.size()));
                out += "\n";
            }
            files["intercept_report.csv"] = out;
        }

        // Table 2 layout: mean adjusted R^2 with standard errors per task.
        {
            std::string out = "# out-of-sample values use the validation-period mean as baseline and the "
                              "same degrees-of-freedom adjustment as in-sample\n";
            out += "task,neus_mean,neus_se,ff5_mean,ff5_se,n_stocks\n";
            const std::vector<std::pair<std::string, std::string>> tasks{
                {"in_sample_explanation", "in_sample_adj_r2"},
                {"out_of_sample_explanation", "oos_explain_adj_r2"},
                {"out_of_sample_prediction", "oos_predict_adj_r2"}};
            for (const auto& [task, key] : tasks) {
                std::vector<double> a, b;
                for (const auto& r : recs) {
                    a.push_back(num(r["neus"], key.c_str()));
                    b.push_back(num(r["ff5"], key.c_str()));
                }
                std::size_t n = 0;
                for (double v : a) n += std::isfinite(v);
                out += task + "," + fmt(eval::mean_finite(a)) + "," + fmt(eval::standard_error(a)) + "," +
                       fmt(eval::mean_finite(b)) + "," + fmt(eval::standard_error(b)) + "," + std::to_string(n) +
                       "\n";
            }
            files["comparison_report.csv"] = out;
        }

        // Industry means per model.
        {
            std::map<std::string, std::vector<eval::StockScores>> scores;
            std::map<std::string, std::string> industry_of;
            for (const auto& r : recs) {
                const auto id = r["stock"].get<std::string>();
                industry_of[id] = r["industry"].get<std::string>();
                for (const auto& [name, key] : models)
                    scores[name].push_back({id, num(r[key], "in_sample_adj_r2"), num(r[key], "oos_explain_adj_r2")});
            }
            const auto rep = eval::industry_summary(scores, industry_of);
            std::string out = "industry,n_stocks,neus_in_sample,ff5_in_sample,neus_out_of_sample,ff5_out_of_sample\n";
            for (const auto& row : rep.rows) {
                auto get = [](const std::map<std::string, double>& m, const char* k) {
                    auto it = m.find(k);
                    return it == m.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
                };
                out += csv::quote(row.industry) + "," + std::to_string(row.n_stocks) + "," +
                       fmt(get(row.in_sample, "NEUS")) + "," + fmt(get(row.in_sample, "FF5")) + "," +
                       fmt(get(row.out_of_sample, "NEUS")) + "," + fmt(get(row.out_of_sample, "FF5")) + "\n";
            }
            files["industry_report.csv"] = out;
        }

        // Per-stock nested F-tests with Bonferroni and BH decisions.
        {
            std::vector<double> p;
            std::vector<const json*> with;
            for (const auto& r : recs)
                if (r.contains("ftest")) {
                    with.push_back(&r);
                    p.push_back(r["ftest"]["p"].get<double>());
                }
            std::string out = "stock,r2,n,f,p,bonferroni,bh\n";
            if (!p.empty()) {
                const auto rep = eval::multiple_test_correct(p, level);
                for (std::size_t i = 0; i < with.size(); ++i) {
                    const auto& f = (*with[i])["ftest"];
                    out += csv::quote((*with[i])["stock"].get<std::string>()) + "," +
                           std::to_string(f["r2"].get<int>()) + "," + std::to_string(f["n"].get<std::size_t>()) + "," +
                           (f["f"].is_null() ? std::string("inf") : fmt(f["f"].get<double>())) + "," +
                           fmt(p[i]) + "," + (rep.bonferroni[i] ? "1" : "0") + "," + (rep.bh[i] ? "1" : "0") + "\n";
                }
            }
            files["ftest_report.csv"] = out;
        }
        return files;
    }

private:
    PipelineConfig cfg_;
    json manifest_;
};

/// Regenerates the report files from an output directory's evaluation records.
inline std::vector<std::string> report_from_directory(const std::string& dir, double level = 0.05) {
    const auto path = (fs::path(dir) / "evaluation.jsonl").string();
    if (!fs::exists(path)) fail(ErrorKind::dependency, "report: no evaluation records in '" + dir + "'; run 'evaluate' first");
    std::vector<std::string> written;
    for (const auto& [name, content] : Pipeline::write_reports(csv::read_file(path), level)) {
        const auto p = (fs::path(dir) / name).string();
        csv::write_file(p, content);
        written.push_back(p);
    }
    return written;
}

} // namespace neus::pipeline
