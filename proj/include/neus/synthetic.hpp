#pragma once

// Synthetic fixtures with planted ground truth: topic-structured news for a
// universe of basis assets, and a weekly return panel whose stocks load on a
// few of those assets.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neus/csv.hpp"
#include "neus/date.hpp"
#include "neus/error.hpp"
#include "neus/evaluation.hpp"
#include "neus/random.hpp"

namespace neus::synthetic {

struct SyntheticSpec {
    std::uint64_t seed = 1;
    int topics = 3;
    int companies_per_topic = 20;
    int vocabulary_per_topic = 40;
    int shared_vocabulary = 0;       // words drawn from a common pool
    double shared_fraction = 0.0;    // share of article words from the common pool
    int articles_per_company = 8;
    int words_per_article = 40;
    int stocks = 40;
    int support_max = 3;
    bool fixed_support = false;      // every stock gets exactly support_max assets
    double noise_ratio = 0.5;
    int history_weeks = 1;
    int train_weeks = 260;
    int validation_weeks = 52;
    int test_weeks = 52;
    std::string start_date = "2012-01-06";
    double market_volatility = 0.02;
    double topic_volatility = 0.02;
    double asset_volatility = 0.005;
    double risk_free = 0.0002;

    int total_weeks() const { return history_weeks + train_weeks + validation_weeks + test_weeks; }
    int assets() const { return topics * companies_per_topic; }

    void validate() const {
        auto need = [](bool ok, const std::string& what) {
            if (!ok) fail(ErrorKind::config, "synthetic spec: " + what);
        };
        need(topics >= 1 && companies_per_topic >= 1, "topics and companies_per_topic must be >= 1");
        need(vocabulary_per_topic >= 1 && shared_vocabulary >= 0, "vocabulary sizes must be positive");
        need(shared_fraction >= 0.0 && shared_fraction < 1.0, "shared_fraction must lie in [0, 1)");
        need(shared_fraction == 0.0 || shared_vocabulary > 0, "shared_fraction needs a shared vocabulary");
        need(articles_per_company >= 1 && words_per_article >= 1, "article counts must be >= 1");
        need(stocks >= 1, "stocks must be >= 1");
        need(support_max >= 0 && support_max <= assets(), "support_max must lie in [0, assets]");
        need(noise_ratio >= 0.0, "noise_ratio must be >= 0");
        need(history_weeks >= 0 && train_weeks >= 2 && validation_weeks >= 2 && test_weeks >= 2,
             "week counts too small");
        need(Date::parse(start_date).has_value(), "start_date must be YYYY-MM-DD");
    }
};

inline SyntheticSpec spec_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    auto take = [&](const char* key, auto& out) {
        if (!j.contains(key)) return;
        try {
            out = j.at(key).get<std::decay_t<decltype(out)>>();
        } catch (const nlohmann::json::exception&) {
            fail(ErrorKind::config, std::string("synthetic spec field '") + key + "' has the wrong type");
        }
    };
    if (!j.is_object()) fail(ErrorKind::config, "synthetic spec must be a JSON object");
    static const std::vector<std::string> known{
        "seed", "topics", "companies_per_topic", "vocabulary_per_topic", "shared_vocabulary", "shared_fraction",
        "articles_per_company", "words_per_article", "stocks", "support_max", "fixed_support", "noise_ratio",
        "history_weeks", "train_weeks", "validation_weeks", "test_weeks", "start_date", "market_volatility",
        "topic_volatility", "asset_volatility", "risk_free"};
    for (const auto& [k, _] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            fail(ErrorKind::config, "unknown synthetic spec field '" + k + "'");
    take("seed", s.seed);
    take("topics", s.topics);
    take("companies_per_topic", s.companies_per_topic);
    take("vocabulary_per_topic", s.vocabulary_per_topic);
    take("shared_vocabulary", s.shared_vocabulary);
    take("shared_fraction", s.shared_fraction);
    take("articles_per_company", s.articles_per_company);
    take("words_per_article", s.words_per_article);
    take("stocks", s.stocks);
    take("support_max", s.support_max);
    take("fixed_support", s.fixed_support);
    take("noise_ratio", s.noise_ratio);
    take("history_weeks", s.history_weeks);
    take("train_weeks", s.train_weeks);
    take("validation_weeks", s.validation_weeks);
    take("test_weeks", s.test_weeks);
    take("start_date", s.start_date);
    take("market_volatility", s.market_volatility);
    take("topic_volatility", s.topic_volatility);
    take("asset_volatility", s.asset_volatility);
    take("risk_free", s.risk_free);
    s.validate();
    return s;
}

/// Alphabetic pseudo-word: a topic prefix plus the index in base 26.
inline std::string make_word(const std::string& prefix, int index) {
    std::string w = prefix;
    for (int k = 0; k < 3; ++k) {
        w.push_back(static_cast<char>('a' + index % 26));
        index /= 26;
    }
    return w;
}

inline std::string topic_prefix(int topic) {
    return std::string("q") + static_cast<char>('a' + topic % 26) + static_cast<char>('a' + (topic / 26) % 26);
}

inline std::string asset_ticker(int topic, int company) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "T%dE%02d", topic, company);
    return buf;
}

struct Fixture {
    std::map<std::string, std::string> files; // file name -> content
};

/// All fixture files; byte-identical for identical specs.
inline Fixture generate(const SyntheticSpec& spec) {
    spec.validate();
    Fixture fx;
    auto num = [](double v) { return csv::format_number(v, 12); };

    // --- news ---
    {
        Rng rng(derive_seed(spec.seed, "news"));
        std::string news;
        int id = 0;
        const Date start = *Date::parse(spec.start_date);
        const int span = 7 * spec.total_weeks();
        for (int t = 0; t < spec.topics; ++t)
            for (int c = 0; c < spec.companies_per_topic; ++c)
                for (int a = 0; a < spec.articles_per_company; ++a) {
                    std::string text;
                    for (int w = 0; w < spec.words_per_article; ++w) {
                        std::string word;
                        if (spec.shared_fraction > 0.0 && uniform01(rng) < spec.shared_fraction)
                            word = make_word("zz", static_cast<int>(uniform_index(rng, std::uint64_t(spec.shared_vocabulary))));
                        else
                            word = make_word(topic_prefix(t),
                                             static_cast<int>(uniform_index(rng, std::uint64_t(spec.vocabulary_per_topic))));
                        if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
                        text += word;
                        text += (w + 1 == spec.words_per_article) ? "." : (w % 9 == 8 ? ", " : " ");
                    }
                    nlohmann::json j;
                    char aid[32];
                    std::snprintf(aid, sizeof aid, "n%06d", id++);
                    j["article_id"] = aid;
                    j["date"] = start.plus_days(static_cast<int>(uniform_index(rng, std::uint64_t(span)))).str();
                    j["company_tags"] = {asset_ticker(t, c)};
                    j["text"] = text;
                    news += j.dump() + "\n";
                }
        fx.files["news.jsonl"] = news;
    }

    // --- returns ---
    const int weeks = spec.total_weeks();
    const int n_assets = spec.assets();
    std::vector<Date> dates;
    for (int i = 0; i < weeks; ++i) dates.push_back(Date::parse(spec.start_date)->plus_days(7 * i));
    Rng rng(derive_seed(spec.seed, "returns"));
    std::vector<double> market(static_cast<std::size_t>(weeks));
    for (auto& m : market) m = 0.0015 + spec.market_volatility * normal(rng);
    std::vector<std::vector<double>> topic(static_cast<std::size_t>(spec.topics), std::vector<double>(market.size()));
    for (auto& f : topic)
        for (auto& v : f) v = spec.topic_volatility * normal(rng);
    std::vector<std::vector<double>> asset(static_cast<std::size_t>(n_assets), std::vector<double>(market.size()));
    std::vector<std::string> asset_ids;
    for (int t = 0; t < spec.topics; ++t)
        for (int c = 0; c < spec.companies_per_topic; ++c) {
            const auto a = static_cast<std::size_t>(t * spec.companies_per_topic + c);
            asset_ids.push_back(asset_ticker(t, c));
            const double beta = uniform(rng, 0.6, 1.4);
            for (std::size_t i = 0; i < market.size(); ++i)
                asset[a][i] = spec.risk_free + beta * (market[i] - spec.risk_free) + topic[std::size_t(t)][i] +
                              spec.asset_volatility * normal(rng);
        }

    std::vector<std::string> stock_ids;
    std::vector<std::vector<double>> stock(static_cast<std::size_t>(spec.stocks));
    std::string truth_support = "stock,support,coefficients\n";
    for (int s = 0; s < spec.stocks; ++s) {
        char sid[32];
        std::snprintf(sid, sizeof sid, "S%04d", s);
        stock_ids.emplace_back(sid);
        const int k = spec.fixed_support ? spec.support_max
                                         : (spec.support_max ? 1 + int(uniform_index(rng, std::uint64_t(spec.support_max))) : 0);
        std::vector<int> pool(static_cast<std::size_t>(n_assets));
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < k; ++i)
            std::swap(pool[std::size_t(i)], pool[std::size_t(i) + uniform_index(rng, std::uint64_t(n_assets - i))]);
        std::vector<int> sup(pool.begin(), pool.begin() + k);
        std::sort(sup.begin(), sup.end());
        std::vector<double> coef;
        for (int i = 0; i < k; ++i) coef.push_back((uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.5, 1.0));
        const double b = uniform(rng, 0.5, 1.5);
        std::vector<double> signal(market.size());
        for (std::size_t i = 0; i < market.size(); ++i) {
            signal[i] = b * (market[i] - spec.risk_free);
            for (int q = 0; q < k; ++q)
                signal[i] += coef[std::size_t(q)] * (asset[std::size_t(sup[std::size_t(q)])][i] - spec.risk_free);
        }
        double mean = 0.0, var = 0.0;
        for (double v : signal) mean += v / double(signal.size());
        for (double v : signal) var += (v - mean) * (v - mean) / double(signal.size());
        const double sd = spec.noise_ratio * std::sqrt(var);
        auto& col = stock[std::size_t(s)];
        for (std::size_t i = 0; i < market.size(); ++i) col.push_back(spec.risk_free + signal[i] + sd * normal(rng));
        std::string tick, cs;
        for (int q = 0; q < k; ++q) {
            tick += (q ? "|" : "") + asset_ids[std::size_t(sup[std::size_t(q)])];
            cs += (q ? "|" : "") + num(coef[std::size_t(q)]);
        }
        truth_support += std::string(sid) + "," + tick + "," + cs + "\n";
    }

    auto wide = [&](const std::vector<std::string>& ids, const std::vector<std::vector<double>>& cols) {
        std::string out = "date";
        for (const auto& id : ids) out += "," + id;
        out += "\n";
        for (std::size_t i = 0; i < dates.size(); ++i) {
            out += dates[i].str();
            for (const auto& c : cols) out += "," + num(c[i]);
            out += "\n";
        }
        return out;
    };
    fx.files["returns.csv"] = wide(stock_ids, stock);
    fx.files["etf_returns.csv"] = wide(asset_ids, asset);
    fx.files["market.csv"] = wide({"market"}, {market});
    fx.files["rf.csv"] = wide({"rf"}, {std::vector<double>(market.size(), spec.risk_free)});

    // factor file in percent: market excess plus four unrelated factors
    {
        Rng frng(derive_seed(spec.seed, "ff5"));
        std::string out = "date,Mkt-RF,SMB,HML,RMW,CMA,RF\n";
        for (std::size_t i = 0; i < dates.size(); ++i) {
            out += dates[i].str() + "," + num(100.0 * (market[i] - spec.risk_free));
            for (int k = 0; k < 4; ++k) out += "," + num(100.0 * 0.01 * normal(frng));
            out += "," + num(100.0 * spec.risk_free) + "\n";
        }
        fx.files["ff5.csv"] = out;
    }
    {
        Rng irng(derive_seed(spec.seed, "industry"));
        const auto& names = eval::industry_names();
        std::string out = "ticker,industry\n";
        for (const auto& id : stock_ids) out += id + "," + csv::quote(names[uniform_index(irng, names.size())]) + "\n";
        fx.files["industry.csv"] = out;
    }
    {
        std::string out = "ticker,topic\n";
        for (int t = 0; t < spec.topics; ++t)
            for (int c = 0; c < spec.companies_per_topic; ++c) out += asset_ticker(t, c) + "," + std::to_string(t) + "\n";
        fx.files["truth_clusters.csv"] = out;
    }
    fx.files["truth_support.csv"] = truth_support;

    nlohmann::ordered_json cfg;
    cfg["schema_version"] = 1;
    cfg["seed"] = spec.seed;
    cfg["workers"] = 1;
    cfg["paths"] = {{"news", "news.jsonl"},       {"news_format", "jsonl"},  {"returns", "returns.csv"},
                    {"basis_returns", "etf_returns.csv"}, {"market", "market.csv"}, {"risk_free", "rf.csv"},
                    {"ff5", "ff5.csv"},           {"industry", "industry.csv"}, {"output", "out"}};
    const int tl = spec.history_weeks + spec.train_weeks;
    cfg["splits"] = {{"train_end", dates[std::size_t(tl)].str()},
                     {"validation_end", dates[std::size_t(tl + spec.validation_weeks)].str()}};
    cfg["selection"] = {{"window", spec.train_weeks}};
    fx.files["config.json"] = cfg.dump(2) + "\n";
    return fx;
}

inline void write_fixture(const Fixture& fx, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : fx.files) csv::write_file((std::filesystem::path(dir) / name).string(), content);
}

} // namespace neus::synthetic
