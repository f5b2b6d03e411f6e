#pragma once

// News ingestion and per-company document construction.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "neus/csv.hpp"
#include "neus/date.hpp"
#include "neus/error.hpp"
#include "neus/random.hpp"

namespace neus::corpus {

using Stopwords = std::unordered_set<std::string>;

struct Article {
    std::string article_id;
    Date date;
    std::set<std::string> company_tags;
    std::string text;
};

struct CompanyDocument {
    std::string ticker;
    std::vector<std::string> tokens;
    std::vector<std::string> source_article_ids;

    friend bool operator==(const CompanyDocument&, const CompanyDocument&) = default;
};

struct CorpusConfig {
    int min_articles = 5;
    int n_sample = 5;
    std::uint64_t seed = 0;
    Stopwords stopwords;

    void validate() const {
        if (min_articles < 1 || n_sample < 1)
            fail(ErrorKind::config, "corpus: min_articles and n_sample must be positive");
        if (n_sample > min_articles)
            fail(ErrorKind::config, "corpus: n_sample must not exceed min_articles");
    }
};

enum class NewsFormat { jsonl, csv };

struct LoadResult {
    std::vector<Article> articles;
    std::vector<std::string> warnings;
    std::size_t malformed = 0;
};

namespace detail {

inline bool parse_record(const nlohmann::json& j, Article& out, std::string& why) {
    if (!j.is_object()) {
        why = "record is not an object";
        return false;
    }
    for (const char* key : {"article_id", "date", "company_tags", "text"}) {
        if (!j.contains(key)) {
            why = std::string("missing field '") + key + "'";
            return false;
        }
    }
    if (!j["article_id"].is_string() || !j["date"].is_string() || !j["text"].is_string() ||
        !j["company_tags"].is_array()) {
        why = "field has wrong type";
        return false;
    }
    auto date = Date::parse(j["date"].get<std::string>());
    if (!date) {
        why = "bad date '" + j["date"].get<std::string>() + "'";
        return false;
    }
    out.article_id = j["article_id"].get<std::string>();
    out.date = *date;
    out.text = j["text"].get<std::string>();
    out.company_tags.clear();
    for (const auto& tag : j["company_tags"]) {
        if (!tag.is_string()) {
            why = "company tag is not a string";
            return false;
        }
        out.company_tags.insert(tag.get<std::string>());
    }
    return true;
}

} // namespace detail

/// Reads articles in file order. Malformed records are skipped and reported.
inline LoadResult load_articles(const std::string& path, NewsFormat format) {
    LoadResult result;
    std::set<std::string> seen_ids;

    auto accept = [&](Article&& a, std::size_t line) {
        if (a.company_tags.empty()) {
            ++result.malformed;
            result.warnings.push_back("record " + std::to_string(line) + ": no company tags");
            return;
        }
        if (!seen_ids.insert(a.article_id).second) {
            ++result.malformed;
            result.warnings.push_back("record " + std::to_string(line) +
                                      ": duplicate article_id '" + a.article_id + "'");
            return;
        }
        result.articles.push_back(std::move(a));
    };

    const std::string content = csv::read_file(path);

    if (format == NewsFormat::jsonl) {
        std::size_t line_no = 0;
        std::size_t start = 0;
        while (start < content.size()) {
            auto end = content.find('\n', start);
            if (end == std::string::npos) end = content.size();
            ++line_no;
            const std::string_view line = csv::trim(std::string_view(content).substr(start, end - start));
            start = end + 1;
            if (line.empty()) continue;
            Article a;
            std::string why;
            const auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                why = "invalid JSON";
            } else if (detail::parse_record(j, a, why)) {
                accept(std::move(a), line_no);
                continue;
            }
            ++result.malformed;
            result.warnings.push_back("record " + std::to_string(line_no) + ": " + why);
        }
        return result;
    }

    const auto rows = csv::parse(content);
    if (rows.empty()) return result;
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[std::string(csv::trim(rows[0][i]))] = i;
    for (const char* key : {"article_id", "date", "company_tags", "text"}) {
        if (!col.contains(key))
            fail(ErrorKind::schema, path + ": CSV header lacks column '" + key + "'");
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        auto field = [&](const char* key) -> const std::string* {
            const auto idx = col[key];
            return idx < row.size() ? &row[idx] : nullptr;
        };
        const auto* id = field("article_id");
        const auto* date = field("date");
        const auto* tags = field("company_tags");
        const auto* text = field("text");
        std::string why;
        std::optional<Date> parsed;
        if (!id || !date || !tags || !text) {
            why = "missing field";
        } else if (!(parsed = Date::parse(*date))) {
            why = "bad date '" + *date + "'";
        }
        if (!why.empty()) {
            ++result.malformed;
            result.warnings.push_back("record " + std::to_string(r + 1) + ": " + why);
            continue;
        }
        Article a{*id, *parsed, {}, *text};
        std::string_view rest = *tags;
        while (!rest.empty()) {
            const auto bar = rest.find('|');
            const auto tag = csv::trim(rest.substr(0, bar));
            if (!tag.empty()) a.company_tags.emplace(tag);
            if (bar == std::string_view::npos) break;
            rest.remove_prefix(bar + 1);
        }
        accept(std::move(a), r + 1);
    }
    return result;
}

/// One token per line; blank lines and `#` comments ignored; lowercased.
inline Stopwords load_stopwords(const std::string& path) {
    Stopwords words;
    const std::string content = csv::read_file(path);
    std::size_t start = 0;
    while (start < content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string::npos) end = content.size();
        const auto line = csv::trim(std::string_view(content).substr(start, end - start));
        start = end + 1;
        if (line.empty() || line.front() == '#') continue;
        std::string w(line);
        std::transform(w.begin(), w.end(), w.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        words.insert(std::move(w));
    }
    return words;
}

namespace detail {

// Decodes one UTF-8 code point starting at `i`; invalid bytes decode as U+FFFD.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = 0xFFFD;
    if (b0 < 0x80) {
        cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + len > s.size()) {
        i = s.size();
        return 0xFFFD;
    }
    for (int k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            i += k;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += len;
    return cp;
}

// Word characters: ASCII letters, plus non-ASCII letters and combining marks.
// Non-ASCII punctuation, symbols and spaces separate words.
inline bool is_word_char(char32_t cp) {
    if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    if (cp <= 0xBF || cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF20) return false;
    if (cp == 0xFFFD || (cp >= 0xE000 && cp <= 0xF8FF)) return false;
    return true;
}

} // namespace detail

/// Lowercases, splits on non-alphabetic characters, drops tokens containing
/// non-ASCII letters, then removes stopwords. Word order is preserved.
inline std::vector<std::string> preprocess(std::string_view text, const Stopwords& stopwords) {
    std::vector<std::string> tokens;
    std::string current;
    bool ascii_only = true;
    auto flush = [&] {
        if (!current.empty() && ascii_only && !stopwords.contains(current))
            tokens.push_back(current);
        current.clear();
        ascii_only = true;
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = detail::next_code_point(text, i);
        if (!detail::is_word_char(cp)) {
            flush();
        } else if (cp < 0x80) {
            current.push_back(static_cast<char>(cp >= 'A' && cp <= 'Z' ? cp + ('a' - 'A') : cp));
        } else {
            ascii_only = false;
            current.push_back('?');
        }
    }
    flush();
    return tokens;
}

struct DocumentSelection {
    std::vector<CompanyDocument> documents; // sorted by ticker
    std::vector<std::pair<std::string, std::size_t>> excluded; // ticker, article count
};

/// Builds one document per ticker with at least `min_articles` tagged articles.
/// Each company draws `n_sample` articles without replacement from its own
/// stream seeded by (seed, ticker); text is concatenated in draw order.
inline DocumentSelection select_company_documents(const std::vector<Article>& articles,
                                                  const std::set<std::string>& tickers,
                                                  const CorpusConfig& cfg) {
    cfg.validate();
    if (tickers.empty()) fail(ErrorKind::config, "corpus: ticker set is empty");

    std::map<std::string, std::vector<std::size_t>> by_ticker;
    for (const auto& t : tickers) by_ticker[t];
    for (std::size_t i = 0; i < articles.size(); ++i) {
        for (const auto& tag : articles[i].company_tags) {
            auto it = by_ticker.find(tag);
            if (it != by_ticker.end()) it->second.push_back(i);
        }
    }

    DocumentSelection out;
    for (auto& [ticker, pool] : by_ticker) {
        if (pool.size() < static_cast<std::size_t>(cfg.min_articles)) {
            out.excluded.emplace_back(ticker, pool.size());
            continue;
        }
        Rng rng(derive_seed(cfg.seed, ticker));
        const auto n = static_cast<std::size_t>(cfg.n_sample);
        for (std::size_t k = 0; k < n; ++k) {
            const auto j = k + uniform_index(rng, pool.size() - k);
            std::swap(pool[k], pool[j]);
        }
        CompanyDocument doc{ticker, {}, {}};
        std::string joined;
        for (std::size_t k = 0; k < n; ++k) {
            const auto& a = articles[pool[k]];
            doc.source_article_ids.push_back(a.article_id);
            if (!joined.empty()) joined.push_back('\n');
            joined += a.text;
        }
        doc.tokens = preprocess(joined, cfg.stopwords);
        out.documents.push_back(std::move(doc));
    }
    return out;
}

/// Documents as JSONL: {"ticker", "source_article_ids", "tokens"}.
inline std::string documents_to_jsonl(const std::vector<CompanyDocument>& docs) {
    std::string out;
    for (const auto& d : docs) {
        nlohmann::json j;
        j["ticker"] = d.ticker;
        j["source_article_ids"] = d.source_article_ids;
        j["tokens"] = d.tokens;
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

inline std::vector<CompanyDocument> documents_from_jsonl(std::string_view content) {
    std::vector<CompanyDocument> docs;
    std::size_t start = 0;
    while (start < content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string_view::npos) end = content.size();
        const auto line = csv::trim(content.substr(start, end - start));
        start = end + 1;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("ticker") || !j.contains("tokens"))
            fail(ErrorKind::schema, "documents: malformed record");
        CompanyDocument d;
        d.ticker = j["ticker"].get<std::string>();
        d.tokens = j["tokens"].get<std::vector<std::string>>();
        if (j.contains("source_article_ids"))
            d.source_article_ids = j["source_article_ids"].get<std::vector<std::string>>();
        docs.push_back(std::move(d));
    }
    return docs;
}

} // namespace neus::corpus
