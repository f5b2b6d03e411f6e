#include <gtest/gtest.h>

#include <filesystem>

#include "neus/corpus.hpp"

using namespace neus;
using namespace neus::corpus;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / ("neus_test_" + name);
    csv::write_file(path.string(), content);
    return path.string();
}

Article article(const std::string& id, const std::string& ticker, const std::string& text) {
    return Article{id, *Date::parse("2019-05-01"), {ticker}, text};
}

} // namespace

TEST(LoadArticles, JsonlRecords) {
    auto one = write_temp("one.jsonl",
                          R"({"article_id":"a1","date":"2019-01-02","company_tags":["SPY"],"text":"Hello"})" "\n");
    const auto r = load_articles(one, NewsFormat::jsonl);
    ASSERT_EQ(r.articles.size(), 1u);
    EXPECT_EQ(r.articles[0].article_id, "a1");
    EXPECT_EQ(r.articles[0].date.str(), "2019-01-02");
    EXPECT_TRUE(r.warnings.empty());

    const auto empty = load_articles(write_temp("empty.jsonl", ""), NewsFormat::jsonl);
    EXPECT_TRUE(empty.articles.empty());
    EXPECT_TRUE(empty.warnings.empty());

    const auto three = load_articles(
        write_temp("three.jsonl",
                   R"({"article_id":"a1","date":"2019-01-02","company_tags":["SPY"],"text":"x"})" "\n"
                   R"({"article_id":"a2","date":"2019-01-03","company_tags":["QQQ"]})" "\n"
                   R"({"article_id":"a3","date":"2019-01-04","company_tags":["SPY","QQQ"],"text":"y"})" "\n"),
        NewsFormat::jsonl);
    EXPECT_EQ(three.articles.size(), 2u);
    EXPECT_EQ(three.warnings.size(), 1u);
    EXPECT_EQ(three.malformed, 1u);
}

TEST(LoadArticles, CsvWithTagList) {
    const auto r = load_articles(write_temp("news.csv", "article_id,date,company_tags,text\n"
                                                        "a1,2019-01-02,SPY|QQQ,\"Rates, up\"\n"
                                                        "a2,2019-13-02,SPY,bad date\n"),
                                 NewsFormat::csv);
    ASSERT_EQ(r.articles.size(), 1u);
    EXPECT_EQ(r.articles[0].company_tags, (std::set<std::string>{"QQQ", "SPY"}));
    EXPECT_EQ(r.articles[0].text, "Rates, up");
    EXPECT_EQ(r.warnings.size(), 1u);
    EXPECT_THROW(load_articles(write_temp("bad.csv", "id,text\n"), NewsFormat::csv), Error);
}

TEST(LoadArticles, MissingFileIsIoError) {
    try {
        load_articles("/nonexistent/news.jsonl", NewsFormat::jsonl);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}

TEST(Preprocess, Examples) {
    EXPECT_EQ(preprocess("The Fed raised RATES 3 times.", {"the"}),
              (std::vector<std::string>{"fed", "raised", "rates", "times"}));
    EXPECT_TRUE(preprocess("", {}).empty());
    EXPECT_TRUE(preprocess("a a a", {"a"}).empty());
    EXPECT_EQ(preprocess("Q3's 10-K: caf\xc3\xa9 na\xc3\xafve rally\xe2\x80\x94stocks", {}),
              (std::vector<std::string>{"q", "s", "k", "rally", "stocks"}));
}

TEST(Stopwords, ShippedListLoads) {
    const auto sw = load_stopwords(std::string(NEUS_DATA_DIR) + "/stopwords.txt");
    EXPECT_TRUE(sw.contains("the"));
    EXPECT_TRUE(sw.contains("and"));
    EXPECT_FALSE(sw.contains("#"));
    EXPECT_FALSE(sw.contains("fed"));
}

TEST(SelectDocuments, ThresholdAndDeterminism) {
    std::vector<Article> arts;
    for (int i = 0; i < 4; ++i) arts.push_back(article("x" + std::to_string(i), "XLE", "oil barrel"));
    for (int i = 0; i < 5; ++i) arts.push_back(article("t" + std::to_string(i), "XLK", "chip " + std::to_string(i)));
    for (int i = 0; i < 9; ++i) arts.push_back(article("f" + std::to_string(i), "XLF", "bank loan w" + std::string(1, char('a' + i))));
    CorpusConfig cfg;
    cfg.seed = 3;
    const auto sel = select_company_documents(arts, {"XLE", "XLK", "XLF"}, cfg);
    ASSERT_EQ(sel.documents.size(), 2u);
    EXPECT_EQ(sel.documents[0].ticker, "XLF");
    EXPECT_EQ(sel.documents[1].ticker, "XLK");
    ASSERT_EQ(sel.excluded.size(), 1u);
    EXPECT_EQ(sel.excluded[0], (std::pair<std::string, std::size_t>{"XLE", 4}));

    auto ids = sel.documents[1].source_article_ids;
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(ids, (std::vector<std::string>{"t0", "t1", "t2", "t3", "t4"}));
    EXPECT_EQ(sel.documents[0].source_article_ids.size(), 5u);

    const auto again = select_company_documents(arts, {"XLE", "XLK", "XLF"}, cfg);
    EXPECT_EQ(again.documents, sel.documents);
    // independent of which other companies are present
    const auto alone = select_company_documents(arts, {"XLF"}, cfg);
    EXPECT_EQ(alone.documents[0], sel.documents[0]);
}

TEST(SelectDocuments, ConfigValidation) {
    CorpusConfig cfg;
    cfg.n_sample = 6;
    EXPECT_THROW(select_company_documents({}, {"A"}, cfg), Error);
}

TEST(Documents, JsonlRoundTrip) {
    const std::vector<CompanyDocument> docs{{"A", {"x", "y"}, {"1", "2"}}, {"B", {}, {"3"}}};
    EXPECT_EQ(documents_from_jsonl(documents_to_jsonl(docs)), docs);
}
