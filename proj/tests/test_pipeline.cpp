#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "neus/pipeline.hpp"
#include "neus/synthetic.hpp"

namespace fs = std::filesystem;
using neus::Error;
using neus::ErrorKind;
using namespace neus::pipeline;

namespace {

neus::synthetic::SyntheticSpec small_spec(std::uint64_t seed = 3) {
    neus::synthetic::SyntheticSpec s;
    s.seed = seed;
    s.topics = 2;
    s.companies_per_topic = 5;
    s.vocabulary_per_topic = 30;
    s.articles_per_company = 6;
    s.words_per_article = 30;
    s.stocks = 5;
    s.support_max = 2;
    s.history_weeks = 1;
    s.train_weeks = 60;
    s.validation_weeks = 20;
    s.test_weeks = 20;
    return s;
}

class PipelineDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("neus_pipeline_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
                std::to_string(::getpid()));
        fs::remove_all(dir_);
        neus::synthetic::write_fixture(neus::synthetic::generate(small_spec()), dir_.string());
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    PipelineConfig config() const { return load_config(path("config.json")); }

    fs::path dir_;
};

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no neus::Error thrown";
    return ErrorKind::io;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

void write(const std::string& p, const std::string& content) { neus::csv::write_file(p, content); }

} // namespace

TEST(Synthetic, DeterministicAndSeedSensitive) {
    const auto a = neus::synthetic::generate(small_spec(3));
    const auto b = neus::synthetic::generate(small_spec(3));
    const auto c = neus::synthetic::generate(small_spec(4));
    EXPECT_EQ(a.files, b.files);
    EXPECT_NE(a.files.at("returns.csv"), c.files.at("returns.csv"));
    EXPECT_NE(a.files.at("news.jsonl"), c.files.at("news.jsonl"));
}

TEST(Synthetic, PlantedSupportWithinBounds) {
    const auto fx = neus::synthetic::generate(small_spec());
    const auto rows = neus::csv::parse(fx.files.at("truth_support.csv"));
    ASSERT_EQ(rows.size(), 6u);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& t = rows[r][1];
        const auto k = t.empty() ? 0 : 1 + std::count(t.begin(), t.end(), '|');
        EXPECT_GE(k, 1);
        EXPECT_LE(k, 2);
    }
}

TEST(Synthetic, RejectsBadSpecs) {
    EXPECT_EQ(kind_of([] { neus::synthetic::spec_from_json({{"topcs", 3}}); }), ErrorKind::config);
    EXPECT_NE(message_of([] { neus::synthetic::spec_from_json({{"topcs", 3}}); }).find("topcs"), std::string::npos);
    EXPECT_EQ(kind_of([] { neus::synthetic::spec_from_json({{"topics", 1}, {"companies_per_topic", 2}, {"support_max", 3}}); }),
              ErrorKind::config);
    EXPECT_EQ(kind_of([] { neus::synthetic::spec_from_json({{"stocks", "many"}}); }), ErrorKind::config);
}

TEST_F(PipelineDir, ConfigResolvesRelativePaths) {
    const auto cfg = config();
    EXPECT_EQ(fs::path(cfg.paths.news), dir_ / "news.jsonl");
    EXPECT_EQ(fs::path(cfg.paths.output), dir_ / "out");
    EXPECT_EQ(cfg.selection.window, 60);
    EXPECT_EQ(cfg.seed, 3u);
}

TEST_F(PipelineDir, ConfigIsStrict) {
    auto j = nlohmann::json::parse(neus::csv::read_file(path("config.json")));
    auto bad = j;
    bad["embedding"] = {{"vectr_size", 10}};
    EXPECT_NE(message_of([&] { parse_config(bad, dir_.string()); }).find("vectr_size"), std::string::npos);
    bad = j;
    bad["schema_version"] = 2;
    EXPECT_EQ(kind_of([&] { parse_config(bad, dir_.string()); }), ErrorKind::config);
    bad = j;
    bad["selection"]["a"] = 0.5;
    EXPECT_EQ(kind_of([&] { parse_config(bad, dir_.string()); }), ErrorKind::config);
    write(path("broken.json"), "{ not json");
    EXPECT_EQ(kind_of([&] { load_config(path("broken.json")); }), ErrorKind::config);
    EXPECT_EQ(kind_of([&] { load_config(path("missing.json")); }), ErrorKind::io);
}

TEST_F(PipelineDir, EnvironmentOverrides) {
    ::setenv("NEUS_SEED", "99", 1);
    ::setenv("NEUS_WORKERS", "3", 1);
    const auto cfg = config();
    ::unsetenv("NEUS_SEED");
    ::unsetenv("NEUS_WORKERS");
    EXPECT_EQ(cfg.seed, 99u);
    EXPECT_EQ(cfg.embedding.seed, 99u);
    EXPECT_EQ(cfg.workers, 3);
    EXPECT_EQ(cfg.selection.workers, 3);
    ::setenv("NEUS_WORKERS", "zero", 1);
    EXPECT_EQ(kind_of([&] { config(); }), ErrorKind::config);
    ::unsetenv("NEUS_WORKERS");
}

TEST_F(PipelineDir, SecondRunIsCacheHit) {
    Pipeline p(config());
    EXPECT_FALSE(p.run("corpus").cache_hit);
    EXPECT_TRUE(p.run("corpus").cache_hit);
    Pipeline q(config());
    EXPECT_TRUE(q.run("corpus").cache_hit);
}

TEST_F(PipelineDir, InputChangeInvalidatesCache) {
    Pipeline p(config());
    p.run("corpus");
    std::ofstream(path("news.jsonl"), std::ios::app)
        << R"({"article_id":"extra","date":"2013-01-04","company_tags":["T0E00"],"text":"Qaabaa qaacaa."})" << "\n";
    Pipeline q(config());
    EXPECT_FALSE(q.run("corpus").cache_hit);
}

TEST_F(PipelineDir, TamperedOutputIsRecomputed) {
    Pipeline p(config());
    const auto art = p.run("corpus");
    const auto doc = p.output_path("documents.jsonl");
    const auto original = neus::csv::read_file(doc);
    write(doc, "tampered\n");
    EXPECT_FALSE(p.run("corpus").cache_hit);
    EXPECT_EQ(neus::csv::read_file(doc), original);
}

TEST_F(PipelineDir, MissingUpstreamIsDependencyError) {
    Pipeline p(config());
    EXPECT_EQ(kind_of([&] { p.run("select"); }), ErrorKind::dependency);
    EXPECT_NE(message_of([&] { p.run("select"); }).find("cluster"), std::string::npos);
    EXPECT_EQ(kind_of([&] { p.run("embed"); }), ErrorKind::dependency);
    EXPECT_EQ(kind_of([&] { p.run("bogus"); }), ErrorKind::config);
}

TEST_F(PipelineDir, RunAllEmitsReportsAndCaches) {
    Pipeline p(config());
    const auto first = p.run_all();
    ASSERT_EQ(first.size(), stage_names().size());
    for (const auto& a : first) EXPECT_FALSE(a.cache_hit) << a.stage;
    for (const auto* name : {"intercept_report.csv", "comparison_report.csv", "industry_report.csv", "ftest_report.csv"})
        EXPECT_TRUE(fs::exists(p.output_path(name))) << name;
    for (const auto& a : p.run_all()) EXPECT_TRUE(a.cache_hit) << a.stage;

    const auto cmp = neus::csv::read_file(p.output_path("comparison_report.csv"));
    EXPECT_NE(cmp.find("in_sample_explanation"), std::string::npos);
    EXPECT_NE(cmp.find("out_of_sample_prediction"), std::string::npos);
    const auto basis = neus::csv::parse(neus::csv::read_file(p.output_path("basis.csv")));
    EXPECT_EQ(basis.size(), 12u); // comment, header, 10 assets
}

TEST_F(PipelineDir, ConfigChangeOnlyInvalidatesDownstream) {
    auto cfg = config();
    Pipeline(cfg).run_all();
    cfg.selection.a = 4.0;
    Pipeline p(cfg);
    for (const auto& a : p.run_all()) {
        const bool upstream = a.stage == "corpus" || a.stage == "embed" || a.stage == "project" || a.stage == "cluster";
        if (upstream || a.stage == "select") EXPECT_EQ(a.cache_hit, upstream) << a.stage;
    }
    // downstream stages key on upstream content, so identical evaluation records still hit
    const auto eval_hit = p.run("evaluate").cache_hit;
    EXPECT_TRUE(eval_hit);
}

TEST_F(PipelineDir, RunsAreByteIdentical) {
    auto cfg = config();
    Pipeline(cfg).run_all();
    auto cfg2 = cfg;
    cfg2.paths.output = path("out2");
    Pipeline(cfg2).run_all();
    for (const auto& entry : fs::directory_iterator(cfg.paths.output)) {
        const auto name = entry.path().filename().string();
        if (name == "manifest.json") continue;
        EXPECT_EQ(neus::csv::read_file(entry.path().string()),
                  neus::csv::read_file((fs::path(cfg2.paths.output) / name).string()))
            << name;
    }
}

TEST_F(PipelineDir, ReportRebuildsFromEvaluation) {
    auto cfg = config();
    Pipeline p(cfg);
    p.run_all();
    const auto before = neus::csv::read_file(p.output_path("ftest_report.csv"));
    fs::remove(p.output_path("ftest_report.csv"));
    const auto written = report_from_directory(cfg.paths.output, cfg.level);
    EXPECT_EQ(written.size(), 4u);
    EXPECT_EQ(neus::csv::read_file(p.output_path("ftest_report.csv")), before);
    EXPECT_EQ(kind_of([&] { report_from_directory(path("nowhere")); }), ErrorKind::dependency);
}

TEST_F(PipelineDir, WideTableValidation) {
    write(path("w.csv"), "date,A\n2013-01-11,0.1\n2013-01-04,0.2\n");
    EXPECT_EQ(kind_of([&] { read_wide(path("w.csv")); }), ErrorKind::schema);
    write(path("w.csv"), "day,A\n2013-01-04,0.1\n");
    EXPECT_EQ(kind_of([&] { read_wide(path("w.csv")); }), ErrorKind::schema);
    write(path("w.csv"), "date,A\n2013-01-04,abc\n");
    EXPECT_EQ(kind_of([&] { read_wide(path("w.csv")); }), ErrorKind::schema);
    write(path("w.csv"), "date,A\n2013-01-04,NA\n2013-01-11,0.5\n");
    const auto t = read_wide(path("w.csv"), 0.01);
    EXPECT_TRUE(std::isnan(t.values(0, 0)));
    EXPECT_DOUBLE_EQ(t.values(1, 0), 0.005);

    const std::vector<neus::Date> grid{*neus::Date::parse("2013-01-04"), *neus::Date::parse("2013-01-18")};
    const auto msg = message_of([&] { align_column(t, 0, grid, "market"); });
    EXPECT_NE(msg.find("market"), std::string::npos);
    EXPECT_NE(msg.find("2013-01-18"), std::string::npos);
}

TEST_F(PipelineDir, MissingMarketWeekIsDataError) {
    auto text = neus::csv::read_file(path("market.csv"));
    const auto cut = text.find('\n', text.find('\n') + 1);
    write(path("market.csv"), text.substr(0, text.find('\n') + 1) + text.substr(cut + 1));
    Pipeline p(config());
    p.run("corpus");
    p.run("embed");
    p.run("project");
    p.run("cluster");
    EXPECT_EQ(kind_of([&] { p.run("select"); }), ErrorKind::data);
}

#ifdef NEUS_CLI_PATH
namespace {

struct CliResult {
    int status = 0;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const auto cmd = std::string(NEUS_CLI_PATH) + " " + args + " 2>&1";
    CliResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
    const int st = ::pclose(pipe);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

} // namespace

TEST_F(PipelineDir, CliErrorsAreSingleLines) {
    auto r = run_cli("run corpus --config " + path("missing.json"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(r.output.rfind("error: io_error: ", 0), 0u) << r.output;
    EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1);

    r = run_cli("run select --config " + path("config.json"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(r.output.rfind("error: dependency_error: ", 0), 0u) << r.output;

    r = run_cli("run nonsense --config " + path("config.json"));
    EXPECT_EQ(r.output.rfind("error: config_error: ", 0), 0u) << r.output;

    r = run_cli("frobnicate");
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(r.output.rfind("error: usage_error: ", 0), 0u) << r.output;
}

TEST_F(PipelineDir, CliSynthAndRun) {
    write(path("spec.json"), R"({"seed": 3, "topics": 2, "companies_per_topic": 5, "vocabulary_per_topic": 30,
        "articles_per_company": 6, "words_per_article": 30, "stocks": 5, "support_max": 2,
        "history_weeks": 1, "train_weeks": 60, "validation_weeks": 20, "test_weeks": 20})");
    auto r = run_cli("synth --spec " + path("spec.json") + " --out " + path("cli"));
    ASSERT_EQ(r.status, 0) << r.output;
    for (const auto* name : {"news.jsonl", "returns.csv", "config.json", "truth_support.csv"})
        EXPECT_EQ(neus::csv::read_file((dir_ / "cli" / name).string()), neus::csv::read_file(path(name))) << name;

    r = run_cli("run corpus --config " + path("cli/config.json"));
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_NE(r.output.find("corpus: computed"), std::string::npos);
    r = run_cli("run corpus --config " + path("cli/config.json"));
    EXPECT_NE(r.output.find("corpus: cached"), std::string::npos);

    write(path("bad_spec.json"), R"({"seed": 3, "colour": "red"})");
    r = run_cli("synth --spec " + path("bad_spec.json") + " --out " + path("cli2"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(r.output.rfind("error: config_error: ", 0), 0u) << r.output;
}
#endif
