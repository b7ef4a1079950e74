#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sepseq/config.hpp"
#include "sepseq/errors.hpp"
#include "sepseq/pipeline.hpp"
#include "sepseq/probe.hpp"

namespace sepseq {
namespace {

namespace fs = std::filesystem;

const fs::path kSource = SEPSEQ_SOURCE_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("sepseq_pipeline_" + name);
    fs::remove_all(dir);
    return dir;
}

RunConfig counting_config(const fs::path& out, std::string mock) {
    RunConfig c;
    c.endpoint.mock = std::move(mock);
    c.endpoint.model = "mock";
    c.modes = {FormatMode::vanilla, FormatMode::sepseq};
    c.runs = 2;
    c.concurrency = 4;
    DatasetSpec d;
    d.kind = DatasetSpec::Kind::generate;
    d.task = TaskType::counting;
    d.gen.task = TaskType::counting;
    d.gen.bins = {LengthBin::S, LengthBin::M};
    d.gen.per_bin = 10;
    d.gen.rng_seed = 3;
    c.datasets = {d};
    c.output_dir = out;
    return c;
}

TEST(Sha256Test, KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ConfigTest, ShippedConfigsLoad) {
    for (const char* name : {"mock_counting.json", "mock_real.json", "full_grid.json"}) {
        const auto c = load_config(kSource / "configs" / name);
        EXPECT_FALSE(c.datasets.empty()) << name;
        EXPECT_NO_THROW(c.validate(false)) << name;
    }
    const auto c = load_config(kSource / "configs" / "mock_counting.json");
    EXPECT_EQ(c.endpoint.mock.value_or(""), "oracle?error=0.2");
    EXPECT_EQ(c.modes.size(), 2u);
    // Relative paths resolve against the config file's directory.
    EXPECT_TRUE(c.output_dir.is_absolute());
}

TEST(ConfigTest, RejectsUnknownKeysAndBadValues) {
    nlohmann::ordered_json j = {{"endpoint", {{"mock", "oracle"}}}, {"rnus", 3}};
    EXPECT_THROW(config_from_json(j), UsageError);
    j = {{"endpoint", {{"mock", "oracle"}, {"moedl", "x"}}}};
    EXPECT_THROW(config_from_json(j), UsageError);
    j = {{"endpoint", {{"mock", "oracle"}}}, {"strategy", "tree"}};
    EXPECT_THROW(config_from_json(j), UsageError);

    RunConfig pot;
    pot.endpoint.mock = "oracle";
    pot.strategies = {PromptStrategy::pot};
    EXPECT_THROW(pot.validate(), UsageError);  // no interpreter configured
}

TEST(ConfigTest, JsonRoundTripAndStrategyFlag) {
    const auto c = load_config(kSource / "configs" / "mock_real.json");
    const auto j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)).dump(), j.dump());

    RunConfig r;
    apply_strategy_flag(r, "sepseq");
    EXPECT_EQ(r.strategies, std::vector<PromptStrategy>{PromptStrategy::vanilla});
    EXPECT_EQ(r.modes, std::vector<FormatMode>{FormatMode::sepseq});
    apply_strategy_flag(r, "vanilla,sepseq");
    EXPECT_EQ(r.modes.size(), 2u);
    apply_strategy_flag(r, "cot,pot");
    EXPECT_EQ(r.strategies.size(), 2u);
}

TEST(PipelineTest, RunWritesDirectoryAndNeverTheKey) {
    const auto out = scratch("run");
    ::setenv("LLM_API_KEY", "sk-never-write-me-987", 1);
    const auto outcome = run_experiment(counting_config(out, "oracle?error=0.2"));
    ::unsetenv("LLM_API_KEY");

    EXPECT_EQ(outcome.graded.size(), 20u * 2 * 2);
    for (const char* f : {"config.json", "corpus.jsonl", "corpus.sha256", "transcripts.jsonl", "graded.jsonl",
                          "report.md", "report.csv", "report.json", "plots/accuracy_by_task.json"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
        if (!entry.is_regular_file()) continue;
        EXPECT_EQ(slurp(entry.path()).find("sk-never-write-me-987"), std::string::npos) << entry.path();
    }
    EXPECT_NE(slurp(out / "config.json").find("LLM_API_KEY"), std::string::npos);
    EXPECT_EQ(slurp(out / "corpus.sha256").substr(0, 64), sha256_hex(slurp(out / "corpus.jsonl")));
    fs::remove_all(out);
}

TEST(PipelineTest, RegradeIsByteIdentical) {
    const auto out = scratch("regrade");
    run_experiment(counting_config(out, "null?rate=0.3"));
    const auto original_graded = slurp(out / "graded.jsonl");
    const auto original_md = slurp(out / "report.md");
    const auto original_json = slurp(out / "report.json");

    const auto regraded = grade_run_dir(out);
    const auto re = out / "re";
    fs::create_directories(re);
    write_records(re / "graded.jsonl", regraded);
    EXPECT_EQ(slurp(re / "graded.jsonl"), original_graded);

    const ReportFormat formats[] = {ReportFormat::md, ReportFormat::json};
    report_from_graded(re / "graded.jsonl", formats, re);
    EXPECT_EQ(slurp(re / "report.md"), original_md);
    EXPECT_EQ(slurp(re / "report.json"), original_json);

    // A modified corpus no longer matches its digest.
    std::ofstream(out / "corpus.jsonl", std::ios::app) << "\n";
    EXPECT_THROW(grade_run_dir(out), DataError);
    fs::remove_all(out);
}

TEST(PipelineTest, ReportRefusesUngradedRecords) {
    const auto dir = scratch("ungraded");
    fs::create_directories(dir);
    RunRecord r;
    r.sample_id = "x";
    r.response = "Answer: 1";
    write_records(dir / "graded.jsonl", {r});
    const ReportFormat formats[] = {ReportFormat::md};
    EXPECT_THROW(report_from_graded(dir / "graded.jsonl", formats, dir), DataError);
    fs::remove_all(dir);
}

TEST(PipelineTest, ProgramOfThoughtExecutesAndRegradesWithoutRerunning) {
    const auto out = scratch("pot");
    auto c = counting_config(out, "segment?span=8");
    c.strategies = {PromptStrategy::pot};
    c.modes = {FormatMode::vanilla};
    c.runs = 1;
    c.exec.command = {"python3", "-I"};
    const auto outcome = run_experiment(c);
    ASSERT_EQ(outcome.graded.size(), 20u);
    for (const auto& r : outcome.graded) {
        ASSERT_TRUE(r.program_output) << r.sample_id;
        EXPECT_TRUE(r.grade->correct) << r.sample_id;
    }
    EXPECT_TRUE(fs::exists(out / "exec.json"));

    // With no interpreter on PATH, re-grading must still reproduce the verdicts.
    const std::string path = std::getenv("PATH") ? std::getenv("PATH") : "";
    ::setenv("PATH", "/nonexistent", 1);
    const auto regraded = grade_run_dir(out);
    ::setenv("PATH", path.c_str(), 1);
    ASSERT_EQ(regraded.size(), outcome.graded.size());
    for (std::size_t i = 0; i < regraded.size(); ++i) {
        EXPECT_EQ(regraded[i].grade->correct, outcome.graded[i].grade->correct);
    }
    fs::remove_all(out);
}

TEST(PipelineTest, DuplicateIdsAreRejected) {
    auto c = counting_config(scratch("dup"), "oracle");
    c.datasets.push_back(c.datasets[0]);
    EXPECT_THROW(build_corpus(c), UsageError);
}

TEST(PipelineTest, SweepOverK) {
    const auto out = scratch("sweep");
    auto c = counting_config(out, "segment?span=32");
    c.runs = 1;
    const auto points = run_sweep(c, SweepParam::k, {"4", "64"});
    ASSERT_EQ(points.size(), 2u);
    EXPECT_GT(points[0].accuracy_mean, points[1].accuracy_mean);
    EXPECT_TRUE(fs::exists(out / "sweep.csv"));
    EXPECT_TRUE(fs::exists(out / "plots" / "sweep_k.json"));
    EXPECT_THROW(parse_sweep_param("temperature"), UsageError);
    fs::remove_all(out);
}

TEST(ProbeTest, FixtureRoundTripAndSummary) {
    const auto stats = load_attention_stats(kSource / "tests" / "fixtures" / "probe_stats.json");
    EXPECT_EQ(stats.per_layer.size(), 4u);
    EXPECT_EQ(parse_attention_stats(to_json(stats)), stats);
    const auto sum = summarize(stats);
    EXPECT_EQ(sum.layers, 4u);
    EXPECT_EQ(sum.layers_sep_above_sp, 4u);

    const auto out = scratch("probe");
    write_probe_report(stats, out);
    for (const char* f : {"plots/layers_sep_vs_delim.json", "plots/heads_sep_vs_delim.json",
                          "plots/cross_segment_by_layer.json", "summary.json", "probe.md"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    const auto fig = nlohmann::json::parse(slurp(out / "plots" / "layers_sep_vs_delim.json"));
    EXPECT_EQ(fig["x"].size(), 4u);
    fs::remove_all(out);
}

TEST(ProbeTest, RejectsMalformedStats) {
    const auto good = nlohmann::ordered_json::parse(slurp(kSource / "tests" / "fixtures" / "probe_stats.json"));
    auto mutate = [&](auto fn) {
        auto j = good;
        fn(j);
        return j;
    };
    EXPECT_THROW(parse_attention_stats(mutate([](auto& j) { j["schema_version"] = 2; })), DataError);
    EXPECT_THROW(parse_attention_stats(mutate([](auto& j) { j["extra"] = 1; })), DataError);
    EXPECT_THROW(parse_attention_stats(mutate([](auto& j) { j["per_layer"][0]["mean_attn_to_sep"] = 1.5; })),
                 DataError);
    EXPECT_THROW(parse_attention_stats(mutate([](auto& j) { j["per_layer"][0]["std_sp"] = -0.1; })), DataError);
    EXPECT_THROW(parse_attention_stats(mutate([](auto& j) { j["per_layer"][1]["layer"] = 0; })), DataError);
    EXPECT_THROW(parse_attention_stats(mutate([](auto& j) { j["spec"]["num_layers"] = 5; })), DataError);
    EXPECT_THROW(parse_attention_stats(mutate([](auto& j) { j.erase("per_head"); })), DataError);
}

}  // namespace
}  // namespace sepseq
