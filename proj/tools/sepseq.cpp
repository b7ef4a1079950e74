// sepseq: command-line entry point for corpus generation, model runs,
// grading, reporting, sweeps and the attention-math / probe reports.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "sepseq/config.hpp"
#include "sepseq/datagen.hpp"
#include "sepseq/errors.hpp"
#include "sepseq/metrics.hpp"
#include "sepseq/pipeline.hpp"
#include "sepseq/probe.hpp"

using namespace sepseq;

namespace {

struct RunFlags {
    std::string config;
    std::optional<std::size_t> k;
    std::optional<std::string> sep;
    std::optional<std::string> delimiter;
    std::optional<std::string> strategy;
    std::optional<std::string> format;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> concurrency;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    std::optional<std::string> mock;
    std::optional<std::string> base_url;
    std::optional<std::string> model;
    std::optional<std::string> api_key_env;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> corpus;
    std::optional<std::string> templates;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool config_required) {
    auto* c = cmd->add_option("--config", f.config, "RunConfig JSON file");
    if (config_required) c->required();
    cmd->add_option("--k", f.k, "segment size");
    cmd->add_option("--sep", f.sep, "separator: LF, CR, CRLF, BACKSLASH or custom:<text>");
    cmd->add_option("--delimiter", f.delimiter, "delimiter between numbers");
    cmd->add_option("--strategy", f.strategy, "vanilla, cot, icl, pot, sepseq (comma list)");
    cmd->add_option("--format", f.format, "vanilla, sepseq (comma list)");
    cmd->add_option("--runs", f.runs, "independent runs");
    cmd->add_option("--concurrency", f.concurrency, "requests in flight");
    cmd->add_option("--temperature", f.temperature);
    cmd->add_option("--max-tokens", f.max_tokens);
    cmd->add_option("--mock", f.mock, "mock endpoint spec, e.g. oracle?error=0.2");
    cmd->add_option("--base-url", f.base_url);
    cmd->add_option("--model", f.model);
    cmd->add_option("--api-key-env", f.api_key_env, "environment variable holding the API key");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed);
    cmd->add_option("--corpus", f.corpus, "corpus file(s); replaces the configured datasets");
    cmd->add_option("--templates", f.templates, "prompt template directory");
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find(',', start);
        if (end == std::string::npos) end = s.size();
        if (end > start) out.push_back(s.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

RunConfig resolve_config(const RunFlags& f) {
    RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
    if (f.k) c.segment_size = *f.k;
    if (f.sep) c.separator = SeparatorSymbol::parse(*f.sep).label();
    if (f.delimiter) c.delimiter = *f.delimiter;
    if (f.strategy) apply_strategy_flag(c, *f.strategy);
    if (f.format) {
        c.modes.clear();
        for (const auto& m : split(*f.format)) c.modes.push_back(parse_format_mode(m));
    }
    if (f.runs) c.runs = *f.runs;
    if (f.concurrency) c.concurrency = *f.concurrency;
    if (f.temperature) c.temperature = *f.temperature;
    if (f.max_tokens) c.max_tokens = *f.max_tokens;
    if (f.mock) {
        c.endpoint.mock = *f.mock;
        c.endpoint.base_url.clear();
    }
    if (f.base_url) {
        c.endpoint.base_url = *f.base_url;
        c.endpoint.mock.reset();
    }
    if (f.model) c.endpoint.model = *f.model;
    if (f.api_key_env) c.endpoint.api_key_env = *f.api_key_env;
    if (f.out) c.output_dir = *f.out;
    if (f.seed) c.seed = *f.seed;
    if (!f.corpus.empty()) {
        c.datasets.clear();
        for (const auto& p : f.corpus) {
            DatasetSpec d;
            d.kind = DatasetSpec::Kind::corpus;
            d.path = p;
            c.datasets.push_back(d);
        }
    }
    if (f.templates) c.templates_dir = *f.templates;
    return c;
}

void print_outcome(const RunOutcome& o) {
    nlohmann::ordered_json j;
    j["run_dir"] = o.dir.string();
    j["records"] = o.graded.size();
    auto rows = nlohmann::ordered_json::array();
    for (const auto& s : o.report.average) {
        rows.push_back({{"condition", s.get("condition")},
                        {"accuracy", s.accuracy_mean},
                        {"answer_rate", s.answer_rate_mean}});
    }
    j["average"] = std::move(rows);
    std::cout << j.dump(2) << "\n";
}

void report_error(const char* kind, const std::string& message) {
    const nlohmann::ordered_json j{{"error", kind}, {"message", message}};
    std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Separator-segmented numeric sequence evaluation harness"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    std::string gen_task, gen_bins = "S,M,L,XL", gen_out;
    std::size_t gen_per_bin = 50;
    std::uint64_t gen_seed = 0;
    gen->add_option("--task", gen_task, "task type")->required();
    gen->add_option("--bins", gen_bins, "length bins")->capture_default_str();
    gen->add_option("--per-bin", gen_per_bin, "samples per bin")->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--out", gen_out, "output JSONL file")->required();

    RunFlags run_flags, sweep_flags, repeat_flags;
    auto* run = app.add_subcommand("run", "prompt a model over a corpus and report");
    add_run_flags(run, run_flags, false);

    auto* grade_cmd = app.add_subcommand("grade", "re-grade a run directory from its transcripts");
    std::string grade_dir, grade_out;
    grade_cmd->add_option("--runs", grade_dir, "run directory")->required();
    grade_cmd->add_option("--out", grade_out, "graded JSONL (default <runs>/graded.jsonl)");

    auto* report = app.add_subcommand("report", "aggregate graded records into tables and plot data");
    std::string report_graded, report_formats = "md,csv,json", report_out;
    std::size_t report_bootstrap = 0;
    report->add_option("--graded", report_graded, "graded JSONL")->required();
    report->add_option("--format", report_formats)->capture_default_str();
    report->add_option("--out", report_out, "output directory")->required();
    report->add_option("--bootstrap", report_bootstrap, "bootstrap resamples for accuracy intervals");

    auto* sweep = app.add_subcommand("sweep", "sweep segment size or separator symbol");
    std::string sweep_param, sweep_values;
    sweep->add_option("--param", sweep_param, "k or separator")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    add_run_flags(sweep, sweep_flags, false);

    auto* repeat = app.add_subcommand("repeat", "strict-repetition experiment over five length bins");
    add_run_flags(repeat, repeat_flags, false);

    auto* attn = app.add_subcommand("attn-math", "dispersion curve and cross-segment ratio tables");
    std::string attn_out;
    attn->add_option("--out", attn_out, "output directory")->required();

    auto* probe = app.add_subcommand("probe-report", "plot data from attention-probe statistics");
    std::string probe_in, probe_out;
    probe->add_option("--probe", probe_in, "AttentionStats JSON")->required();
    probe->add_option("--out", probe_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", e.what());
        return 1;
    }

    try {
        if (*gen) {
            GenSpec spec = parse_task(gen_task) == TaskType::repetition ? repetition_spec(gen_seed) : GenSpec{};
            spec.task = parse_task(gen_task);
            spec.bins = parse_bins(gen_bins);
            spec.per_bin = gen_per_bin;
            spec.rng_seed = gen_seed;
            const auto samples = generate(spec);
            write_corpus(std::filesystem::path(gen_out), samples);
            std::cout << nlohmann::ordered_json{{"out", gen_out}, {"samples", samples.size()}}.dump() << "\n";
        } else if (*run) {
            print_outcome(run_experiment(resolve_config(run_flags)));
        } else if (*grade_cmd) {
            const auto graded = grade_run_dir(grade_dir);
            const auto out = grade_out.empty() ? std::filesystem::path(grade_dir) / "graded.jsonl"
                                               : std::filesystem::path(grade_out);
            write_records(out, graded);
            std::cout << nlohmann::ordered_json{{"out", out.string()}, {"records", graded.size()}}.dump() << "\n";
        } else if (*report) {
            const auto formats = parse_formats(report_formats);
            const auto r = report_from_graded(report_graded, formats, report_out, report_bootstrap);
            for (const auto& w : r.warnings) fmt::print(stderr, "warning: {}\n", w);
            std::cout << nlohmann::ordered_json{{"out", report_out}, {"rows", r.by_task.size()}}.dump() << "\n";
        } else if (*sweep) {
            const auto points = run_sweep(resolve_config(sweep_flags), parse_sweep_param(sweep_param),
                                          split(sweep_values));
            auto rows = nlohmann::ordered_json::array();
            for (const auto& p : points) rows.push_back({{"value", p.value}, {"accuracy", p.accuracy_mean}});
            std::cout << rows.dump(2) << "\n";
        } else if (*repeat) {
            print_outcome(run_repetition(resolve_config(repeat_flags)));
        } else if (*attn) {
            write_attention_math(attn_out);
            std::cout << nlohmann::ordered_json{{"out", attn_out}}.dump() << "\n";
        } else if (*probe) {
            const auto sum = write_probe_report(load_attention_stats(probe_in), probe_out);
            std::cout << nlohmann::ordered_json{{"out", probe_out},
                                                {"layers", sum.layers},
                                                {"layers_sep_above_delim", sum.layers_sep_above_sp},
                                                {"layers_sepseq_below_vanilla", sum.layers_sepseq_below_vanilla}}
                             .dump()
                      << "\n";
        }
    } catch (const Error& e) {
        report_error(to_string(e.kind()), e.what());
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        report_error("data", e.what());
        return 3;
    } catch (const std::exception& e) {
        report_error("internal", e.what());
        return 3;
    }
    return 0;
}
