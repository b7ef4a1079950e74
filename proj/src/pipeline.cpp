#include "sepseq/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <openssl/evp.h>

#include "sepseq/attention_math.hpp"
#include "sepseq/errors.hpp"
#include "sepseq/exec.hpp"
#include "sepseq/grading.hpp"
#include "sepseq/random.hpp"

namespace sepseq {

using ojson = nlohmann::ordered_json;

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw DataError("sha256 failed");
    }
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
    return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot read '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

std::string corpus_text(const std::vector<Sample>& corpus) {
    std::ostringstream ss;
    write_corpus(ss, corpus);
    return ss.str();
}

}  // namespace

std::vector<Sample> build_corpus(const RunConfig& config) {
    std::vector<Sample> out;
    for (const auto& d : config.datasets) {
        std::vector<Sample> part;
        switch (d.kind) {
            case DatasetSpec::Kind::corpus:
                part = read_corpus(d.path);
                if (d.task) {
                    std::erase_if(part, [&](const Sample& s) { return s.task != *d.task; });
                }
                break;
            case DatasetSpec::Kind::real:
                part = load_real(d.path, *d.task);
                if (*d.task == TaskType::number_string) {
                    for (const auto& id : audit_number_string(part)) {
                        fmt::print(stderr, "warning: {}: gold disagrees with the digit-run count\n", id);
                    }
                }
                break;
            case DatasetSpec::Kind::generate:
                part = generate(d.gen);
                break;
        }
        for (auto& s : part) out.push_back(std::move(s));
    }
    std::set<std::string> ids;
    for (const auto& s : out) {
        if (!ids.insert(s.id).second) throw UsageError(fmt::format("duplicate sample id '{}' in corpus", s.id));
    }
    if (out.empty()) throw DataError("corpus is empty");
    return out;
}

ExemplarPool build_exemplar_pool(const RunConfig& config) {
    auto pool = ExemplarPool::synthetic(config.seed);
    for (const auto& p : config.icl_pools) {
        for (auto& s : read_corpus(p)) pool.add(std::move(s));
    }
    return pool;
}

std::vector<RunRecord> grade_records(std::vector<RunRecord> raw, const std::vector<Sample>& corpus) {
    std::map<std::string, const Sample*, std::less<>> by_id;
    for (const auto& s : corpus) by_id[s.id] = &s;
    for (auto& r : raw) {
        const auto it = by_id.find(r.sample_id);
        if (it == by_id.end()) throw DataError(fmt::format("record for unknown sample '{}'", r.sample_id));
        r.gold = it->second->gold_answer;
        if (r.failed()) {
            r.extracted = ExtractedAnswer{};
            r.grade = GradeResult{false, false, GradeReason::no_answer};
        } else if (r.condition.strategy == PromptStrategy::pot) {
            if (r.program_error || !r.program_output) {
                r.extracted = ExtractedAnswer{};
                r.grade = execution_failed();
            } else {
                r.extracted = extract_answer(*r.program_output, r.task);
                r.grade = grade(*r.extracted, r.gold, r.task);
            }
        } else {
            r.extracted = extract_answer(r.response, r.task);
            r.grade = grade(*r.extracted, r.gold, r.task);
        }
    }
    std::stable_sort(raw.begin(), raw.end(), [](const RunRecord& a, const RunRecord& b) {
        return std::make_tuple(a.condition.label(), std::cref(a.sample_id), a.run_index) <
               std::make_tuple(b.condition.label(), std::cref(b.sample_id), b.run_index);
    });
    return raw;
}

void write_records(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
    std::string text;
    for (const auto& r : records) text += to_json(r).dump() + "\n";
    write_file(path, text);
}

std::vector<RunRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot read '{}'", path.string()));
    std::vector<RunRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(fmt::format("{}:{}: invalid JSON: {}", path.string(), lineno, e.what()));
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

namespace {

constexpr std::array<ReportFormat, 3> kAllFormats{ReportFormat::md, ReportFormat::csv, ReportFormat::json};

}  // namespace

RunOutcome run_experiment(const RunConfig& config, std::shared_ptr<ChatBackend> backend) {
    config.validate(/*check_endpoint=*/!backend);
    const auto corpus = build_corpus(config);

    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir);
    write_file(dir / "config.json", config_to_json(config).dump(2) + "\n");
    const auto corpus_bytes = corpus_text(corpus);
    write_file(dir / "corpus.jsonl", corpus_bytes);
    write_file(dir / "corpus.sha256", sha256_hex(corpus_bytes) + "  corpus.jsonl\n");

    auto templates = TemplateSet::load(config.templates_dir.value_or(TemplateSet::default_dir()));
    const PromptBuilder builder(std::move(templates), build_exemplar_pool(config), config.seed);

    std::vector<RenderedPrompt> prompts;
    std::vector<Condition> conditions;
    std::vector<const Sample*> owners;
    for (auto strategy : config.strategies) {
        for (auto mode : config.modes) {
            const auto fmt = config.format(mode);
            Condition c{config.endpoint.model, strategy, mode, fmt.segment_size, fmt.separator.label()};
            for (const auto& s : corpus) {
                prompts.push_back(builder.build(s, strategy, fmt));
                conditions.push_back(c);
                owners.push_back(&s);
            }
        }
    }
    std::vector<BatchItem> items;
    items.reserve(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) items.push_back({&prompts[i], owners[i]->bin, conditions[i]});

    if (!backend) {
        AnswerKey key;
        for (const auto& s : corpus) key[s.id] = s.gold_answer;
        backend = make_backend(config.endpoint, std::move(key));
    }
    LlmClient client(backend, config.endpoint.model, config.retry, config.min_request_interval_s);

    BatchOptions options;
    options.concurrency = config.concurrency;
    options.runs = config.runs;
    options.temperature = config.temperature;
    options.max_tokens = config.max_tokens;
    options.abort_failure_fraction = config.abort_failure_fraction;

    std::unique_ptr<ProgramRunner> runner;
    std::atomic<std::size_t> programs{0}, isolated{0};
    const bool uses_pot = std::find(config.strategies.begin(), config.strategies.end(), PromptStrategy::pot) !=
                          config.strategies.end();
    if (uses_pot) {
        runner = std::make_unique<ProgramRunner>(config.exec, static_cast<std::ptrdiff_t>(config.exec_concurrency));
        options.post_process = [&](RunRecord& r) {
            if (r.condition.strategy != PromptStrategy::pot) return;
            ++programs;
            try {
                auto result = runner->run(extract_program(r.response));
                if (result.network_isolated) ++isolated;
                r.program_output = std::move(result.output);
            } catch (const ExecutionError& e) {
                r.program_error = e.what();
            }
        };
    }

    std::vector<RunRecord> raw;
    {
        TranscriptWriter transcript(dir / "transcripts.jsonl");
        raw = run_batch(client, items, options, &transcript);
    }
    if (uses_pot) {
        const ojson exec_info{{"programs", programs.load()},
                              {"network_isolated", isolated.load()},
                              {"command", config.exec.command}};
        write_file(dir / "exec.json", exec_info.dump(2) + "\n");
    }

    RunOutcome outcome;
    outcome.dir = dir;
    outcome.graded = grade_records(std::move(raw), corpus);
    write_records(dir / "graded.jsonl", outcome.graded);
    outcome.report = build_report(outcome.graded, {config.bootstrap_resamples, config.seed});
    emit_report(outcome.report, kAllFormats, dir);
    return outcome;
}

std::vector<RunRecord> grade_run_dir(const std::filesystem::path& run_dir) {
    const auto corpus_bytes = read_file(run_dir / "corpus.jsonl");
    const auto hash_path = run_dir / "corpus.sha256";
    if (std::filesystem::exists(hash_path)) {
        const auto stored = read_file(hash_path).substr(0, 64);
        if (stored != sha256_hex(corpus_bytes)) {
            throw DataError(fmt::format("{}: corpus.jsonl does not match corpus.sha256", run_dir.string()));
        }
    }
    const auto corpus = read_corpus(run_dir / "corpus.jsonl");
    return grade_records(read_records(run_dir / "transcripts.jsonl"), corpus);
}

Report report_from_graded(const std::filesystem::path& graded, std::span<const ReportFormat> formats,
                          const std::filesystem::path& out_dir, std::size_t bootstrap_resamples) {
    const auto records = read_records(graded);
    for (const auto& r : records) {
        if (!r.grade) throw DataError(fmt::format("{}: record '{}' is ungraded", graded.string(), r.sample_id));
    }
    auto report = build_report(records, {bootstrap_resamples, 0});
    emit_report(report, formats, out_dir);
    return report;
}

SweepParam parse_sweep_param(std::string_view text) {
    if (text == "k") return SweepParam::k;
    if (text == "separator" || text == "sep") return SweepParam::separator;
    throw UsageError(fmt::format("unknown sweep parameter '{}' (k, separator)", text));
}

namespace {

std::string dir_safe(std::string_view value) {
    std::string out;
    for (char c : value) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    return out;
}

}  // namespace

std::vector<SweepPoint> run_sweep(const RunConfig& config, SweepParam param, const std::vector<std::string>& values,
                                  std::shared_ptr<ChatBackend> backend) {
    if (values.empty()) throw UsageError("sweep needs at least one value");
    const std::string pname = param == SweepParam::k ? "k" : "separator";
    std::vector<SweepPoint> points;
    std::vector<AggregateStats> combined;
    std::vector<std::string> tasks;

    for (const auto& value : values) {
        RunConfig sub = config;
        if (param == SweepParam::k) {
            try {
                const auto k = std::stoll(value);
                if (k < 1) throw UsageError("");
                sub.segment_size = static_cast<std::size_t>(k);
            } catch (const std::exception&) {
                throw UsageError(fmt::format("sweep value '{}' is not a positive integer", value));
            }
        } else {
            sub.separator = SeparatorSymbol::parse(value).label();
        }
        sub.modes = {FormatMode::sepseq};
        sub.output_dir = config.output_dir / fmt::format("{}-{}", pname, dir_safe(value));
        const auto outcome = run_experiment(sub, backend);

        const auto fmt_cfg = sub.format(FormatMode::sepseq);
        const auto label =
            Condition{sub.endpoint.model, sub.strategies.front(), FormatMode::sepseq, fmt_cfg.segment_size,
                      fmt_cfg.separator.label()}
                .label();
        SweepPoint point;
        point.value = param == SweepParam::k ? value : fmt_cfg.separator.label();
        for (const auto& s : outcome.report.by_task) {
            if (s.get("condition") != label) continue;
            point.by_task.push_back(s);
            if (std::find(tasks.begin(), tasks.end(), s.get("task")) == tasks.end()) tasks.push_back(s.get("task"));
            auto row = s;
            row.key.insert(row.key.begin(), {pname, point.value});
            combined.push_back(std::move(row));
        }
        for (const auto& s : outcome.report.average) {
            if (s.get("condition") == label) point.accuracy_mean = s.accuracy_mean;
        }
        points.push_back(std::move(point));
    }

    std::filesystem::create_directories(config.output_dir / "plots");
    std::string md = fmt::format("# Sweep over {}\n\nAccuracy (%) of the segmented format.\n\n| {} |", pname, pname);
    for (const auto& t : tasks) md += fmt::format(" {} |", t);
    md += " Average |\n|---|";
    for (std::size_t i = 0; i <= tasks.size(); ++i) md += "---:|";
    md += "\n";
    std::vector<std::string> xs;
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (const auto& t : tasks) series.emplace_back(t, std::vector<double>{});
    series.emplace_back("Average", std::vector<double>{});
    for (const auto& p : points) {
        xs.push_back(p.value);
        md += fmt::format("| {} |", p.value);
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            double acc = 0.0;
            for (const auto& s : p.by_task) {
                if (s.get("task") == tasks[i]) acc = s.accuracy_mean;
            }
            series[i].second.push_back(acc);
            md += fmt::format(" {:.1f} |", 100.0 * acc);
        }
        series.back().second.push_back(p.accuracy_mean);
        md += fmt::format(" {:.1f} |\n", 100.0 * p.accuracy_mean);
    }
    write_file(config.output_dir / "sweep.md", md);
    write_file(config.output_dir / "sweep.csv", render_csv(combined));
    const auto plot = param == SweepParam::k
                          ? plot_data("Accuracy vs. separator interval", "k", "accuracy", xs, series)
                          : plot_data("Accuracy by separator symbol", "separator", "accuracy", xs, series);
    write_file(config.output_dir / "plots" / (param == SweepParam::k ? "sweep_k.json" : "separators.json"),
               plot.dump(2) + "\n");
    return points;
}

RunOutcome run_repetition(RunConfig config, std::shared_ptr<ChatBackend> backend) {
    const bool has_repetition = std::any_of(config.datasets.begin(), config.datasets.end(), [](const DatasetSpec& d) {
        return d.task == TaskType::repetition;
    });
    if (!has_repetition) {
        DatasetSpec d;
        d.kind = DatasetSpec::Kind::generate;
        d.task = TaskType::repetition;
        d.gen = repetition_spec(config.seed);
        config.datasets = {d};
    } else {
        std::erase_if(config.datasets, [](const DatasetSpec& d) { return d.task != TaskType::repetition; });
    }
    config.temperature = 0.0;
    return run_experiment(config, std::move(backend));
}

void write_attention_math(const std::filesystem::path& out_dir) {
    namespace at = attention;
    std::filesystem::create_directories(out_dir / "plots");

    std::vector<std::size_t> ns;
    for (std::size_t n = 8; n <= 4096; n *= 2) ns.push_back(n);
    std::vector<std::string> xs;
    for (auto n : ns) xs.push_back(std::to_string(n));
    std::vector<std::pair<std::string, std::vector<double>>> curves;
    for (double gap : {0.0, std::log(9.0), 2.0, 4.0}) {
        std::vector<double> y;
        for (const auto& p : at::dispersion_curve(ns, gap)) y.push_back(p.max_weight);
        curves.emplace_back(fmt::format("gap={:.4g}", gap), std::move(y));
    }
    write_file(out_dir / "plots" / "dispersion.json",
               plot_data("Weight on the relevant key vs. sequence length", "N", "attention weight", xs, curves)
                       .dump(2) +
                   "\n");

    // Nine context logits of 1.0; the boundary slot moves from s_sp = 1 upward.
    const std::vector<double> context(9, 1.0);
    std::vector<std::string> sep_x;
    std::vector<double> ratios;
    std::string md =
        "# Cross-segment suppression\n\nNine context logits of 1.0, delimiter logit s_sp = 1.0.\n\n"
        "| s_sep | ratio A_sep / A_van |\n|---:|---:|\n";
    for (int i = 0; i <= 18; ++i) {
        const double s_sep = 1.0 + 0.5 * i;
        const double r = at::cross_segment_ratio(context, 1.0, s_sep);
        sep_x.push_back(fmt::format("{:g}", s_sep));
        ratios.push_back(r);
        md += fmt::format("| {:g} | {:.6f} |\n", s_sep, r);
    }
    const double e = std::exp(1.0);
    md += fmt::format("\nClosed form at s_sep = 5: 10e / (9e + e^5) = {:.10f}\n", 10 * e / (9 * e + std::exp(5.0)));
    write_file(out_dir / "theorem.md", md);
    write_file(out_dir / "plots" / "cross_segment_ratio.json",
               plot_data("Cross-segment attention ratio vs. separator logit", "s_sep", "ratio", sep_x,
                         {{"ratio", ratios}})
                       .dump(2) +
                   "\n");
}

}  // namespace sepseq
