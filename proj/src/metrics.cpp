#include "sepseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/core.h>

#include "sepseq/errors.hpp"
#include "sepseq/random.hpp"

namespace sepseq {

using ojson = nlohmann::ordered_json;

namespace {

bool is_correct(const RunRecord& r) { return r.grade && r.grade->correct; }
bool is_valid(const RunRecord& r) { return r.grade && r.grade->valid; }

}  // namespace

double accuracy(std::span<const RunRecord> records) {
    if (records.empty()) throw UsageError("accuracy of an empty record set");
    const auto n = std::count_if(records.begin(), records.end(), is_correct);
    return static_cast<double>(n) / static_cast<double>(records.size());
}

double answer_rate(std::span<const RunRecord> records) {
    if (records.empty()) throw UsageError("answer rate of an empty record set");
    const auto n = std::count_if(records.begin(), records.end(), is_valid);
    return static_cast<double>(n) / static_cast<double>(records.size());
}

double relative_improvement(double a, double b) {
    if (b == 0.0) throw DomainError("relative improvement over a zero baseline");
    return (a - b) / b;
}

const char* to_string(GroupField field) {
    switch (field) {
        case GroupField::task: return "task";
        case GroupField::model: return "model";
        case GroupField::condition: return "condition";
        case GroupField::strategy: return "strategy";
        case GroupField::format: return "format";
        case GroupField::k: return "k";
        case GroupField::separator: return "separator";
        case GroupField::bin: return "bin";
    }
    return "task";
}

GroupField parse_group_field(std::string_view text) {
    for (auto f : {GroupField::task, GroupField::model, GroupField::condition, GroupField::strategy,
                   GroupField::format, GroupField::k, GroupField::separator, GroupField::bin}) {
        if (text == to_string(f)) return f;
    }
    throw UsageError(fmt::format("unknown group field '{}'", text));
}

std::string group_value(const RunRecord& r, GroupField field) {
    switch (field) {
        case GroupField::task: return to_string(r.task);
        case GroupField::model: return r.condition.model;
        case GroupField::condition: return r.condition.label();
        case GroupField::strategy: return to_string(r.condition.strategy);
        case GroupField::format: return to_string(r.condition.mode);
        case GroupField::k: return std::to_string(r.condition.segment_size);
        case GroupField::separator: return r.condition.separator;
        case GroupField::bin: return r.bin ? to_string(*r.bin) : "";
    }
    return "";
}

std::string AggregateStats::get(std::string_view field) const {
    for (const auto& [k, v] : key) {
        if (k == field) return v;
    }
    return "";
}

std::pair<double, std::optional<double>> mean_std(std::span<const double> xs) {
    if (xs.empty()) return {0.0, std::nullopt};
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, std::nullopt};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

namespace {

struct RunTally {
    std::size_t n = 0;
    std::size_t correct = 0;
    std::size_t valid = 0;
};

std::pair<double, double> bootstrap_ci(const std::vector<char>& correct, std::size_t resamples,
                                       std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> accs;
    accs.reserve(resamples);
    const auto n = static_cast<std::int64_t>(correct.size());
    for (std::size_t b = 0; b < resamples; ++b) {
        std::size_t hits = 0;
        for (std::int64_t i = 0; i < n; ++i) hits += correct[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
        accs.push_back(static_cast<double>(hits) / static_cast<double>(n));
    }
    std::sort(accs.begin(), accs.end());
    auto at = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(accs.size() - 1)));
        return accs[idx];
    };
    return {at(0.025), at(0.975)};
}

}  // namespace

std::vector<AggregateStats> aggregate(std::span<const RunRecord> records,
                                      std::span<const GroupField> group_by,
                                      const AggregateOptions& options) {
    std::map<std::vector<std::string>, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) {
        std::vector<std::string> key;
        key.reserve(group_by.size());
        for (auto f : group_by) key.push_back(group_value(r, f));
        groups[std::move(key)].push_back(&r);
    }

    std::vector<AggregateStats> out;
    out.reserve(groups.size());
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(), [](const RunRecord* a, const RunRecord* b) {
            return std::tie(a->sample_id, a->run_index) < std::tie(b->sample_id, b->run_index);
        });
        std::map<std::size_t, RunTally> runs;
        std::int64_t resp_sum = 0, total_sum = 0;
        std::size_t resp_n = 0, total_n = 0;
        std::vector<char> correct_flags;
        for (const RunRecord* r : members) {
            auto& t = runs[r->run_index];
            ++t.n;
            t.correct += is_correct(*r);
            t.valid += is_valid(*r);
            correct_flags.push_back(is_correct(*r) ? 1 : 0);
            if (!r->failed() && r->usage.completion_tokens) {
                resp_sum += *r->usage.completion_tokens;
                ++resp_n;
            }
            if (!r->failed() && r->usage.total_tokens) {
                total_sum += *r->usage.total_tokens;
                ++total_n;
            }
        }

        std::vector<double> acc, ar, correct, n;
        for (const auto& [run, t] : runs) {
            acc.push_back(static_cast<double>(t.correct) / static_cast<double>(t.n));
            ar.push_back(static_cast<double>(t.valid) / static_cast<double>(t.n));
            correct.push_back(static_cast<double>(t.correct));
            n.push_back(static_cast<double>(t.n));
        }

        AggregateStats s;
        for (std::size_t i = 0; i < group_by.size(); ++i) s.key.emplace_back(to_string(group_by[i]), key[i]);
        s.runs = runs.size();
        std::tie(s.accuracy_mean, s.accuracy_std) = mean_std(acc);
        std::tie(s.answer_rate_mean, s.answer_rate_std) = mean_std(ar);
        s.correct_mean = mean_std(correct).first;
        s.n_per_run = mean_std(n).first;
        if (resp_n > 0) s.response_tokens_mean = static_cast<double>(resp_sum) / static_cast<double>(resp_n);
        if (total_n > 0) s.total_tokens_mean = static_cast<double>(total_sum) / static_cast<double>(total_n);
        if (options.bootstrap_resamples > 0 && !correct_flags.empty()) {
            std::uint64_t seed = options.bootstrap_seed;
            for (const auto& k : key) seed = mix64(seed, hash_string(k));
            const auto [lo, hi] = bootstrap_ci(correct_flags, options.bootstrap_resamples, seed);
            s.ci_low = lo;
            s.ci_high = hi;
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ReportFormat> parse_formats(std::string_view csv) {
    std::vector<ReportFormat> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto end = csv.find(',', start);
        if (end == std::string_view::npos) end = csv.size();
        const auto part = csv.substr(start, end - start);
        if (part == "md") {
            out.push_back(ReportFormat::md);
        } else if (part == "csv") {
            out.push_back(ReportFormat::csv);
        } else if (part == "json") {
            out.push_back(ReportFormat::json);
        } else if (!part.empty()) {
            throw UsageError(fmt::format("unknown report format '{}' (md, csv, json)", part));
        }
        start = end + 1;
    }
    if (out.empty()) throw UsageError("no report format given");
    return out;
}

namespace {

int task_rank(const std::string& name) {
    const auto& tasks = all_tasks();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (name == to_string(tasks[i])) return static_cast<int>(i);
    }
    return static_cast<int>(tasks.size());
}

int bin_rank(const std::string& name) {
    if (name.empty()) return 99;
    return static_cast<int>(parse_bin(name));
}

// Condition labels in first-seen order of a stable sort of the records'
// conditions, so columns come out in a fixed order.
std::vector<Condition> conditions_of(std::span<const RunRecord> records) {
    std::vector<Condition> out;
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (seen.insert(r.condition.label()).second) out.push_back(r.condition);
    }
    std::sort(out.begin(), out.end(), [](const Condition& a, const Condition& b) {
        auto rank = [](const Condition& c) {
            return std::make_tuple(c.model, c.mode == FormatMode::sepseq, static_cast<int>(c.strategy),
                                   c.segment_size, c.separator);
        };
        return rank(a) < rank(b);
    });
    return out;
}

const AggregateStats* find_stats(const std::vector<AggregateStats>& stats,
                                 std::initializer_list<std::pair<std::string_view, std::string_view>> want) {
    for (const auto& s : stats) {
        bool ok = true;
        for (const auto& [k, v] : want) {
            if (s.get(k) != v) {
                ok = false;
                break;
            }
        }
        if (ok) return &s;
    }
    return nullptr;
}

std::vector<Improvement> improvements_for(const std::string& scope,
                                          const std::vector<const AggregateStats*>& cells,
                                          const std::map<std::string, Condition>& conds) {
    std::vector<Improvement> out;
    const AggregateStats* best_seg = nullptr;
    const AggregateStats* best_base = nullptr;
    for (const auto* s : cells) {
        const auto& c = conds.at(s->get("condition"));
        auto& slot = c.mode == FormatMode::sepseq ? best_seg : best_base;
        if (!slot || s->accuracy_mean > slot->accuracy_mean) slot = s;
    }
    if (best_seg && best_base && best_base->accuracy_mean > 0) {
        out.push_back({scope, best_seg->get("condition"), best_base->get("condition"),
                       best_seg->accuracy_mean, best_base->accuracy_mean,
                       relative_improvement(best_seg->accuracy_mean, best_base->accuracy_mean),
                       "accuracy"});
    }
    // Token change between arms that differ only in format.
    for (const auto* seg : cells) {
        const auto& cs = conds.at(seg->get("condition"));
        if (cs.mode != FormatMode::sepseq || !seg->response_tokens_mean) continue;
        for (const auto* base : cells) {
            const auto& cb = conds.at(base->get("condition"));
            if (cb.mode != FormatMode::vanilla || cb.strategy != cs.strategy || cb.model != cs.model ||
                !base->response_tokens_mean || *base->response_tokens_mean == 0) {
                continue;
            }
            out.push_back({scope, seg->get("condition"), base->get("condition"),
                           *seg->response_tokens_mean, *base->response_tokens_mean,
                           relative_improvement(*seg->response_tokens_mean, *base->response_tokens_mean),
                           "response_tokens"});
        }
    }
    return out;
}

}  // namespace

Report build_report(std::span<const RunRecord> records, const AggregateOptions& options) {
    Report report;
    const std::vector<GroupField> by_task_fields{GroupField::task, GroupField::condition};
    report.by_task = aggregate(records, by_task_fields, options);
    std::stable_sort(report.by_task.begin(), report.by_task.end(), [](const auto& a, const auto& b) {
        return task_rank(a.get("task")) < task_rank(b.get("task"));
    });

    const auto conds = conditions_of(records);
    std::map<std::string, Condition> cond_by_label;
    for (const auto& c : conds) cond_by_label[c.label()] = c;

    // Macro average over tasks, computed per run and then across runs.
    for (const auto& c : conds) {
        const auto label = c.label();
        std::map<std::string, std::map<std::size_t, RunTally>> tally;  // task -> run -> tally
        for (const auto& r : records) {
            if (r.condition.label() != label) continue;
            auto& t = tally[to_string(r.task)][r.run_index];
            ++t.n;
            t.correct += is_correct(r);
            t.valid += is_valid(r);
        }
        std::set<std::size_t> run_ids;
        for (const auto& [task, runs] : tally) {
            for (const auto& [run, t] : runs) run_ids.insert(run);
        }
        std::vector<double> acc, ar;
        for (auto run : run_ids) {
            double a = 0, v = 0;
            std::size_t tasks = 0;
            for (const auto& [task, runs] : tally) {
                auto it = runs.find(run);
                if (it == runs.end()) continue;
                a += static_cast<double>(it->second.correct) / static_cast<double>(it->second.n);
                v += static_cast<double>(it->second.valid) / static_cast<double>(it->second.n);
                ++tasks;
            }
            acc.push_back(a / static_cast<double>(tasks));
            ar.push_back(v / static_cast<double>(tasks));
        }
        AggregateStats s;
        s.key = {{"condition", label}};
        s.runs = run_ids.size();
        std::tie(s.accuracy_mean, s.accuracy_std) = mean_std(acc);
        std::tie(s.answer_rate_mean, s.answer_rate_std) = mean_std(ar);
        std::vector<double> resp, total, correct, n;
        for (const auto& cell : report.by_task) {
            if (cell.get("condition") != label) continue;
            if (cell.response_tokens_mean) resp.push_back(*cell.response_tokens_mean);
            if (cell.total_tokens_mean) total.push_back(*cell.total_tokens_mean);
            correct.push_back(cell.correct_mean);
            n.push_back(cell.n_per_run);
        }
        if (!resp.empty()) s.response_tokens_mean = mean_std(resp).first;
        if (!total.empty()) s.total_tokens_mean = mean_std(total).first;
        for (double x : correct) s.correct_mean += x;
        for (double x : n) s.n_per_run += x;
        report.average.push_back(std::move(s));
    }

    std::vector<RunRecord> binned;
    for (const auto& r : records) {
        if (r.bin) binned.push_back(r);
    }
    if (!binned.empty()) {
        const std::vector<GroupField> fields{GroupField::task, GroupField::bin, GroupField::condition};
        report.by_bin = aggregate(binned, fields, options);
        std::stable_sort(report.by_bin.begin(), report.by_bin.end(), [](const auto& a, const auto& b) {
            return std::make_pair(task_rank(a.get("task")), bin_rank(a.get("bin"))) <
                   std::make_pair(task_rank(b.get("task")), bin_rank(b.get("bin")));
        });
    }

    std::vector<std::string> task_order;
    for (const auto& s : report.by_task) {
        if (task_order.empty() || task_order.back() != s.get("task")) task_order.push_back(s.get("task"));
    }
    for (const auto& task : task_order) {
        std::vector<const AggregateStats*> cells;
        for (const auto& s : report.by_task) {
            if (s.get("task") == task) cells.push_back(&s);
        }
        for (auto& imp : improvements_for(task, cells, cond_by_label)) report.improvements.push_back(imp);
    }
    {
        std::vector<const AggregateStats*> cells;
        for (const auto& s : report.average) cells.push_back(&s);
        for (auto& imp : improvements_for("Average", cells, cond_by_label)) report.improvements.push_back(imp);
    }

    const auto failed = std::count_if(records.begin(), records.end(), [](const RunRecord& r) { return r.failed(); });
    if (failed > 0) report.warnings.push_back(fmt::format("{} request(s) failed and count as no answer", failed));
    const auto estimated = std::count_if(records.begin(), records.end(),
                                         [](const RunRecord& r) { return !r.failed() && r.usage.estimated; });
    if (estimated > 0) {
        report.warnings.push_back(
            fmt::format("{} record(s) use whitespace-estimated token counts", estimated));
    }
    const auto ungraded = std::count_if(records.begin(), records.end(), [](const RunRecord& r) { return !r.grade; });
    if (ungraded > 0) report.warnings.push_back(fmt::format("{} record(s) are ungraded", ungraded));
    for (const auto& s : report.by_task) {
        if (s.accuracy_mean > s.answer_rate_mean) {
            report.warnings.push_back(fmt::format("accuracy exceeds answer rate for {} / {}",
                                                  s.get("task"), s.get("condition")));
        }
    }
    for (auto& w : check_consistency(report)) report.warnings.push_back(std::move(w));
    return report;
}

std::vector<std::string> check_consistency(const Report& report) {
    std::vector<std::string> problems;
    for (const auto& imp : report.improvements) {
        const auto& table = imp.scope == "Average" ? report.average : report.by_task;
        const AggregateStats* a = nullptr;
        const AggregateStats* b = nullptr;
        for (const auto& s : table) {
            if (imp.scope != "Average" && s.get("task") != imp.scope) continue;
            if (s.get("condition") == imp.condition) a = &s;
            if (s.get("condition") == imp.baseline) b = &s;
        }
        if (!a || !b) {
            problems.push_back(fmt::format("improvement for {} refers to a missing row", imp.scope));
            continue;
        }
        const double am = imp.metric == "accuracy" ? a->accuracy_mean : a->response_tokens_mean.value_or(0);
        const double bm = imp.metric == "accuracy" ? b->accuracy_mean : b->response_tokens_mean.value_or(0);
        if (bm == 0 || relative_improvement(am, bm) != imp.relative) {
            problems.push_back(fmt::format("improvement for {} ({}) does not recompute from the reported means",
                                           imp.scope, imp.metric));
        }
    }
    return problems;
}

namespace {

std::string pct(double x) { return fmt::format("{:.1f}", 100.0 * x); }

std::string pct_pm(double mean, const std::optional<double>& sd) {
    if (!sd) return pct(mean);
    return fmt::format("{} ± {}", pct(mean), pct(*sd));
}

std::string signed_pct(double rel) { return fmt::format("{:+.1f}%", 100.0 * rel); }

std::string num(const std::optional<double>& x) { return x ? fmt::format("{:.1f}", *x) : "—"; }

std::vector<std::string> labels_of(const std::vector<AggregateStats>& stats) {
    std::vector<std::string> out;
    for (const auto& s : stats) {
        const auto c = s.get("condition");
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
}

}  // namespace

std::string render_markdown(const Report& report) {
    std::string md = "# Results\n\n## Answer rate and accuracy by task (%, mean ± std over runs)\n\n";
    const auto conds = labels_of(report.average.empty() ? report.by_task : report.average);

    md += "| Task |";
    for (const auto& c : conds) md += fmt::format(" {} AR | {} Acc |", c, c);
    md += " Incr. |\n|---|";
    for (std::size_t i = 0; i < conds.size(); ++i) md += "---:|---:|";
    md += "---:|\n";

    auto incr_for = [&](const std::string& scope) -> std::string {
        for (const auto& imp : report.improvements) {
            if (imp.scope == scope && imp.metric == "accuracy") return signed_pct(imp.relative);
        }
        return "";
    };
    std::vector<std::string> tasks;
    for (const auto& s : report.by_task) {
        if (tasks.empty() || tasks.back() != s.get("task")) tasks.push_back(s.get("task"));
    }
    auto row = [&](const std::string& name, auto lookup) {
        md += fmt::format("| {} |", name);
        for (const auto& c : conds) {
            const AggregateStats* s = lookup(c);
            if (s) {
                md += fmt::format(" {} | {} |", pct_pm(s->answer_rate_mean, s->answer_rate_std),
                                  pct_pm(s->accuracy_mean, s->accuracy_std));
            } else {
                md += " — | — |";
            }
        }
        md += fmt::format(" {} |\n", incr_for(name));
    };
    for (const auto& t : tasks) {
        row(t, [&](const std::string& c) { return find_stats(report.by_task, {{"task", t}, {"condition", c}}); });
    }
    if (!report.average.empty()) {
        row("Average", [&](const std::string& c) { return find_stats(report.average, {{"condition", c}}); });
    }

    if (!report.by_bin.empty()) {
        md += "\n## Accuracy by length bin\n\n| Task | Size | Total |";
        std::vector<std::string> bconds;
        const auto present = labels_of(report.by_bin);
        for (const auto& c : conds) {
            if (std::find(present.begin(), present.end(), c) != present.end()) bconds.push_back(c);
        }
        for (const auto& c : present) {
            if (std::find(bconds.begin(), bconds.end(), c) == bconds.end()) bconds.push_back(c);
        }
        for (const auto& c : bconds) md += fmt::format(" {} # Correct | {} Accuracy |", c, c);
        md += "\n|---|---|---:|";
        for (std::size_t i = 0; i < bconds.size(); ++i) md += "---:|---:|";
        md += "\n";
        std::vector<std::pair<std::string, std::string>> rows;
        for (const auto& s : report.by_bin) {
            std::pair<std::string, std::string> key{s.get("task"), s.get("bin")};
            if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
        }
        std::map<std::string, std::pair<double, double>> overall;  // cond -> (correct, total)
        std::map<std::string, double> task_total;
        for (const auto& [task, bin] : rows) {
            double total = 0;
            std::string cells;
            for (const auto& c : bconds) {
                const auto* s = find_stats(report.by_bin, {{"task", task}, {"bin", bin}, {"condition", c}});
                if (!s) {
                    cells += " — | — |";
                    continue;
                }
                total = s->n_per_run;
                overall[c].first += s->correct_mean;
                overall[c].second += s->n_per_run;
                cells += fmt::format(" {:g} | {:.2f}% |", s->correct_mean, 100.0 * s->accuracy_mean);
            }
            md += fmt::format("| {} | {} | {:g} |{}\n", task, bin_label(parse_bin(bin)), total, cells);
        }
        md += "| **Overall** | | ";
        double grand = 0;
        for (const auto& c : bconds) grand = std::max(grand, overall[c].second);
        md += fmt::format("{:g} |", grand);
        for (const auto& c : bconds) {
            const auto [corr, tot] = overall[c];
            md += fmt::format(" {:g} | {:.2f}% |", corr, tot > 0 ? 100.0 * corr / tot : 0.0);
        }
        md += "\n";
    }

    if (!report.by_task.empty()) {
        md += "\n## Token usage (mean per response)\n\n| Task |";
        for (const auto& c : conds) md += fmt::format(" {} response | {} total |", c, c);
        md += "\n|---|";
        for (std::size_t i = 0; i < conds.size(); ++i) md += "---:|---:|";
        md += "\n";
        for (const auto& t : tasks) {
            md += fmt::format("| {} |", t);
            for (const auto& c : conds) {
                const auto* s = find_stats(report.by_task, {{"task", t}, {"condition", c}});
                md += s ? fmt::format(" {} | {} |", num(s->response_tokens_mean), num(s->total_tokens_mean))
                        : " — | — |";
            }
            md += "\n";
        }
    }

    if (!report.improvements.empty()) {
        md += "\n## Relative changes\n\n| Scope | Metric | Condition | Baseline | Condition mean | Baseline mean | Change |\n"
              "|---|---|---|---|---:|---:|---:|\n";
        for (const auto& imp : report.improvements) {
            const bool acc = imp.metric == "accuracy";
            md += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", imp.scope, imp.metric, imp.condition,
                              imp.baseline, acc ? pct(imp.condition_mean) : fmt::format("{:.1f}", imp.condition_mean),
                              acc ? pct(imp.baseline_mean) : fmt::format("{:.1f}", imp.baseline_mean),
                              signed_pct(imp.relative));
        }
    }
    if (!report.warnings.empty()) {
        md += "\n## Warnings\n\n";
        for (const auto& w : report.warnings) md += "- " + w + "\n";
    }
    return md;
}

namespace {

const std::vector<std::string>& metric_columns() {
    static const std::vector<std::string> cols{
        "runs", "n_per_run", "accuracy_mean", "accuracy_std", "answer_rate_mean", "answer_rate_std",
        "correct_mean", "response_tokens_mean", "total_tokens_mean", "ci_low", "ci_high"};
    return cols;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string opt_num(const std::optional<double>& x) { return x ? fmt::format("{}", *x) : ""; }

std::vector<std::vector<std::string>> parse_csv_rows(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        any = true;
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw DataError("unterminated quoted csv field");
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::optional<double> parse_opt(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw DataError(fmt::format("bad csv number '{}'", s));
    }
}

}  // namespace

std::string render_csv(std::span<const AggregateStats> stats) {
    std::vector<std::string> keys;
    if (!stats.empty()) {
        for (const auto& [k, v] : stats.front().key) keys.push_back(k);
    } else {
        keys = {"task", "condition"};
    }
    std::string out;
    for (std::size_t i = 0; i < keys.size(); ++i) out += (i ? "," : "") + csv_field(keys[i]);
    for (const auto& m : metric_columns()) out += "," + m;
    out += '\n';
    for (const auto& s : stats) {
        for (std::size_t i = 0; i < keys.size(); ++i) out += (i ? "," : "") + csv_field(s.get(keys[i]));
        out += fmt::format(",{},{},{},{},{},{},{},{},{},{},{}\n", s.runs, s.n_per_run, s.accuracy_mean,
                           opt_num(s.accuracy_std), s.answer_rate_mean, opt_num(s.answer_rate_std),
                           s.correct_mean, opt_num(s.response_tokens_mean), opt_num(s.total_tokens_mean),
                           opt_num(s.ci_low), opt_num(s.ci_high));
    }
    return out;
}

std::vector<AggregateStats> parse_csv(std::string_view text) {
    const auto rows = parse_csv_rows(text);
    if (rows.empty()) throw DataError("csv has no header");
    const auto& header = rows.front();
    const auto& metrics = metric_columns();
    if (header.size() < metrics.size()) throw DataError("csv header is missing metric columns");
    const std::size_t n_keys = header.size() - metrics.size();
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        if (header[n_keys + i] != metrics[i]) throw DataError(fmt::format("unexpected csv column '{}'", header[n_keys + i]));
    }
    std::vector<AggregateStats> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size()) throw DataError(fmt::format("csv row {} has {} fields", r, row.size()));
        AggregateStats s;
        for (std::size_t i = 0; i < n_keys; ++i) s.key.emplace_back(header[i], row[i]);
        const auto* m = &row[n_keys];
        s.runs = static_cast<std::size_t>(std::stoull(m[0]));
        s.n_per_run = *parse_opt(m[1]);
        s.accuracy_mean = *parse_opt(m[2]);
        s.accuracy_std = parse_opt(m[3]);
        s.answer_rate_mean = *parse_opt(m[4]);
        s.answer_rate_std = parse_opt(m[5]);
        s.correct_mean = *parse_opt(m[6]);
        s.response_tokens_mean = parse_opt(m[7]);
        s.total_tokens_mean = parse_opt(m[8]);
        s.ci_low = parse_opt(m[9]);
        s.ci_high = parse_opt(m[10]);
        out.push_back(std::move(s));
    }
    return out;
}

ojson stats_to_json(const AggregateStats& s) {
    ojson j;
    for (const auto& [k, v] : s.key) j[k] = v;
    auto opt = [](const std::optional<double>& x) { return x ? ojson(*x) : ojson(nullptr); };
    j["runs"] = s.runs;
    j["n_per_run"] = s.n_per_run;
    j["accuracy_mean"] = s.accuracy_mean;
    j["accuracy_std"] = opt(s.accuracy_std);
    j["answer_rate_mean"] = s.answer_rate_mean;
    j["answer_rate_std"] = opt(s.answer_rate_std);
    j["correct_mean"] = s.correct_mean;
    j["response_tokens_mean"] = opt(s.response_tokens_mean);
    j["total_tokens_mean"] = opt(s.total_tokens_mean);
    j["ci_low"] = opt(s.ci_low);
    j["ci_high"] = opt(s.ci_high);
    return j;
}

ojson report_to_json(const Report& report) {
    ojson j;
    auto table = [](const std::vector<AggregateStats>& stats) {
        auto a = ojson::array();
        for (const auto& s : stats) a.push_back(stats_to_json(s));
        return a;
    };
    j["by_task"] = table(report.by_task);
    j["average"] = table(report.average);
    j["by_bin"] = table(report.by_bin);
    auto imps = ojson::array();
    for (const auto& i : report.improvements) {
        imps.push_back({{"scope", i.scope},
                        {"metric", i.metric},
                        {"condition", i.condition},
                        {"baseline", i.baseline},
                        {"condition_mean", i.condition_mean},
                        {"baseline_mean", i.baseline_mean},
                        {"relative", i.relative}});
    }
    j["improvements"] = std::move(imps);
    j["warnings"] = report.warnings;
    return j;
}

ojson plot_data(std::string title, std::string x_label, std::string y_label, const std::vector<std::string>& x,
                const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    ojson j;
    j["title"] = std::move(title);
    j["x_label"] = std::move(x_label);
    j["y_label"] = std::move(y_label);
    j["x"] = x;
    auto s = ojson::array();
    for (const auto& [name, y] : series) s.push_back({{"name", name}, {"y", y}});
    j["series"] = std::move(s);
    return j;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

}  // namespace

void emit_report(const Report& report, std::span<const ReportFormat> formats,
                 const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / "plots");
    for (auto f : formats) {
        switch (f) {
            case ReportFormat::md:
                write_file(out_dir / "report.md", render_markdown(report));
                break;
            case ReportFormat::csv:
                write_file(out_dir / "report.csv", render_csv(report.by_task));
                write_file(out_dir / "report_average.csv", render_csv(report.average));
                if (!report.by_bin.empty()) write_file(out_dir / "report_bins.csv", render_csv(report.by_bin));
                break;
            case ReportFormat::json:
                write_file(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
                break;
        }
    }

    std::vector<std::string> tasks;
    for (const auto& s : report.by_task) {
        if (tasks.empty() || tasks.back() != s.get("task")) tasks.push_back(s.get("task"));
    }
    const auto conds = labels_of(report.average);
    std::vector<std::pair<std::string, std::vector<double>>> acc_series, token_series;
    for (const auto& c : conds) {
        std::vector<double> acc, tok;
        for (const auto& t : tasks) {
            const auto* s = find_stats(report.by_task, {{"task", t}, {"condition", c}});
            acc.push_back(s ? s->accuracy_mean : 0.0);
            tok.push_back(s ? s->response_tokens_mean.value_or(0.0) : 0.0);
        }
        acc_series.emplace_back(c, std::move(acc));
        token_series.emplace_back(c, std::move(tok));
    }
    write_file(out_dir / "plots" / "accuracy_by_task.json",
               plot_data("Accuracy by task", "task", "accuracy", tasks, acc_series).dump(2) + "\n");
    write_file(out_dir / "plots" / "tokens.json",
               plot_data("Mean response tokens by task", "task", "response tokens", tasks, token_series).dump(2) +
                   "\n");
}

}  // namespace sepseq
