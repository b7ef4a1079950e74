#pragma once

// Accuracy / answer-rate aggregation over graded run records, and the
// report writers (markdown, csv, json, plot data).

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sepseq/records.hpp"

namespace sepseq {

/// N_correct / N over the records of one run; ungraded or invalid records
/// count as incorrect. Throws UsageError on an empty set.
double accuracy(std::span<const RunRecord> records);
/// N_valid / N. Throws UsageError on an empty set.
double answer_rate(std::span<const RunRecord> records);

/// (a - b) / b. Throws DomainError when b is zero.
double relative_improvement(double a, double b);

enum class GroupField { task, model, condition, strategy, format, k, separator, bin };

const char* to_string(GroupField field);
GroupField parse_group_field(std::string_view text);
std::string group_value(const RunRecord& record, GroupField field);

struct AggregateStats {
    std::vector<std::pair<std::string, std::string>> key;
    std::size_t runs = 0;
    /// Records per run (samples in the group).
    double n_per_run = 0.0;
    double accuracy_mean = 0.0;
    std::optional<double> accuracy_std;  // absent with fewer than 2 runs
    double answer_rate_mean = 0.0;
    std::optional<double> answer_rate_std;
    double correct_mean = 0.0;  // correct answers per run
    std::optional<double> response_tokens_mean;
    std::optional<double> total_tokens_mean;
    /// Optional sample-bootstrap 95% interval on accuracy.
    std::optional<double> ci_low;
    std::optional<double> ci_high;

    std::string get(std::string_view field) const;
    friend bool operator==(const AggregateStats&, const AggregateStats&) = default;
};

struct AggregateOptions {
    std::size_t bootstrap_resamples = 0;
    std::uint64_t bootstrap_seed = 0;
};

/// Per-run metrics first, then mean and sample standard deviation across
/// runs within each group. Output is sorted by key and independent of the
/// input order.
std::vector<AggregateStats> aggregate(std::span<const RunRecord> records,
                                      std::span<const GroupField> group_by,
                                      const AggregateOptions& options = {});

/// Mean / sample std of a list, std absent below two values.
std::pair<double, std::optional<double>> mean_std(std::span<const double> xs);

enum class ReportFormat { md, csv, json };
std::vector<ReportFormat> parse_formats(std::string_view csv);

struct Improvement {
    std::string scope;       // task name or "Average"
    std::string condition;   // best segmented condition
    std::string baseline;    // best unsegmented condition
    double condition_mean = 0.0;
    double baseline_mean = 0.0;
    double relative = 0.0;
    std::string metric;  // "accuracy" or "response_tokens"
};

struct Report {
    std::vector<AggregateStats> by_task;  // task x condition
    std::vector<AggregateStats> average;  // condition, macro-averaged over tasks per run
    std::vector<AggregateStats> by_bin;   // task x bin x condition (repetition tables)
    std::vector<Improvement> improvements;
    std::vector<std::string> warnings;
};

Report build_report(std::span<const RunRecord> records, const AggregateOptions& options = {});

/// Recomputes every improvement from the reported means; returns the
/// mismatches (empty when self-consistent).
std::vector<std::string> check_consistency(const Report& report);

std::string render_markdown(const Report& report);
std::string render_csv(std::span<const AggregateStats> stats);
std::vector<AggregateStats> parse_csv(std::string_view text);
nlohmann::ordered_json report_to_json(const Report& report);
nlohmann::ordered_json stats_to_json(const AggregateStats& stats);

/// Writes report.md / report.csv / report.json and plots/*.json into `out_dir`.
void emit_report(const Report& report, std::span<const ReportFormat> formats,
                 const std::filesystem::path& out_dir);

/// Plot-data document {title, x_label, y_label, x, series:[{name, y}]}.
nlohmann::ordered_json plot_data(std::string title, std::string x_label, std::string y_label,
                                 const std::vector<std::string>& x,
                                 const std::vector<std::pair<std::string, std::vector<double>>>& series);

}  // namespace sepseq
