#pragma once

// End-to-end orchestration behind the CLI: corpus assembly, prompting,
// batch execution, grading and reporting, plus the sweep and repetition
// experiments.
//
// Run directory layout:
//   config.json        resolved RunConfig (no credentials)
//   corpus.jsonl       every evaluated sample
//   corpus.sha256      hex digest of corpus.jsonl
//   transcripts.jsonl  one record per request, in completion order
//   graded.jsonl       graded records sorted by condition, sample, run
//   report.{md,csv,json}, plots/*.json

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sepseq/config.hpp"
#include "sepseq/datagen.hpp"
#include "sepseq/llm_client.hpp"
#include "sepseq/metrics.hpp"
#include "sepseq/records.hpp"

namespace sepseq {

std::string sha256_hex(std::string_view bytes);

/// Samples of every dataset in config order. Throws UsageError on duplicate ids.
std::vector<Sample> build_corpus(const RunConfig& config);

/// Synthetic exemplars plus every configured pool file (corpus format).
ExemplarPool build_exemplar_pool(const RunConfig& config);

/// Attaches gold answers from the corpus and grades. PoT records are graded
/// on the stored program output and never re-executed. Output is sorted by
/// (condition label, sample id, run).
std::vector<RunRecord> grade_records(std::vector<RunRecord> raw, const std::vector<Sample>& corpus);

void write_records(const std::filesystem::path& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records(const std::filesystem::path& path);

struct RunOutcome {
    std::filesystem::path dir;
    std::vector<RunRecord> graded;
    Report report;
};

/// Runs every (strategy, format) condition of the config over its corpus.
/// `backend` replaces the configured endpoint when given (tests).
RunOutcome run_experiment(const RunConfig& config, std::shared_ptr<ChatBackend> backend = nullptr);

/// Re-grades a run directory from transcripts.jsonl and corpus.jsonl
/// (checking the stored hash). Network-free.
std::vector<RunRecord> grade_run_dir(const std::filesystem::path& run_dir);

/// Builds and writes the report for a graded-records file.
Report report_from_graded(const std::filesystem::path& graded, std::span<const ReportFormat> formats,
                          const std::filesystem::path& out_dir, std::size_t bootstrap_resamples = 0);

enum class SweepParam { k, separator };
SweepParam parse_sweep_param(std::string_view text);

struct SweepPoint {
    std::string value;
    std::vector<AggregateStats> by_task;  // sepseq condition only
    double accuracy_mean = 0.0;           // macro average over tasks
};

/// One sub-run per value in <output_dir>/<param>-<value>/, plus a combined
/// sweep.md / sweep.csv and plots/sweep_k.json or plots/separators.json.
std::vector<SweepPoint> run_sweep(const RunConfig& config, SweepParam param,
                                  const std::vector<std::string>& values,
                                  std::shared_ptr<ChatBackend> backend = nullptr);

/// Strict-repetition experiment: the five-bin repetition corpus at
/// temperature 0, reported by length bin.
RunOutcome run_repetition(RunConfig config, std::shared_ptr<ChatBackend> backend = nullptr);

/// Dispersion curve and cross-segment ratio tables as plot data.
void write_attention_math(const std::filesystem::path& out_dir);

}  // namespace sepseq
