#pragma once

// RunConfig: the JSON document that fully describes an experiment. Flags on
// the command line override individual keys; the resolved document is
// echoed into every run directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sepseq/datagen.hpp"
#include "sepseq/exec.hpp"
#include "sepseq/format.hpp"
#include "sepseq/llm_client.hpp"
#include "sepseq/prompting.hpp"

namespace sepseq {

/// One corpus source. Exactly one of `corpus`, `path` or `generate` is used.
struct DatasetSpec {
    enum class Kind { corpus, real, generate };
    Kind kind = Kind::generate;
    std::optional<TaskType> task;       // required for real and generate
    std::filesystem::path path;         // corpus / real
    GenSpec gen;                        // generate
};

struct RunConfig {
    ModelEndpoint endpoint;
    std::vector<PromptStrategy> strategies{PromptStrategy::vanilla};
    std::vector<FormatMode> modes{FormatMode::sepseq};
    std::size_t segment_size = 16;
    std::string separator = "LF";
    std::string delimiter = " ";
    std::size_t runs = 10;
    std::size_t concurrency = 8;
    double temperature = 0.0;
    int max_tokens = 4096;
    double abort_failure_fraction = 0.5;
    double min_request_interval_s = 0.0;
    RetryPolicy retry;
    std::vector<DatasetSpec> datasets;
    std::filesystem::path output_dir = "runs/latest";
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> templates_dir;
    /// Extra exemplar corpora for one-shot prompting (real-data tasks).
    std::vector<std::filesystem::path> icl_pools;
    ExecSpec exec;
    std::size_t exec_concurrency = 4;
    std::size_t bootstrap_resamples = 0;

    FormatConfig format(FormatMode mode) const;
    /// The endpoint check is skipped when a backend is injected directly.
    void validate(bool check_endpoint = true) const;
};

/// Parses a config document. Unknown keys are a usage error so typos do not
/// silently fall back to defaults. Relative paths resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::ordered_json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved document. Contains the key's environment variable name,
/// never the key itself.
nlohmann::ordered_json config_to_json(const RunConfig& config);

/// "vanilla", "cot", "icl", "pot", or "sepseq" (vanilla prompt on the
/// segmented format); comma-separated lists allowed. Updates both lists.
void apply_strategy_flag(RunConfig& config, std::string_view value);

}  // namespace sepseq
