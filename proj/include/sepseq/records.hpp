#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "sepseq/datagen.hpp"
#include "sepseq/grading.hpp"
#include "sepseq/prompting.hpp"

namespace sepseq {

struct TokenUsage {
    std::optional<std::int64_t> prompt_tokens;
    std::optional<std::int64_t> completion_tokens;
    std::optional<std::int64_t> total_tokens;
    /// Counts came from the whitespace fallback, not the endpoint.
    bool estimated = false;

    bool known() const { return completion_tokens.has_value(); }
};

/// Everything that distinguishes one experimental arm from another.
struct Condition {
    std::string model;
    PromptStrategy strategy = PromptStrategy::vanilla;
    FormatMode mode = FormatMode::sepseq;
    std::size_t segment_size = 16;
    std::string separator = "LF";

    /// "vanilla/sepseq/k=16/LF"; the k and separator are omitted for the
    /// unsegmented format, where they have no effect.
    std::string label() const;

    friend bool operator==(const Condition&, const Condition&) = default;
};

/// One model interaction and, once graded, its verdict.
struct RunRecord {
    std::string sample_id;
    std::size_t run_index = 0;
    TaskType task = TaskType::counting;
    std::optional<LengthBin> bin;
    Condition condition;

    std::string response;
    std::string finish_reason;
    TokenUsage usage;
    double latency_ms = 0.0;
    int attempts = 0;
    /// Transport failure message, when the request never succeeded.
    std::optional<std::string> error;

    /// PoT only: stdout of the executed program, or why it failed.
    std::optional<std::string> program_output;
    std::optional<std::string> program_error;

    std::size_t input_chars = 0;
    std::size_t vanilla_input_chars = 0;

    std::string gold;
    std::optional<ExtractedAnswer> extracted;
    std::optional<GradeResult> grade;

    bool failed() const { return error.has_value(); }
};

nlohmann::ordered_json to_json(const TokenUsage& usage);
TokenUsage usage_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const Condition& c);
Condition condition_from_json(const nlohmann::ordered_json& j);

/// Graded-record form: the run record plus {extracted, valid, correct, reason}.
nlohmann::ordered_json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::ordered_json& j);

/// Whitespace-separated token count, the fallback when usage is missing.
std::int64_t estimate_tokens(std::string_view text);

}  // namespace sepseq
