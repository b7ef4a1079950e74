#pragma once

// Benchmark corpora: deterministic synthetic generation, real-data loading
// and the brute-force answer oracles.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sepseq/format.hpp"

namespace sepseq {

enum class TaskType {
    max_int,
    min_int,
    max_float,
    min_float,
    indexing,
    counting,
    repetition,
    number_string,
    number_list,
    stock,
    weather,
};

const char* to_string(TaskType task);
TaskType parse_task(std::string_view text);
const std::vector<TaskType>& all_tasks();

/// Tasks whose samples are produced by generate().
bool is_generated(TaskType task);
/// Multiple-choice tasks answered with an option letter.
bool is_choice_task(TaskType task);

enum class LengthBin { S, M, L, XL, XXL };

struct BinBounds {
    std::size_t min_len;  // inclusive
    std::size_t max_len;  // inclusive
};

const char* to_string(LengthBin bin);
LengthBin parse_bin(std::string_view text);
BinBounds bounds(LengthBin bin);
/// "S: 2-32" style label used in report tables.
std::string bin_label(LengthBin bin);
std::optional<LengthBin> bin_for_length(std::size_t n);
/// Comma-separated list, e.g. "S,M,L,XL".
std::vector<LengthBin> parse_bins(std::string_view csv);

struct Sample {
    std::string id;
    TaskType task = TaskType::counting;
    std::optional<LengthBin> bin;
    std::optional<NumericalSequence> sequence;
    /// Real-data payload (string for number_string, array otherwise).
    std::optional<nlohmann::ordered_json> struct_data;
    std::string question;
    std::string gold_answer;
    std::uint64_t seed = 0;
};

struct GenSpec {
    TaskType task = TaskType::counting;
    std::size_t per_bin = 50;
    std::vector<LengthBin> bins{LengthBin::S, LengthBin::M, LengthBin::L, LengthBin::XL};
    std::uint64_t rng_seed = 0;
    /// Inclusive integer range for max_int / min_int.
    std::int64_t int_min = 0;
    std::int64_t int_max = 9;
    /// Decimal values are drawn as integer mantissas, uniform in
    /// [decimal_min, decimal_max] and scaled by 10^-decimal_precision.
    std::int64_t decimal_min = -10000;
    std::int64_t decimal_max = 10000;
    int decimal_precision = 3;
    /// Probability of a 1 at each position of a binary sequence.
    double one_probability = 0.25;
    /// Prefix for sample ids; exemplar pools use a distinct one.
    std::string id_prefix;
};

/// Default repetition spec: five bins, 50 each, 3-decimal values in [-10, 10].
GenSpec repetition_spec(std::uint64_t seed);

/// Pure function of the spec. Throws UsageError for non-generated tasks.
std::vector<Sample> generate(const GenSpec& spec);

/// Gold answer by exhaustive scan. Indices are 0-based; extremum ties
/// resolve to the first occurrence; indexing on an all-zero input is "-1";
/// repetition returns the canonical "[a, b, c]" rendering.
std::string oracle(TaskType task, const NumericalSequence& seq);

/// "[a, b, c]" with ", " joints and each value's canonical text.
std::string canonical_array(const NumericalSequence& seq);

/// Number of maximal runs of consecutive ASCII digits.
std::size_t count_digit_runs(std::string_view text);

std::string default_question(TaskType task);

/// Loads D_real records (JSON array or one object per line). Throws DataError
/// naming the offending record id on schema violations.
std::vector<Sample> load_real(const std::filesystem::path& path, TaskType task);

/// Ids of number_string samples whose gold disagrees with count_digit_runs.
std::vector<std::string> audit_number_string(const std::vector<Sample>& samples);

// Corpus files: one JSON object per line.
nlohmann::ordered_json sample_to_json(const Sample& sample);
Sample sample_from_json(const nlohmann::ordered_json& record);
void write_corpus(std::ostream& out, const std::vector<Sample>& samples);
void write_corpus(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> read_corpus(const std::filesystem::path& path);

}  // namespace sepseq
