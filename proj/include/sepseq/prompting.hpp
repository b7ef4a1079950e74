#pragma once

// Prompt rendering for the four prompting strategies. The numerical payload
// is always produced by the formatter; strategies only change the text around it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sepseq/datagen.hpp"
#include "sepseq/format.hpp"

namespace sepseq {

enum class PromptStrategy { vanilla, cot, icl, pot };

const char* to_string(PromptStrategy strategy);
PromptStrategy parse_strategy(std::string_view text);

struct PromptMetadata {
    std::string sample_id;
    TaskType task = TaskType::counting;
    PromptStrategy strategy = PromptStrategy::vanilla;
    FormatMode mode = FormatMode::sepseq;
    std::size_t segment_size = 16;
    std::string separator;  // SeparatorSymbol::label()
    std::string delimiter;
    std::string template_name;
    /// Character counts of the payload as rendered and in vanilla form.
    std::size_t input_chars = 0;
    std::size_t vanilla_input_chars = 0;
    /// Location of the payload inside user_text.
    std::size_t payload_offset = 0;
    std::size_t payload_length = 0;
    std::string exemplar_id;
};

struct RenderedPrompt {
    std::string system_text;
    std::string user_text;
    PromptMetadata metadata;

    std::string_view payload() const {
        return std::string_view(user_text).substr(metadata.payload_offset, metadata.payload_length);
    }
};

/// Template text with {name} placeholders; "{{" and "}}" are literal braces.
struct TemplateSegment {
    bool placeholder = false;
    std::string text;
};
std::vector<TemplateSegment> parse_template(std::string_view text);

/// Prompt templates read from a directory: `system.txt`, `<strategy>.txt`,
/// and optional `<task>.<strategy>.txt` overrides.
class TemplateSet {
public:
    static TemplateSet load(const std::filesystem::path& dir);
    /// Directory configured at build time.
    static std::filesystem::path default_dir();

    void set(std::string name, std::string text);
    const std::string& system_text() const;
    const std::string* find(std::string_view name) const;
    /// Override for the task if present, else the strategy template.
    std::pair<std::string, const std::string*> lookup(TaskType task, PromptStrategy strategy) const;

private:
    std::map<std::string, std::string> templates_;
};

/// Solved exemplars for one-shot prompting, kept apart from evaluation data.
class ExemplarPool {
public:
    void add(Sample sample);
    bool empty() const { return by_task_.empty(); }
    std::size_t size(TaskType task) const;
    /// One fixed exemplar per (task, seed). Throws UsageError if the pool
    /// holds none for the task.
    const Sample& select(TaskType task, std::uint64_t seed) const;
    bool contains(std::string_view id) const;

    /// Short generated exemplars for every generated task, ids prefixed "icl-".
    static ExemplarPool synthetic(std::uint64_t seed);

private:
    std::map<TaskType, std::vector<Sample>> by_task_;
};

/// Payload text of a sample under a format: the formatted sequence, the
/// item-joined struct data, or the raw string for number_string.
std::string render_payload(const Sample& sample, const FormatConfig& fmt);

class PromptBuilder {
public:
    PromptBuilder(TemplateSet templates, ExemplarPool pool = {}, std::uint64_t seed = 0)
        : templates_(std::move(templates)), pool_(std::move(pool)), seed_(seed) {}

    RenderedPrompt build(const Sample& sample, PromptStrategy strategy,
                         const FormatConfig& fmt) const;

    const ExemplarPool& pool() const { return pool_; }

private:
    std::string render_exemplar(const Sample& exemplar, const FormatConfig& fmt) const;

    TemplateSet templates_;
    ExemplarPool pool_;
    std::uint64_t seed_;
};

}  // namespace sepseq
