#include "sepseq/records.hpp"

#include <cctype>

#include <fmt/core.h>

#include "sepseq/errors.hpp"

namespace sepseq {

using ojson = nlohmann::ordered_json;

namespace {

template <typename T>
ojson opt(const std::optional<T>& v) {
    return v ? ojson(*v) : ojson(nullptr);
}

template <typename T>
std::optional<T> get_opt(const ojson& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<T>();
}

}  // namespace

std::string Condition::label() const {
    if (mode == FormatMode::vanilla) return fmt::format("{}/vanilla", to_string(strategy));
    return fmt::format("{}/sepseq/k={}/{}", to_string(strategy), segment_size, separator);
}

ojson to_json(const TokenUsage& u) {
    ojson j;
    j["prompt_tokens"] = opt(u.prompt_tokens);
    j["completion_tokens"] = opt(u.completion_tokens);
    j["total_tokens"] = opt(u.total_tokens);
    j["estimated"] = u.estimated;
    return j;
}

TokenUsage usage_from_json(const ojson& j) {
    TokenUsage u;
    u.prompt_tokens = get_opt<std::int64_t>(j, "prompt_tokens");
    u.completion_tokens = get_opt<std::int64_t>(j, "completion_tokens");
    u.total_tokens = get_opt<std::int64_t>(j, "total_tokens");
    u.estimated = j.value("estimated", false);
    return u;
}

ojson to_json(const Condition& c) {
    ojson j;
    j["model"] = c.model;
    j["strategy"] = to_string(c.strategy);
    j["format"] = to_string(c.mode);
    j["k"] = c.segment_size;
    j["separator"] = c.separator;
    return j;
}

Condition condition_from_json(const ojson& j) {
    Condition c;
    c.model = j.at("model").get<std::string>();
    c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    c.mode = parse_format_mode(j.at("format").get<std::string>());
    c.segment_size = j.at("k").get<std::size_t>();
    c.separator = j.at("separator").get<std::string>();
    return c;
}

ojson to_json(const RunRecord& r) {
    ojson j;
    j["sample_id"] = r.sample_id;
    j["run"] = r.run_index;
    j["task"] = to_string(r.task);
    j["bin"] = r.bin ? ojson(to_string(*r.bin)) : ojson(nullptr);
    j["condition"] = to_json(r.condition);
    j["response"] = r.response;
    j["finish_reason"] = r.finish_reason;
    j["usage"] = to_json(r.usage);
    j["latency_ms"] = r.latency_ms;
    j["attempts"] = r.attempts;
    j["error"] = opt(r.error);
    j["program_output"] = opt(r.program_output);
    j["program_error"] = opt(r.program_error);
    j["input_chars"] = r.input_chars;
    j["vanilla_input_chars"] = r.vanilla_input_chars;
    j["gold"] = r.gold;
    if (r.extracted) {
        ojson e;
        e["kind"] = to_string(r.extracted->kind);
        e["value"] = opt(r.extracted->value);
        e["span"] = {r.extracted->span_begin, r.extracted->span_end};
        e["exact"] = r.extracted->exact;
        j["extracted"] = std::move(e);
    }
    if (r.grade) {
        j["valid"] = r.grade->valid;
        j["correct"] = r.grade->correct;
        j["reason"] = to_string(r.grade->reason);
    }
    return j;
}

RunRecord record_from_json(const ojson& j) {
    RunRecord r;
    try {
        r.sample_id = j.at("sample_id").get<std::string>();
        r.run_index = j.at("run").get<std::size_t>();
        r.task = parse_task(j.at("task").get<std::string>());
        if (j.contains("bin") && !j["bin"].is_null()) r.bin = parse_bin(j["bin"].get<std::string>());
        r.condition = condition_from_json(j.at("condition"));
        r.response = j.value("response", std::string{});
        r.finish_reason = j.value("finish_reason", std::string{});
        if (j.contains("usage")) r.usage = usage_from_json(j["usage"]);
        r.latency_ms = j.value("latency_ms", 0.0);
        r.attempts = j.value("attempts", 0);
        r.error = get_opt<std::string>(j, "error");
        r.program_output = get_opt<std::string>(j, "program_output");
        r.program_error = get_opt<std::string>(j, "program_error");
        r.input_chars = j.value("input_chars", std::size_t{0});
        r.vanilla_input_chars = j.value("vanilla_input_chars", std::size_t{0});
        r.gold = j.value("gold", std::string{});
        if (j.contains("extracted")) {
            const auto& e = j["extracted"];
            ExtractedAnswer a;
            a.kind = parse_answer_kind(e.at("kind").get<std::string>());
            a.value = get_opt<std::string>(e, "value");
            a.span_begin = e.at("span").at(0).get<std::size_t>();
            a.span_end = e.at("span").at(1).get<std::size_t>();
            a.exact = e.value("exact", false);
            r.extracted = a;
        }
        if (j.contains("valid")) {
            GradeResult g;
            g.valid = j.at("valid").get<bool>();
            g.correct = j.at("correct").get<bool>();
            g.reason = parse_grade_reason(j.at("reason").get<std::string>());
            r.grade = g;
        }
    } catch (const ojson::exception& e) {
        throw DataError(fmt::format("malformed run record: {}", e.what()));
    } catch (const UsageError& e) {
        throw DataError(fmt::format("malformed run record: {}", e.what()));
    }
    return r;
}

std::int64_t estimate_tokens(std::string_view text) {
    std::int64_t n = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c));
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

}  // namespace sepseq
