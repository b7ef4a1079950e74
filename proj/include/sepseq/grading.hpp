#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "sepseq/datagen.hpp"

namespace sepseq {

enum class AnswerKind { integer, decimal, option_letter, array_text, none };

const char* to_string(AnswerKind kind);
AnswerKind parse_answer_kind(std::string_view text);

/// The answer kind a task's responses are scanned for.
AnswerKind expected_kind(TaskType task);

struct ExtractedAnswer {
    AnswerKind kind = AnswerKind::none;
    std::optional<std::string> value;
    std::size_t span_begin = 0;
    std::size_t span_end = 0;
    /// Array answers only: the whole response, minus one trailing newline,
    /// is exactly the extracted array.
    bool exact = false;

    bool present() const { return kind != AnswerKind::none; }
};

enum class GradeReason { matched, wrong_value, no_answer, format_violation, execution_failed };

const char* to_string(GradeReason reason);
GradeReason parse_grade_reason(std::string_view text);

struct GradeResult {
    bool valid = false;
    bool correct = false;
    GradeReason reason = GradeReason::no_answer;
};

/// Takes the last "Answer:" line when it holds a value of the expected kind,
/// otherwise the last standalone token of that kind anywhere in the text.
ExtractedAnswer extract_answer(std::string_view response, TaskType task);

GradeResult grade(const ExtractedAnswer& extracted, std::string_view gold, TaskType task);

/// A PoT program that failed to run counts as no answer.
inline GradeResult execution_failed() { return {false, false, GradeReason::execution_failed}; }

}  // namespace sepseq
