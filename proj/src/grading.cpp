#include "sepseq/grading.hpp"

#include <cctype>
#include <vector>

#include <fmt/core.h>

#include "sepseq/errors.hpp"

namespace sepseq {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

struct Token {
    std::size_t begin;
    std::size_t end;
};

// Standalone numbers: -?\d+(\.\d+)? not glued to letters on either side.
std::vector<Token> number_tokens(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_digit(s[i])) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        while (i < s.size() && is_digit(s[i])) ++i;
        if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
            ++i;
            while (i < s.size() && is_digit(s[i])) ++i;
        }
        if (begin > 0 && s[begin - 1] == '-' && (begin < 2 || !is_alnum(s[begin - 2]))) --begin;
        const bool glued_left = begin > 0 && (is_alnum(s[begin - 1]) || s[begin - 1] == '.');
        const bool glued_right = i < s.size() && is_alnum(s[i]);
        if (!glued_left && !glued_right) out.push_back({begin, i});
    }
    return out;
}

// Standalone letters A-H. A capital "A" followed by a space and a lowercase
// word reads as the article, not an option.
std::vector<Token> letter_tokens(std::string_view s, bool allow_lowercase) {
    std::vector<Token> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (allow_lowercase) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (c < 'A' || c > 'H') continue;
        if (i > 0 && is_alnum(s[i - 1])) continue;
        if (i + 1 < s.size() && is_alnum(s[i + 1])) continue;
        if (s[i] == 'A' && i + 2 < s.size() && s[i + 1] == ' ' &&
            std::islower(static_cast<unsigned char>(s[i + 2]))) {
            continue;
        }
        out.push_back({i, i + 1});
    }
    return out;
}

std::optional<Token> last_array(std::string_view s) {
    const auto close = s.rfind(']');
    if (close == std::string_view::npos) return std::nullopt;
    const auto open = s.rfind('[', close);
    if (open == std::string_view::npos) return std::nullopt;
    return Token{open, close + 1};
}

std::optional<Token> first_array(std::string_view s) {
    const auto open = s.find('[');
    if (open == std::string_view::npos) return std::nullopt;
    const auto close = s.find(']', open);
    if (close == std::string_view::npos) return std::nullopt;
    return Token{open, close + 1};
}

// Start of the value after the last "answer:" marker (case-insensitive,
// markdown emphasis tolerated), and the end of that line.
std::optional<Token> answer_line(std::string_view s) {
    std::string lower(s);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::size_t pos = lower.size();
    while (pos > 0) {
        const auto at = lower.rfind("answer", pos - 1);
        if (at == std::string::npos) break;
        std::size_t j = at + 6;
        while (j < lower.size() && (lower[j] == '*' || lower[j] == ' ')) ++j;
        if (j < lower.size() && lower[j] == ':') {
            ++j;
            auto end = lower.find('\n', j);
            if (end == std::string::npos) end = lower.size();
            return Token{j, end};
        }
        if (at == 0) break;
        pos = at;
    }
    return std::nullopt;
}

ExtractedAnswer make(AnswerKind kind, std::string_view text, Token t) {
    ExtractedAnswer a;
    a.kind = kind;
    a.value = std::string(text.substr(t.begin, t.end - t.begin));
    a.span_begin = t.begin;
    a.span_end = t.end;
    return a;
}

ExtractedAnswer typed_number(std::string_view text, Token t) {
    const auto v = text.substr(t.begin, t.end - t.begin);
    return make(v.find('.') == std::string_view::npos ? AnswerKind::integer : AnswerKind::decimal,
                text, t);
}

std::optional<ExtractedAnswer> scan(std::string_view text, std::size_t offset, std::size_t end,
                                    AnswerKind kind, bool from_answer_line) {
    const auto window = text.substr(offset, end - offset);
    auto shift = [offset](Token t) { return Token{t.begin + offset, t.end + offset}; };
    switch (kind) {
        case AnswerKind::integer:
        case AnswerKind::decimal: {
            auto toks = number_tokens(window);
            if (toks.empty()) return std::nullopt;
            return typed_number(text, shift(from_answer_line ? toks.front() : toks.back()));
        }
        case AnswerKind::option_letter: {
            auto toks = letter_tokens(window, from_answer_line);
            if (toks.empty()) return std::nullopt;
            auto a = make(kind, text, shift(from_answer_line ? toks.front() : toks.back()));
            a.value = std::string(1, static_cast<char>(std::toupper(
                                         static_cast<unsigned char>((*a.value)[0]))));
            return a;
        }
        case AnswerKind::array_text: {
            auto t = from_answer_line ? first_array(window) : last_array(window);
            if (!t) return std::nullopt;
            return make(kind, text, shift(*t));
        }
        case AnswerKind::none:
            break;
    }
    return std::nullopt;
}

}  // namespace

const char* to_string(AnswerKind kind) {
    switch (kind) {
        case AnswerKind::integer: return "integer";
        case AnswerKind::decimal: return "decimal";
        case AnswerKind::option_letter: return "option_letter";
        case AnswerKind::array_text: return "array_text";
        case AnswerKind::none: return "none";
    }
    return "none";
}

AnswerKind parse_answer_kind(std::string_view text) {
    for (auto k : {AnswerKind::integer, AnswerKind::decimal, AnswerKind::option_letter,
                   AnswerKind::array_text, AnswerKind::none}) {
        if (text == to_string(k)) return k;
    }
    throw DataError(fmt::format("unknown answer kind '{}'", text));
}

AnswerKind expected_kind(TaskType task) {
    if (is_choice_task(task)) return AnswerKind::option_letter;
    if (task == TaskType::repetition) return AnswerKind::array_text;
    return AnswerKind::integer;
}

const char* to_string(GradeReason reason) {
    switch (reason) {
        case GradeReason::matched: return "matched";
        case GradeReason::wrong_value: return "wrong_value";
        case GradeReason::no_answer: return "no_answer";
        case GradeReason::format_violation: return "format_violation";
        case GradeReason::execution_failed: return "execution_failed";
    }
    return "no_answer";
}

GradeReason parse_grade_reason(std::string_view text) {
    for (auto r : {GradeReason::matched, GradeReason::wrong_value, GradeReason::no_answer,
                   GradeReason::format_violation, GradeReason::execution_failed}) {
        if (text == to_string(r)) return r;
    }
    throw DataError(fmt::format("unknown grade reason '{}'", text));
}

ExtractedAnswer extract_answer(std::string_view response, TaskType task) {
    const AnswerKind kind = expected_kind(task);
    std::optional<ExtractedAnswer> found;
    if (auto line = answer_line(response)) {
        found = scan(response, line->begin, line->end, kind, true);
    }
    if (!found) found = scan(response, 0, response.size(), kind, false);
    if (!found) return {};

    if (found->kind == AnswerKind::array_text) {
        std::string_view whole = response;
        if (!whole.empty() && whole.back() == '\n') whole.remove_suffix(1);
        found->exact = found->span_begin == 0 && found->span_end == whole.size();
    }
    return *found;
}

namespace {

// Integer value of canonical or zero-fraction decimal text; nullopt otherwise.
std::optional<long long> integral_value(std::string_view v) {
    const auto dot = v.find('.');
    auto int_part = v.substr(0, dot);
    if (dot != std::string_view::npos) {
        for (char c : v.substr(dot + 1)) {
            if (c != '0') return std::nullopt;
        }
    }
    if (int_part.empty() || int_part == "-") return std::nullopt;
    try {
        std::size_t used = 0;
        const long long x = std::stoll(std::string(int_part), &used);
        if (used != int_part.size()) return std::nullopt;
        return x;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

GradeResult grade(const ExtractedAnswer& extracted, std::string_view gold, TaskType task) {
    if (!extracted.present() || !extracted.value) return {false, false, GradeReason::no_answer};
    const std::string& value = *extracted.value;

    auto verdict = [](bool ok) {
        return GradeResult{true, ok, ok ? GradeReason::matched : GradeReason::wrong_value};
    };

    switch (extracted.kind) {
        case AnswerKind::integer:
        case AnswerKind::decimal: {
            if (is_choice_task(task) || task == TaskType::repetition) {
                return {true, false, GradeReason::format_violation};
            }
            const auto got = integral_value(value);
            const auto want = integral_value(gold);
            if (got && want) return verdict(*got == *want);
            // Non-integral decimals compare by their 3-digit canonical rendering.
            try {
                const auto a = fmt::format("{:.3f}", std::stod(value));
                const auto b = fmt::format("{:.3f}", std::stod(std::string(gold)));
                return verdict(a == b);
            } catch (const std::exception&) {
                return verdict(false);
            }
        }
        case AnswerKind::option_letter: {
            if (gold.size() != 1 || value.size() != 1) return verdict(false);
            return verdict(std::toupper(static_cast<unsigned char>(gold[0])) ==
                           std::toupper(static_cast<unsigned char>(value[0])));
        }
        case AnswerKind::array_text: {
            if (!extracted.exact) return {true, false, GradeReason::format_violation};
            return verdict(value == gold);
        }
        case AnswerKind::none:
            break;
    }
    return {false, false, GradeReason::no_answer};
}

}  // namespace sepseq
