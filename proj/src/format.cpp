#include "sepseq/format.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

#include <fmt/core.h>

#include "sepseq/errors.hpp"

namespace sepseq {

namespace {

constexpr int kMaxDigits = 18;

std::int64_t pow10(int p) {
    std::int64_t r = 1;
    for (int i = 0; i < p; ++i) r *= 10;
    return r;
}

bool is_number_char(char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '+';
}

bool has_number_char(std::string_view s) {
    return std::any_of(s.begin(), s.end(), is_number_char);
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

NumberValue NumberValue::from_integer(std::int64_t value) {
    return from_scaled(value, 0);
}

NumberValue NumberValue::from_scaled(std::int64_t mantissa, int precision) {
    if (precision < 0 || precision > kMaxDigits) {
        throw UsageError(fmt::format("precision {} out of range", precision));
    }
    if (mantissa == std::numeric_limits<std::int64_t>::min()) {
        throw UsageError("mantissa out of range");
    }
    const std::int64_t scale = pow10(precision);
    const std::int64_t mag = mantissa < 0 ? -mantissa : mantissa;
    std::string text = mantissa < 0 ? "-" : "";
    text += std::to_string(mag / scale);
    if (precision > 0) {
        text += '.';
        text += fmt::format("{:0{}}", mag % scale, precision);
    }
    return NumberValue(std::move(text), mantissa, precision);
}

NumberValue NumberValue::parse(std::string_view text) {
    std::size_t i = 0;
    const bool negative = !text.empty() && text[0] == '-';
    if (negative) ++i;

    const std::size_t int_begin = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t int_len = i - int_begin;
    if (int_len == 0) throw ParseError(fmt::format("malformed number '{}'", text), int_begin);
    if (int_len > 1 && text[int_begin] == '0') {
        throw ParseError(fmt::format("leading zero in '{}'", text), int_begin);
    }

    int precision = 0;
    if (i < text.size() && text[i] == '.') {
        ++i;
        const std::size_t frac_begin = i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        precision = static_cast<int>(i - frac_begin);
        if (precision == 0) throw ParseError(fmt::format("empty fraction in '{}'", text), i);
    }
    if (i != text.size()) throw ParseError(fmt::format("malformed number '{}'", text), i);
    if (static_cast<int>(int_len) + precision > kMaxDigits) {
        throw ParseError(fmt::format("number '{}' has too many digits", text), 0);
    }

    std::int64_t mag = 0;
    for (char c : text) {
        if (std::isdigit(static_cast<unsigned char>(c))) mag = mag * 10 + (c - '0');
    }
    if (negative && mag == 0) throw ParseError(fmt::format("negative zero '{}'", text), 0);
    return NumberValue(std::string(text), negative ? -mag : mag, precision);
}

double NumberValue::to_double() const {
    return static_cast<double>(mantissa_) / static_cast<double>(pow10(precision_));
}

NumericalSequence::NumericalSequence(std::vector<NumberValue> values) : values_(std::move(values)) {
    if (values_.empty()) throw UsageError("numerical sequence must not be empty");
    precision_ = values_.front().precision();
    for (const auto& v : values_) {
        if (v.precision() != precision_) {
            throw UsageError(fmt::format("mixed number precision: '{}' vs {} digits", v.rendered(),
                                         precision_));
        }
    }
}

NumericalSequence NumericalSequence::from_integers(std::span<const std::int64_t> values) {
    return from_scaled(values, 0);
}

NumericalSequence NumericalSequence::from_scaled(std::span<const std::int64_t> mantissas,
                                                 int precision) {
    std::vector<NumberValue> out;
    out.reserve(mantissas.size());
    for (auto m : mantissas) out.push_back(NumberValue::from_scaled(m, precision));
    return NumericalSequence(std::move(out));
}

SeparatorSymbol SeparatorSymbol::custom(std::string text) {
    if (text.empty()) throw UsageError("custom separator text must not be empty");
    if (has_number_char(text)) {
        throw UsageError("custom separator text must not contain digits, signs or '.'");
    }
    return {SeparatorName::custom, std::move(text)};
}

SeparatorSymbol SeparatorSymbol::parse(std::string_view spec) {
    const std::string name = upper(spec);
    if (name == "LF") return lf();
    if (name == "CR") return cr();
    if (name == "CRLF") return crlf();
    if (name == "BACKSLASH") return backslash();
    constexpr std::string_view prefix = "custom:";
    if (spec.size() > prefix.size() && upper(spec.substr(0, prefix.size())) == "CUSTOM:") {
        return custom(std::string(spec.substr(prefix.size())));
    }
    throw UsageError(fmt::format("unknown separator '{}' (LF, CR, CRLF, BACKSLASH, custom:<text>)",
                                 spec));
}

std::string SeparatorSymbol::label() const {
    switch (name) {
        case SeparatorName::lf: return "LF";
        case SeparatorName::cr: return "CR";
        case SeparatorName::crlf: return "CRLF";
        case SeparatorName::backslash: return "BACKSLASH";
        case SeparatorName::custom: return "custom:" + text;
    }
    return "custom:" + text;
}

const char* to_string(FormatMode mode) {
    return mode == FormatMode::vanilla ? "vanilla" : "sepseq";
}

FormatMode parse_format_mode(std::string_view text) {
    if (text == "vanilla") return FormatMode::vanilla;
    if (text == "sepseq") return FormatMode::sepseq;
    throw UsageError(fmt::format("unknown format mode '{}' (vanilla, sepseq)", text));
}

void FormatConfig::validate() const {
    if (segment_size == 0) throw UsageError("segment size k must be >= 1");
    if (delimiter.empty()) throw UsageError("delimiter must not be empty");
    if (separator.text.empty()) throw UsageError("separator must not be empty");
    if (delimiter == separator.text) throw UsageError("delimiter and separator must differ");
    if (has_number_char(delimiter) || has_number_char(separator.text)) {
        throw UsageError("delimiter and separator must not contain digits, signs or '.'");
    }
}

std::vector<std::size_t> boundary_slots(std::size_t n, std::size_t k) {
    std::vector<std::size_t> slots;
    if (k == 0) return slots;
    for (std::size_t i = k; i < n; i += k) slots.push_back(i);
    return slots;
}

std::string join_items(std::span<const std::string> items, const FormatConfig& cfg) {
    if (items.empty()) throw UsageError("cannot format an empty sequence");
    cfg.validate();
    std::size_t total = 0;
    for (const auto& it : items) {
        if (it.empty() || it.find(cfg.delimiter) != std::string::npos ||
            (cfg.mode == FormatMode::sepseq && it.find(cfg.separator.text) != std::string::npos)) {
            throw UsageError(fmt::format("item '{}' is empty or contains the delimiter/separator", it));
        }
        total += it.size() + cfg.separator.text.size();
    }
    std::string out;
    out.reserve(total);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) {
            const bool boundary = cfg.mode == FormatMode::sepseq && i % cfg.segment_size == 0;
            out += boundary ? cfg.separator.text : cfg.delimiter;
        }
        out += items[i];
    }
    return out;
}

namespace {

std::vector<std::string> render_all(const NumericalSequence& seq) {
    std::vector<std::string> items;
    items.reserve(seq.size());
    for (const auto& v : seq.values()) items.push_back(v.rendered());
    return items;
}

}  // namespace

std::string format_vanilla(const NumericalSequence& seq, std::string_view delimiter) {
    FormatConfig cfg;
    cfg.delimiter = std::string(delimiter);
    cfg.mode = FormatMode::vanilla;
    if (cfg.delimiter == cfg.separator.text) cfg.separator = SeparatorSymbol::cr();
    const auto items = render_all(seq);
    return join_items(items, cfg);
}

std::string format_sepseq(const NumericalSequence& seq, const FormatConfig& cfg) {
    if (cfg.mode != FormatMode::sepseq) throw UsageError("format_sepseq requires mode=sepseq");
    const auto items = render_all(seq);
    return join_items(items, cfg);
}

std::string format_sequence(const NumericalSequence& seq, const FormatConfig& cfg) {
    if (cfg.mode == FormatMode::vanilla) {
        cfg.validate();
        return format_vanilla(seq, cfg.delimiter);
    }
    return format_sepseq(seq, cfg);
}

namespace {

// Length of the boundary marker at `pos`, or 0. The longer of the two texts
// is tried first so that e.g. "\r" as delimiter and "\r\n" as separator do
// not shadow each other.
std::size_t match_gap(std::string_view text, std::size_t pos, const FormatConfig& cfg) {
    std::string_view a = cfg.delimiter;
    std::string_view b = cfg.mode == FormatMode::sepseq ? std::string_view(cfg.separator.text)
                                                        : std::string_view{};
    if (a.size() < b.size()) std::swap(a, b);
    for (auto candidate : {a, b}) {
        if (!candidate.empty() && text.substr(pos, candidate.size()) == candidate) {
            return candidate.size();
        }
    }
    return 0;
}

}  // namespace

std::vector<std::string> split_items(std::string_view text, const FormatConfig& cfg) {
    if (text.empty()) throw ParseError("empty input", 0);
    cfg.validate();
    std::vector<std::string> items;
    std::size_t start = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t gap = match_gap(text, pos, cfg);
        if (gap == 0) {
            ++pos;
            continue;
        }
        if (pos == start) throw ParseError("empty item", pos);
        items.emplace_back(text.substr(start, pos - start));
        pos += gap;
        start = pos;
    }
    if (start == text.size()) throw ParseError("trailing delimiter", start);
    items.emplace_back(text.substr(start));
    return items;
}

NumericalSequence parse_formatted(std::string_view text, const FormatConfig& cfg) {
    if (text.empty()) throw ParseError("empty input", 0);
    cfg.validate();

    std::vector<NumberValue> values;
    std::size_t pos = 0;
    while (true) {
        const std::size_t begin = pos;
        while (pos < text.size() && is_number_char(text[pos])) ++pos;
        if (pos == begin) {
            throw ParseError(pos < text.size() ? "unexpected character run" : "missing number",
                             pos);
        }
        try {
            values.push_back(NumberValue::parse(text.substr(begin, pos - begin)));
        } catch (const ParseError& e) {
            throw ParseError(fmt::format("malformed number '{}'", text.substr(begin, pos - begin)),
                             begin + e.offset());
        }
        if (values.back().precision() != values.front().precision()) {
            throw ParseError("mixed number precision", begin);
        }
        if (pos == text.size()) break;
        const std::size_t gap = match_gap(text, pos, cfg);
        if (gap == 0) throw ParseError("unknown delimiter run", pos);
        pos += gap;
    }
    return NumericalSequence(std::move(values));
}

}  // namespace sepseq
