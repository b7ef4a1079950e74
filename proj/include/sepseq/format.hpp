#pragma once

// Vanilla and segmented (separator-inserting) text renderings of numerical
// sequences, plus the parser that inverts them.

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sepseq {

/// One number in canonical text form. Integers carry precision 0; decimals
/// carry a fixed count of fractional digits and are stored as a scaled
/// integer so comparisons are exact.
class NumberValue {
public:
    static NumberValue from_integer(std::int64_t value);
    /// `mantissa` / 10^precision, rendered with exactly `precision` digits.
    static NumberValue from_scaled(std::int64_t mantissa, int precision);
    /// Accepts only canonical text: optional '-', no leading zeros except
    /// "0", no "-0", fraction digits present iff precision > 0.
    static NumberValue parse(std::string_view text);

    const std::string& rendered() const noexcept { return text_; }
    std::int64_t mantissa() const noexcept { return mantissa_; }
    int precision() const noexcept { return precision_; }
    bool is_integer() const noexcept { return precision_ == 0; }
    double to_double() const;

    friend bool operator==(const NumberValue& a, const NumberValue& b) {
        return a.precision_ == b.precision_ && a.mantissa_ == b.mantissa_;
    }
    /// Only meaningful between values of equal precision.
    friend std::strong_ordering operator<=>(const NumberValue& a, const NumberValue& b) {
        return a.mantissa_ <=> b.mantissa_;
    }

private:
    NumberValue(std::string text, std::int64_t mantissa, int precision)
        : text_(std::move(text)), mantissa_(mantissa), precision_(precision) {}

    std::string text_;
    std::int64_t mantissa_ = 0;
    int precision_ = 0;
};

enum class NumberKind { integer, decimal };

/// Non-empty, kind-uniform list of numbers.
class NumericalSequence {
public:
    explicit NumericalSequence(std::vector<NumberValue> values);

    static NumericalSequence from_integers(std::span<const std::int64_t> values);
    static NumericalSequence from_scaled(std::span<const std::int64_t> mantissas, int precision);

    const std::vector<NumberValue>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    const NumberValue& operator[](std::size_t i) const { return values_[i]; }
    NumberKind kind() const noexcept {
        return precision_ == 0 ? NumberKind::integer : NumberKind::decimal;
    }
    int precision() const noexcept { return precision_; }

    friend bool operator==(const NumericalSequence&, const NumericalSequence&) = default;

private:
    std::vector<NumberValue> values_;
    int precision_ = 0;
};

enum class SeparatorName { lf, cr, crlf, backslash, custom };

struct SeparatorSymbol {
    SeparatorName name = SeparatorName::lf;
    std::string text = "\n";

    static SeparatorSymbol lf() { return {SeparatorName::lf, "\n"}; }
    static SeparatorSymbol cr() { return {SeparatorName::cr, "\r"}; }
    static SeparatorSymbol crlf() { return {SeparatorName::crlf, "\r\n"}; }
    static SeparatorSymbol backslash() { return {SeparatorName::backslash, "\\"}; }
    static SeparatorSymbol custom(std::string text);

    /// "LF", "CR", "CRLF", "BACKSLASH" or "custom:<text>" (case-insensitive
    /// names). Throws UsageError on an empty or number-like custom text.
    static SeparatorSymbol parse(std::string_view spec);
    /// Inverse of parse.
    std::string label() const;

    friend bool operator==(const SeparatorSymbol&, const SeparatorSymbol&) = default;
};

enum class FormatMode { vanilla, sepseq };

const char* to_string(FormatMode mode);
FormatMode parse_format_mode(std::string_view text);

struct FormatConfig {
    std::string delimiter = " ";
    SeparatorSymbol separator = SeparatorSymbol::lf();
    std::size_t segment_size = 16;
    FormatMode mode = FormatMode::sepseq;

    /// Throws UsageError when k == 0, a text is empty, the delimiter equals
    /// the separator, or either contains number characters.
    void validate() const;
};

/// Number of boundary separators for n values with segment size k: ceil(n/k) - 1.
constexpr std::size_t separator_count(std::size_t n, std::size_t k) {
    return n == 0 ? 0 : (n - 1) / k;
}

/// 1-based slot indices i (the gap after value i) that carry a separator:
/// k, 2k, ... strictly below n.
std::vector<std::size_t> boundary_slots(std::size_t n, std::size_t k);

std::string format_vanilla(const NumericalSequence& seq, std::string_view delimiter);
std::string format_sepseq(const NumericalSequence& seq, const FormatConfig& cfg);
/// Dispatches on cfg.mode.
std::string format_sequence(const NumericalSequence& seq, const FormatConfig& cfg);

/// Same joining rule applied to arbitrary pre-rendered items (used for
/// structured real-data payloads). Items must not contain the delimiter or
/// separator text.
std::string join_items(std::span<const std::string> items, const FormatConfig& cfg);

/// Splits text produced by join_items back into items. In vanilla mode only
/// the delimiter is accepted between items.
std::vector<std::string> split_items(std::string_view text, const FormatConfig& cfg);

/// Inverse of format_vanilla / format_sepseq. Throws ParseError carrying the
/// byte offset of a malformed number or an unexpected character run.
NumericalSequence parse_formatted(std::string_view text, const FormatConfig& cfg);

}  // namespace sepseq
