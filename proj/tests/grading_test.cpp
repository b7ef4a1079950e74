#include <gtest/gtest.h>

#include <string>

#include "sepseq/errors.hpp"
#include "sepseq/grading.hpp"

namespace sepseq {
namespace {

GradeResult grade_text(std::string_view response, std::string_view gold, TaskType task) {
    return grade(extract_answer(response, task), gold, task);
}

TEST(ExtractTest, LastAnswerLineWins) {
    const auto a = extract_answer("Answer: 3\nwait, recount.\nAnswer: 7\n", TaskType::max_int);
    ASSERT_TRUE(a.value);
    EXPECT_EQ(*a.value, "7");
    EXPECT_EQ(a.kind, AnswerKind::integer);

    // First value on the answer line, not the last one.
    EXPECT_EQ(*extract_answer("**Answer:** 19 (from 19, 23)", TaskType::min_int).value, "19");
    EXPECT_EQ(*extract_answer("the answer: -4", TaskType::min_int).value, "-4");
}

TEST(ExtractTest, FallsBackToLastStandaloneNumber) {
    EXPECT_EQ(*extract_answer("I counted 3 then 4 ones.", TaskType::counting).value, "4");
    // Numbers glued to letters are not answers.
    EXPECT_EQ(*extract_answer("item x12 has value 8 and id 5b", TaskType::indexing).value, "8");
    // An answer line without a number defers to the fallback.
    EXPECT_EQ(*extract_answer("there are 6\nAnswer: unknown", TaskType::counting).value, "6");
    EXPECT_FALSE(extract_answer("no idea", TaskType::counting).present());
    EXPECT_FALSE(extract_answer("", TaskType::counting).present());
}

TEST(ExtractTest, DecimalsAndSpans) {
    const std::string text = "so Answer: -3.250 is the minimum";
    const auto a = extract_answer(text, TaskType::min_float);
    EXPECT_EQ(a.kind, AnswerKind::decimal);
    EXPECT_EQ(*a.value, "-3.250");
    EXPECT_EQ(text.substr(a.span_begin, a.span_end - a.span_begin), "-3.250");
    // Hyphenated words do not produce negatives.
    EXPECT_EQ(*extract_answer("top-5", TaskType::max_int).value, "5");
}

TEST(ExtractTest, ChoiceLetters) {
    EXPECT_EQ(*extract_answer("Answer: c", TaskType::stock).value, "C");
    EXPECT_EQ(*extract_answer("I think (B) fits.", TaskType::weather).value, "B");
    // "A" used as an article is not an option.
    EXPECT_EQ(*extract_answer("Option D. A good guess overall.", TaskType::number_list).value, "D");
    EXPECT_EQ(*extract_answer("Answer: A", TaskType::number_list).value, "A");
    // Lowercase letters only count on the answer line.
    EXPECT_FALSE(extract_answer("a b c", TaskType::stock).present());
    // Letters past H are not options.
    EXPECT_FALSE(extract_answer("Answer: Z", TaskType::stock).present());
}

TEST(ExtractTest, ArraysRequireExactResponse) {
    const auto exact = extract_answer("[1.000, -2.500]\n", TaskType::repetition);
    EXPECT_EQ(exact.kind, AnswerKind::array_text);
    EXPECT_TRUE(exact.exact);
    const auto chatty = extract_answer("Here you go: [1.000, -2.500]", TaskType::repetition);
    EXPECT_FALSE(chatty.exact);
    EXPECT_EQ(*chatty.value, "[1.000, -2.500]");
}

TEST(GradeTest, NumericComparison) {
    EXPECT_TRUE(grade_text("Answer: 7", "7", TaskType::max_int).correct);
    EXPECT_TRUE(grade_text("Answer: 7.0", "7", TaskType::max_int).correct);
    EXPECT_TRUE(grade_text("Answer: 2.5", "2.500", TaskType::max_float).correct);
    EXPECT_TRUE(grade_text("Answer: -0.005", "-0.005", TaskType::min_float).correct);
    const auto wrong = grade_text("Answer: 8", "7", TaskType::max_int);
    EXPECT_TRUE(wrong.valid);
    EXPECT_FALSE(wrong.correct);
    EXPECT_EQ(wrong.reason, GradeReason::wrong_value);
    EXPECT_FALSE(grade_text("Answer: 7.5", "7", TaskType::max_int).correct);
}

TEST(GradeTest, Reasons) {
    const auto none = grade_text("no idea", "7", TaskType::counting);
    EXPECT_FALSE(none.valid);
    EXPECT_EQ(none.reason, GradeReason::no_answer);

    const auto right = grade_text("Answer: B", "B", TaskType::weather);
    EXPECT_TRUE(right.correct);
    EXPECT_EQ(right.reason, GradeReason::matched);
    EXPECT_FALSE(grade_text("Answer: C", "B", TaskType::weather).correct);

    const auto chatty = grade_text("Here: [1, 2]", "[1, 2]", TaskType::repetition);
    EXPECT_TRUE(chatty.valid);
    EXPECT_FALSE(chatty.correct);
    EXPECT_EQ(chatty.reason, GradeReason::format_violation);
    EXPECT_TRUE(grade_text("[1, 2]", "[1, 2]", TaskType::repetition).correct);
    EXPECT_FALSE(grade_text("[1, 3]", "[1, 2]", TaskType::repetition).correct);

    const auto failed = execution_failed();
    EXPECT_FALSE(failed.valid);
    EXPECT_EQ(failed.reason, GradeReason::execution_failed);
}

TEST(GradeTest, EnumRoundTrips) {
    for (auto r : {GradeReason::matched, GradeReason::wrong_value, GradeReason::no_answer,
                   GradeReason::format_violation, GradeReason::execution_failed}) {
        EXPECT_EQ(parse_grade_reason(to_string(r)), r);
    }
    for (auto k : {AnswerKind::integer, AnswerKind::decimal, AnswerKind::option_letter, AnswerKind::array_text,
                   AnswerKind::none}) {
        EXPECT_EQ(parse_answer_kind(to_string(k)), k);
    }
    EXPECT_THROW(parse_grade_reason("bogus"), DataError);
    EXPECT_THROW(parse_answer_kind("bogus"), DataError);
}

}  // namespace
}  // namespace sepseq
