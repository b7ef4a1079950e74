#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "sepseq/datagen.hpp"
#include "sepseq/errors.hpp"

namespace sepseq {
namespace {

// Independent re-scan oracle over plain doubles/ints; it never touches the
// library's comparison operators.
std::string naive_answer(TaskType task, const std::vector<double>& xs) {
    switch (task) {
        case TaskType::max_int:
        case TaskType::max_float: {
            std::size_t idx = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                bool strictly_best_so_far = true;
                for (std::size_t j = 0; j < i; ++j) strictly_best_so_far &= xs[i] > xs[j];
                bool at_least_rest = true;
                for (std::size_t j = i; j < xs.size(); ++j) at_least_rest &= xs[i] >= xs[j];
                if (strictly_best_so_far && at_least_rest) idx = i;
            }
            return std::to_string(idx);
        }
        case TaskType::min_int:
        case TaskType::min_float: {
            std::vector<double> neg(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) neg[i] = -xs[i];
            return naive_answer(TaskType::max_int, neg);
        }
        case TaskType::indexing: {
            long last = -1;
            for (std::size_t i = xs.size(); i-- > 0;) {
                if (xs[i] == 1.0) {
                    last = static_cast<long>(i);
                    break;
                }
            }
            return std::to_string(last);
        }
        case TaskType::counting:
            return std::to_string(std::count(xs.begin(), xs.end(), 1.0));
        default:
            return "";
    }
}

std::vector<double> as_doubles(const NumericalSequence& s) {
    std::vector<double> out;
    for (const auto& v : s.values()) out.push_back(v.to_double());
    return out;
}

TEST(OracleTest, WorkedExamples) {
    const std::vector<std::int64_t> max_ex{3, 2, 2, 0, 3, 0, 2, 5, 0, 0, 1, 0, 1, 0, 1, 2, 0, 1, 4};
    const std::vector<std::int64_t> min_ex{6, 9, 7, 6, 7, 7, 6, 6, 6, 7, 9, 8, 7, 6, 6,
                                           8, 8, 8, 9, 2, 9, 9, 6, 9, 6, 8, 6, 9, 6};
    const std::vector<std::int64_t> bin_ex{1, 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    EXPECT_EQ(oracle(TaskType::max_int, NumericalSequence::from_integers(max_ex)), "7");
    EXPECT_EQ(oracle(TaskType::min_int, NumericalSequence::from_integers(min_ex)), "19");
    EXPECT_EQ(oracle(TaskType::counting, NumericalSequence::from_integers(bin_ex)), "4");
    EXPECT_EQ(oracle(TaskType::indexing, NumericalSequence::from_integers(bin_ex)), "8");
}

TEST(OracleTest, TiesAndEdgeCases) {
    const std::vector<std::int64_t> ties{4, 9, 1, 9, 1};
    EXPECT_EQ(oracle(TaskType::max_int, NumericalSequence::from_integers(ties)), "1");
    EXPECT_EQ(oracle(TaskType::min_int, NumericalSequence::from_integers(ties)), "2");
    const std::vector<std::int64_t> zeros{0, 0, 0};
    EXPECT_EQ(oracle(TaskType::indexing, NumericalSequence::from_integers(zeros)), "-1");
    EXPECT_EQ(oracle(TaskType::counting, NumericalSequence::from_integers(zeros)), "0");
    const std::vector<std::int64_t> dec{-1500, 250, 10000};
    EXPECT_EQ(oracle(TaskType::repetition, NumericalSequence::from_scaled(dec, 3)), "[-1.500, 0.250, 10.000]");
    EXPECT_EQ(oracle(TaskType::max_float, NumericalSequence::from_scaled(dec, 3)), "2");
}

TEST(OraclePropertyTest, AgreesWithNaiveRescan) {
    std::mt19937_64 gen(77);
    for (auto task : {TaskType::max_int, TaskType::min_int, TaskType::max_float, TaskType::min_float,
                      TaskType::indexing, TaskType::counting}) {
        for (int trial = 0; trial < 10000; ++trial) {
            const std::size_t n = 1 + gen() % 64;
            std::vector<std::int64_t> raw(n);
            const bool binary = task == TaskType::indexing || task == TaskType::counting;
            const bool decimal = task == TaskType::max_float || task == TaskType::min_float;
            for (auto& x : raw) {
                x = binary ? static_cast<std::int64_t>(gen() % 2)
                           : static_cast<std::int64_t>(gen() % (decimal ? 20001 : 10)) - (decimal ? 10000 : 0);
            }
            const auto seq = decimal ? NumericalSequence::from_scaled(raw, 3) : NumericalSequence::from_integers(raw);
            ASSERT_EQ(oracle(task, seq), naive_answer(task, as_doubles(seq))) << to_string(task) << " trial " << trial;
        }
    }
}

TEST(LengthBinTest, BoundsAndLookup) {
    EXPECT_EQ(bounds(LengthBin::S).min_len, 2u);
    EXPECT_EQ(bounds(LengthBin::S).max_len, 32u);
    EXPECT_EQ(bounds(LengthBin::M).min_len, 33u);
    EXPECT_EQ(bounds(LengthBin::XL).max_len, 512u);
    EXPECT_EQ(bounds(LengthBin::XXL).max_len, 1024u);
    EXPECT_FALSE(bin_for_length(1).has_value());
    EXPECT_EQ(bin_for_length(32), LengthBin::S);
    EXPECT_EQ(bin_for_length(33), LengthBin::M);
    EXPECT_EQ(bin_for_length(256), LengthBin::L);
    EXPECT_EQ(bin_for_length(257), LengthBin::XL);
    EXPECT_EQ(bin_for_length(1024), LengthBin::XXL);
    EXPECT_FALSE(bin_for_length(1025).has_value());
    EXPECT_EQ(bin_label(LengthBin::M), "M: 33-128");
    EXPECT_EQ(parse_bins("S,XL").size(), 2u);
    EXPECT_THROW(parse_bins("S,Q"), UsageError);
}

TEST(GenerateTest, ShapeDeterminismAndBins) {
    GenSpec spec;
    spec.task = TaskType::counting;
    spec.rng_seed = 5;
    const auto a = generate(spec);
    const auto b = generate(spec);
    ASSERT_EQ(a.size(), 200u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_EQ(*a[i].sequence, *b[i].sequence);
        const auto n = a[i].sequence->size();
        EXPECT_EQ(bin_for_length(n), a[i].bin);
        EXPECT_EQ(a[i].gold_answer, naive_answer(TaskType::counting, as_doubles(*a[i].sequence)));
    }
    EXPECT_EQ(a.front().id, "counting-S-000");
    spec.rng_seed = 6;
    EXPECT_NE(*generate(spec)[0].sequence, *a[0].sequence);
}

TEST(GenerateTest, SpecValidation) {
    GenSpec spec;
    spec.task = TaskType::stock;
    EXPECT_THROW(generate(spec), UsageError);
    spec.task = TaskType::counting;
    spec.bins = {LengthBin::XXL};
    EXPECT_THROW(generate(spec), UsageError);
    spec.bins = {LengthBin::S};
    spec.one_probability = 1.5;
    EXPECT_THROW(generate(spec), UsageError);
}

TEST(GenerateTest, IndexingAlwaysHasAOne) {
    GenSpec spec;
    spec.task = TaskType::indexing;
    spec.one_probability = 0.0;
    spec.bins = {LengthBin::S};
    for (const auto& s : generate(spec)) EXPECT_NE(s.gold_answer, "-1");
}

TEST(GenerateTest, RepetitionCorpus) {
    const auto corpus = generate(repetition_spec(3));
    ASSERT_EQ(corpus.size(), 250u);
    std::map<LengthBin, int> per_bin;
    for (const auto& s : corpus) {
        ++per_bin[*s.bin];
        EXPECT_EQ(s.sequence->precision(), 3);
        for (const auto& v : s.sequence->values()) {
            EXPECT_GE(v.mantissa(), -10000);
            EXPECT_LE(v.mantissa(), 10000);
        }
        EXPECT_EQ(s.gold_answer, canonical_array(*s.sequence));
    }
    EXPECT_EQ(per_bin.size(), 5u);
    for (const auto& [bin, n] : per_bin) EXPECT_EQ(n, 50);
}

TEST(DigitRunsTest, Counts) {
    EXPECT_EQ(count_digit_runs(""), 0u);
    EXPECT_EQ(count_digit_runs("a243b"), 1u);
    EXPECT_EQ(count_digit_runs("1a2b33"), 3u);
    EXPECT_EQ(count_digit_runs("effV2xM8hF5vcNgl8xrTCmbD6sEM38ti"), 6u);
}

TEST(CorpusTest, RoundTripThroughJsonLines) {
    GenSpec spec;
    spec.task = TaskType::min_float;
    spec.bins = {LengthBin::S, LengthBin::M};
    spec.per_bin = 5;
    const auto corpus = generate(spec);
    std::stringstream ss;
    write_corpus(ss, corpus);
    const auto path = std::filesystem::temp_directory_path() / "sepseq_corpus_rt.jsonl";
    std::ofstream(path) << ss.str();
    const auto back = read_corpus(path);
    ASSERT_EQ(back.size(), corpus.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].id, corpus[i].id);
        EXPECT_EQ(*back[i].sequence, *corpus[i].sequence);
        EXPECT_EQ(back[i].gold_answer, corpus[i].gold_answer);
        EXPECT_EQ(back[i].bin, corpus[i].bin);
    }
    std::filesystem::remove(path);
}

class RealDataTest : public ::testing::Test {
protected:
    std::filesystem::path data(const char* name) {
        return std::filesystem::path(SEPSEQ_SOURCE_DIR) / "data" / "real" / name;
    }
    std::filesystem::path write_tmp(const std::string& text) {
        auto p = std::filesystem::temp_directory_path() / "sepseq_real_tmp.jsonl";
        std::ofstream(p) << text;
        return p;
    }
};

TEST_F(RealDataTest, LoadsFixtures) {
    const auto stock = load_real(data("stock.jsonl"), TaskType::stock);
    ASSERT_EQ(stock.size(), 1u);
    EXPECT_EQ(stock[0].gold_answer, "C");
    // Seven trading days above 15,000 inside the window.
    int above = 0;
    for (const auto& row : *stock[0].struct_data) {
        const auto date = row["date"].get<std::string>();
        if (date >= "2024-10-15" && date <= "2024-10-25" && row["volume"].get<int>() > 15000) ++above;
    }
    EXPECT_EQ(above, 7);

    const auto weather = load_real(data("weather.jsonl"), TaskType::weather);
    std::string last;
    for (const auto& row : *weather[0].struct_data) {
        const auto date = row["date"].get<std::string>();
        if (date >= "2024-11-10" && date <= "2024-11-20" && row["temperature_2m"].get<double>() > 5) last = date;
    }
    EXPECT_EQ(last, "2024-11-14");
    EXPECT_EQ(weather[0].gold_answer, "B");

    const auto list = load_real(data("number_list.jsonl"), TaskType::number_list);
    const auto& xs = *list[0].struct_data;
    std::size_t best = 20;
    for (std::size_t i = 20; i <= 80; ++i) {
        if (xs[i].get<double>() > xs[best].get<double>()) best = i;
    }
    EXPECT_EQ(best, 31u);
    EXPECT_EQ(list[0].gold_answer, "H");
}

TEST_F(RealDataTest, NumberStringAuditFlagsPublishedExample) {
    const auto ns = load_real(data("number_string.jsonl"), TaskType::number_string);
    EXPECT_EQ(ns[0].gold_answer, "11");
    const auto flagged = audit_number_string(ns);
    ASSERT_EQ(flagged.size(), 1u);
    EXPECT_EQ(flagged[0], "number_string-0000");
}

TEST_F(RealDataTest, SchemaViolationsNameTheRecord) {
    auto expect_data_error = [&](const std::string& text, TaskType task, const std::string& fragment) {
        try {
            load_real(write_tmp(text), task);
            FAIL() << "expected DataError for " << text;
        } catch (const DataError& e) {
            EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
        }
    };
    expect_data_error(R"({"id":"r1","question":"q","answer":3})", TaskType::number_string, "r1");
    expect_data_error(R"({"id":"r2","question":"q Options: A: 1","struct_data":[1,2],"answer":"Z"})",
                      TaskType::number_list, "r2");
    expect_data_error(R"({"id":"r3","question":"q","struct_data":"ab1","answer":-2})", TaskType::number_string, "r3");
    expect_data_error(R"({"id":"r4","task_type":"weather","question":"q","struct_data":"x","answer":"A"})",
                      TaskType::stock, "r4");
    expect_data_error(R"({"id":"r5","question":"Options: A: 1, B: 2","struct_data":[1,2],"answer":"C"})",
                      TaskType::number_list, "r5");
    EXPECT_THROW(load_real(data("stock.jsonl"), TaskType::counting), UsageError);
}

}  // namespace
}  // namespace sepseq
