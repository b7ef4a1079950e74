#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sepseq/attention_math.hpp"
#include "sepseq/errors.hpp"

namespace sepseq::attention {
namespace {

double sum(const std::vector<double>& xs) { return std::accumulate(xs.begin(), xs.end(), 0.0); }

TEST(SoftmaxTest, ClosedForms) {
    const std::vector<double> two{0.3, 0.3};
    const auto w = softmax(two);
    EXPECT_DOUBLE_EQ(w[0], 0.5);
    EXPECT_DOUBLE_EQ(w[1], 0.5);

    const std::vector<double> ln3{0.0, std::log(3.0)};
    const auto v = softmax(ln3);
    EXPECT_NEAR(v[0], 0.25, 1e-12);
    EXPECT_NEAR(v[1], 0.75, 1e-12);

    for (std::size_t n : {2u, 7u, 100u, 4096u}) {
        const std::vector<double> uniform(n, 1.7);
        const auto u = softmax(uniform);
        EXPECT_NEAR(*std::max_element(u.begin(), u.end()), 1.0 / static_cast<double>(n), 1e-15);
    }
}

TEST(SoftmaxTest, RejectsBadInput) {
    const std::vector<double> empty;
    EXPECT_THROW(softmax(empty), DomainError);
    const std::vector<double> nan{0.0, std::numeric_limits<double>::quiet_NaN()};
    EXPECT_THROW(softmax(nan), DomainError);
    const std::vector<double> inf{0.0, std::numeric_limits<double>::infinity()};
    EXPECT_THROW(softmax(inf), DomainError);
}

TEST(SoftmaxPropertyTest, NormalizedAndOverflowSafe) {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> logit(-500.0, 500.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 1 + gen() % 64;
        std::vector<double> xs(n);
        for (auto& x : xs) x = logit(gen);
        const auto w = softmax(xs);
        ASSERT_NEAR(sum(w), 1.0, 1e-12);
        for (double a : w) {
            ASSERT_TRUE(std::isfinite(a));
            ASSERT_GE(a, 0.0);
            ASSERT_LE(a, 1.0);
        }
    }
}

TEST(AttentionTest, ScaledDotProduct) {
    AttentionInput in;
    in.query = {1.0, 0.0, 0.0, 0.0};
    in.keys = {{2.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}};
    const auto logits = attention_logits(in);
    EXPECT_DOUBLE_EQ(logits[0], 1.0);  // 2 / sqrt(4)
    EXPECT_DOUBLE_EQ(logits[1], 0.0);
    const auto w = softmax_attention(in);
    EXPECT_NEAR(w[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-12);

    in.keys = {{1.0, 0.0, 0.0, 0.0}};
    EXPECT_THROW(softmax_attention(in), DomainError);  // N < 2
    in.keys = {{1.0, 0.0}, {0.0, 1.0}};
    EXPECT_THROW(softmax_attention(in), DomainError);  // dim mismatch
}

TEST(CrossSegmentTest, WorkedValue) {
    const std::vector<double> context(9, 1.0);
    const double e = std::exp(1.0);
    EXPECT_NEAR(cross_segment_ratio(context, 1.0, 5.0), 10.0 * e / (9.0 * e + std::exp(5.0)), 1e-9);
    EXPECT_NEAR(cross_segment_ratio(context, 1.0, 5.0), 0.1572, 5e-5);
}

TEST(CrossSegmentTest, EqualLogitsGiveExactlyOne) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> logit(-30.0, 30.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> ctx(1 + gen() % 50);
        for (auto& x : ctx) x = logit(gen);
        const double s = logit(gen);
        ASSERT_EQ(cross_segment_ratio(ctx, s, s), 1.0);
    }
}

TEST(CrossSegmentPropertyTest, BoostedSeparatorSuppresses) {
    // Logit ranges keep the boundary term above double resolution relative
    // to the normaliser; outside them the ratio rounds to exactly 1.
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> logit(-5.0, 5.0);
    std::uniform_real_distribution<double> delta(0.01, 10.0);
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<double> ctx(1 + gen() % 200);
        for (auto& x : ctx) x = logit(gen);
        const double s_sp = logit(gen);
        const double s_sep = s_sp + delta(gen);
        const double r = cross_segment_ratio(ctx, s_sp, s_sep);
        ASSERT_LT(r, 1.0) << "trial " << trial;
        ASSERT_GT(r, 0.0);
        // Reverse direction raises attention.
        ASSERT_GT(cross_segment_ratio(ctx, s_sep, s_sp), 1.0);
    }
}

TEST(CrossSegmentTest, MonotoneInSeparatorLogit) {
    const std::vector<double> ctx{0.5, -1.0, 2.0, 0.0};
    double prev = cross_segment_ratio(ctx, 0.0, 0.0);
    for (int i = 1; i <= 100; ++i) {
        const double r = cross_segment_ratio(ctx, 0.0, 0.1 * i);
        EXPECT_LT(r, prev);
        prev = r;
    }
}

TEST(CrossSegmentTest, QueryKeyFormMatchesDirectSoftmax) {
    AttentionInput in;
    in.query = {0.4, -1.2, 0.7};
    in.keys = {{0.1, 0.2, 0.3}, {1.0, -0.5, 0.2}, {0.3, 0.3, 0.3}, {-0.2, 0.9, 0.4}};
    in.boundary_index = 2;
    const std::vector<double> sep_key{3.0, -4.0, 2.5};
    const auto before = softmax_attention(in);
    auto boosted = in;
    boosted.keys[2] = sep_key;
    boosted.boosted = true;
    const auto after = softmax_attention(boosted);
    EXPECT_NEAR(cross_segment_ratio(in, sep_key, 0), after[0] / before[0], 1e-12);
    EXPECT_LT(cross_segment_ratio(in, sep_key, 0), 1.0);
}

TEST(DispersionTest, ClosedFormsAndMonotonicity) {
    const std::vector<std::size_t> ns{10};
    EXPECT_NEAR(dispersion_curve(ns, std::log(9.0))[0].max_weight, 0.5, 1e-12);
    std::vector<std::size_t> grid;
    for (std::size_t n = 8; n <= 4096; ++n) grid.push_back(n);
    for (double gap : {0.0, 1.0, std::log(9.0), 5.0}) {
        const auto curve = dispersion_curve(grid, gap);
        ASSERT_EQ(curve.size(), grid.size());
        for (std::size_t i = 0; i < curve.size(); ++i) {
            const double n = static_cast<double>(curve[i].n);
            ASSERT_NEAR(curve[i].max_weight, std::exp(gap) / (std::exp(gap) + n - 1.0), 1e-12);
            if (i > 0) ASSERT_LT(curve[i].max_weight, curve[i - 1].max_weight);
        }
    }
    const auto flat = dispersion_curve(grid, 0.0);
    EXPECT_NEAR(flat.back().max_weight, 1.0 / 4096.0, 1e-15);
}

}  // namespace
}  // namespace sepseq::attention
