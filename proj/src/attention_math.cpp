#include "sepseq/attention_math.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "sepseq/errors.hpp"

namespace sepseq::attention {

namespace {

void require_finite(std::span<const double> xs, const char* what) {
    for (double x : xs) {
        if (!std::isfinite(x)) throw DomainError(fmt::format("non-finite value in {}", what));
    }
}

double log_sum_exp(std::span<const double> xs) {
    const double m = *std::max_element(xs.begin(), xs.end());
    double sum = 0.0;
    for (double x : xs) sum += std::exp(x - m);
    return m + std::log(sum);
}

}  // namespace

AttentionWeights softmax(std::span<const double> logits) {
    if (logits.empty()) throw DomainError("softmax of an empty vector");
    require_finite(logits, "logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    AttentionWeights w(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        w[i] = std::exp(logits[i] - m);
        sum += w[i];
    }
    for (auto& x : w) x /= sum;
    return w;
}

std::vector<double> attention_logits(const AttentionInput& input) {
    const std::size_t d = input.dim();
    if (d == 0) throw DomainError("query dimension must be positive");
    if (input.keys.size() < 2) throw DomainError("attention needs at least two keys");
    require_finite(input.query, "query");
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> logits;
    logits.reserve(input.keys.size());
    for (const auto& key : input.keys) {
        if (key.size() != d) throw DomainError("key dimension differs from query dimension");
        require_finite(key, "key");
        double dot = 0.0;
        for (std::size_t t = 0; t < d; ++t) dot += input.query[t] * key[t];
        logits.push_back(dot * scale);
    }
    return logits;
}

AttentionWeights softmax_attention(const AttentionInput& input) {
    const auto logits = attention_logits(input);
    return softmax(logits);
}

double cross_segment_ratio(std::span<const double> context_logits, double s_sp, double s_sep) {
    require_finite(context_logits, "context logits");
    if (!std::isfinite(s_sp) || !std::isfinite(s_sep)) {
        throw DomainError("non-finite boundary logit");
    }
    std::vector<double> vanilla(context_logits.begin(), context_logits.end());
    std::vector<double> segmented = vanilla;
    vanilla.push_back(s_sp);
    segmented.push_back(s_sep);
    // exp(log Z_van - log Z_sep); identical inputs give exactly exp(0) = 1.
    return std::exp(log_sum_exp(vanilla) - log_sum_exp(segmented));
}

double cross_segment_ratio(const AttentionInput& vanilla, std::span<const double> separator_key,
                           std::size_t target) {
    if (!vanilla.boundary_index) throw DomainError("input has no boundary slot");
    const std::size_t b = *vanilla.boundary_index;
    if (b >= vanilla.keys.size() || target >= vanilla.keys.size()) {
        throw DomainError("boundary or target index out of range");
    }
    if (target == b) throw DomainError("target must differ from the boundary slot");

    AttentionInput segmented = vanilla;
    segmented.keys[b].assign(separator_key.begin(), separator_key.end());
    segmented.boosted = true;

    const auto w_van = softmax_attention(vanilla);
    const auto w_sep = softmax_attention(segmented);
    return w_sep[target] / w_van[target];
}

std::vector<DispersionPoint> dispersion_curve(std::span<const std::size_t> n_values,
                                              double relevance_gap) {
    std::vector<DispersionPoint> out;
    out.reserve(n_values.size());
    for (std::size_t n : n_values) {
        if (n < 1) throw DomainError("N must be >= 1");
        std::vector<double> logits(n, 0.0);
        logits[0] = relevance_gap;
        out.push_back({n, softmax(logits)[0]});
    }
    return out;
}

}  // namespace sepseq::attention
