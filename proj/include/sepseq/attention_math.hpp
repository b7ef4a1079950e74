#pragma once

// Numeric model of softmax attention dispersion and of the cross-segment
// suppression caused by a high-attention separator key.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace sepseq::attention {

struct AttentionInput {
    std::vector<double> query;              // q_i, length d_k
    std::vector<std::vector<double>> keys;  // N keys, each length d_k
    /// Key index of the delimiter/separator slot, when one is modelled.
    std::optional<std::size_t> boundary_index;
    /// True when the boundary key is a separator rather than a delimiter.
    bool boosted = false;

    std::size_t dim() const { return query.size(); }
};

using AttentionWeights = std::vector<double>;

/// Stable softmax with max subtraction. Throws DomainError on non-finite or
/// empty input.
AttentionWeights softmax(std::span<const double> logits);

/// Scaled dot-product logits q.k_j / sqrt(d_k).
std::vector<double> attention_logits(const AttentionInput& input);

/// alpha_j = exp(s_j) / sum_l exp(s_l). Throws DomainError on non-finite
/// vectors, mismatched dimensions, or N < 2.
AttentionWeights softmax_attention(const AttentionInput& input);

/// A_sep[i,j] / A_van[i,j] = Z_van / Z_sep, where both normalisers share the
/// context logits and differ only in the boundary slot (s_sp vs s_sep).
/// Below 1 when s_sep > s_sp, exactly 1 when equal, above 1 otherwise.
double cross_segment_ratio(std::span<const double> context_logits, double s_sp, double s_sep);

/// Same ratio measured on query/key vectors: the key at
/// input.boundary_index is swapped for `separator_key`, and the weight on
/// `target` is compared before and after.
double cross_segment_ratio(const AttentionInput& vanilla, std::span<const double> separator_key,
                           std::size_t target);

struct DispersionPoint {
    std::size_t n;
    double max_weight;
};

/// One relevant key with logit gap `relevance_gap` over N-1 equal distractors;
/// reports the relevant key's weight for each N.
std::vector<DispersionPoint> dispersion_curve(std::span<const std::size_t> n_values,
                                              double relevance_gap);

}  // namespace sepseq::attention
