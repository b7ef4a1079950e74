#pragma once

// Ingests the attention statistics emitted by the external probe tool and
// turns them into plot data. The JSON contract is schemas/attention_stats.schema.json.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace sepseq {

struct LayerAttention {
    int layer = 0;
    double mean_attn_to_sep = 0.0;
    double std_sep = 0.0;
    double mean_attn_to_sp = 0.0;
    double std_sp = 0.0;
    friend bool operator==(const LayerAttention&, const LayerAttention&) = default;
};

struct HeadAttention {
    int head = 0;
    double mean_sep = 0.0;
    double mean_sp = 0.0;
    friend bool operator==(const HeadAttention&, const HeadAttention&) = default;
};

struct CrossSegmentAttention {
    int layer = 0;
    double mean_vanilla = 0.0;
    double mean_sepseq = 0.0;
    double std_vanilla = 0.0;
    double std_sepseq = 0.0;
    friend bool operator==(const CrossSegmentAttention&, const CrossSegmentAttention&) = default;
};

struct AttentionStats {
    int schema_version = 1;
    /// "1-based" or "0-based" token positions in the probe protocol.
    std::string position_convention = "1-based";
    nlohmann::ordered_json spec = nlohmann::ordered_json::object();
    std::vector<LayerAttention> per_layer;
    std::vector<HeadAttention> per_head;
    std::vector<CrossSegmentAttention> cross_segment;
    friend bool operator==(const AttentionStats&, const AttentionStats&) = default;
};

/// Validates and parses. Throws DataError naming the offending field:
/// attention values outside [0, 1], negative stds, duplicate layer/head
/// ids, or counts that disagree with spec.num_layers / spec.num_heads.
AttentionStats parse_attention_stats(const nlohmann::ordered_json& j);
AttentionStats load_attention_stats(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const AttentionStats& stats);

struct ProbeSummary {
    std::size_t layers = 0;
    std::size_t layers_sep_above_sp = 0;
    std::size_t cross_layers = 0;
    std::size_t layers_sepseq_below_vanilla = 0;
};

ProbeSummary summarize(const AttentionStats& stats);

/// Writes plots/layers_sep_vs_delim.json, plots/heads_sep_vs_delim.json,
/// plots/cross_segment_by_layer.json, summary.json and probe.md.
ProbeSummary write_probe_report(const AttentionStats& stats, const std::filesystem::path& out_dir);

}  // namespace sepseq
