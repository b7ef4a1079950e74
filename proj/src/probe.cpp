#include "sepseq/probe.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <fmt/core.h>

#include "sepseq/errors.hpp"
#include "sepseq/metrics.hpp"

namespace sepseq {

using ojson = nlohmann::ordered_json;

namespace {

void check_keys(const ojson& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw DataError(fmt::format("{}: expected an object", where));
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw DataError(fmt::format("{}: unknown field '{}'", where, key));
    }
}

double number(const ojson& j, const std::string& where, const char* key) {
    if (!j.contains(key) || !j[key].is_number()) {
        throw DataError(fmt::format("{}.{}: missing or not a number", where, key));
    }
    const double v = j[key].get<double>();
    if (!std::isfinite(v)) throw DataError(fmt::format("{}.{}: not finite", where, key));
    return v;
}

double attention(const ojson& j, const std::string& where, const char* key) {
    const double v = number(j, where, key);
    if (v < 0.0 || v > 1.0) throw DataError(fmt::format("{}.{}: {} is outside [0, 1]", where, key, v));
    return v;
}

double stddev(const ojson& j, const std::string& where, const char* key) {
    const double v = number(j, where, key);
    if (v < 0.0) throw DataError(fmt::format("{}.{}: negative std {}", where, key, v));
    return v;
}

int index(const ojson& j, const std::string& where, const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 0) {
        throw DataError(fmt::format("{}.{}: missing or not a non-negative integer", where, key));
    }
    return j[key].get<int>();
}

const ojson& array_field(const ojson& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array()) throw DataError(fmt::format("{}: missing or not an array", key));
    return j[key];
}

}  // namespace

AttentionStats parse_attention_stats(const ojson& j) {
    check_keys(j, "stats", {"schema_version", "position_convention", "spec", "per_layer", "per_head", "cross_segment"});
    AttentionStats s;
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
        throw DataError("schema_version: missing or not an integer");
    }
    s.schema_version = j["schema_version"].get<int>();
    if (s.schema_version != 1) throw DataError(fmt::format("schema_version {} is not supported", s.schema_version));
    if (!j.contains("position_convention") || !j["position_convention"].is_string()) {
        throw DataError("position_convention: missing or not a string");
    }
    s.position_convention = j["position_convention"].get<std::string>();
    if (s.position_convention != "1-based" && s.position_convention != "0-based") {
        throw DataError(fmt::format("position_convention '{}' is not 1-based or 0-based", s.position_convention));
    }
    if (!j.contains("spec") || !j["spec"].is_object()) throw DataError("spec: missing or not an object");
    s.spec = j["spec"];

    std::set<int> seen;
    for (const auto& e : array_field(j, "per_layer")) {
        const auto where = fmt::format("per_layer[{}]", s.per_layer.size());
        check_keys(e, where, {"layer", "mean_attn_to_sep", "std_sep", "mean_attn_to_sp", "std_sp"});
        LayerAttention l{index(e, where, "layer"), attention(e, where, "mean_attn_to_sep"), stddev(e, where, "std_sep"),
                         attention(e, where, "mean_attn_to_sp"), stddev(e, where, "std_sp")};
        if (!seen.insert(l.layer).second) throw DataError(fmt::format("{}: duplicate layer {}", where, l.layer));
        s.per_layer.push_back(l);
    }
    seen.clear();
    for (const auto& e : array_field(j, "per_head")) {
        const auto where = fmt::format("per_head[{}]", s.per_head.size());
        check_keys(e, where, {"head", "mean_sep", "mean_sp"});
        HeadAttention h{index(e, where, "head"), attention(e, where, "mean_sep"), attention(e, where, "mean_sp")};
        if (!seen.insert(h.head).second) throw DataError(fmt::format("{}: duplicate head {}", where, h.head));
        s.per_head.push_back(h);
    }
    seen.clear();
    for (const auto& e : array_field(j, "cross_segment")) {
        const auto where = fmt::format("cross_segment[{}]", s.cross_segment.size());
        check_keys(e, where, {"layer", "mean_vanilla", "mean_sepseq", "std_vanilla", "std_sepseq"});
        CrossSegmentAttention c{index(e, where, "layer"), attention(e, where, "mean_vanilla"),
                                attention(e, where, "mean_sepseq"), stddev(e, where, "std_vanilla"),
                                stddev(e, where, "std_sepseq")};
        if (!seen.insert(c.layer).second) throw DataError(fmt::format("{}: duplicate layer {}", where, c.layer));
        s.cross_segment.push_back(c);
    }

    auto check_count = [&](const char* key, std::size_t actual, const char* what) {
        if (!s.spec.contains(key)) return;
        if (!s.spec[key].is_number_integer()) throw DataError(fmt::format("spec.{}: not an integer", key));
        const auto expected = s.spec[key].get<long long>();
        if (actual != 0 && static_cast<long long>(actual) != expected) {
            throw DataError(fmt::format("{} has {} entries but spec.{} is {}", what, actual, key, expected));
        }
    };
    check_count("num_layers", s.per_layer.size(), "per_layer");
    check_count("num_layers", s.cross_segment.size(), "cross_segment");
    check_count("num_heads", s.per_head.size(), "per_head");
    return s;
}

AttentionStats load_attention_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot read '{}'", path.string()));
    try {
        return parse_attention_stats(ojson::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
    }
}

ojson to_json(const AttentionStats& s) {
    ojson j;
    j["schema_version"] = s.schema_version;
    j["position_convention"] = s.position_convention;
    j["spec"] = s.spec;
    j["per_layer"] = ojson::array();
    for (const auto& l : s.per_layer) {
        j["per_layer"].push_back({{"layer", l.layer},
                                  {"mean_attn_to_sep", l.mean_attn_to_sep},
                                  {"std_sep", l.std_sep},
                                  {"mean_attn_to_sp", l.mean_attn_to_sp},
                                  {"std_sp", l.std_sp}});
    }
    j["per_head"] = ojson::array();
    for (const auto& h : s.per_head) {
        j["per_head"].push_back({{"head", h.head}, {"mean_sep", h.mean_sep}, {"mean_sp", h.mean_sp}});
    }
    j["cross_segment"] = ojson::array();
    for (const auto& c : s.cross_segment) {
        j["cross_segment"].push_back({{"layer", c.layer},
                                      {"mean_vanilla", c.mean_vanilla},
                                      {"mean_sepseq", c.mean_sepseq},
                                      {"std_vanilla", c.std_vanilla},
                                      {"std_sepseq", c.std_sepseq}});
    }
    return j;
}

ProbeSummary summarize(const AttentionStats& s) {
    ProbeSummary out;
    out.layers = s.per_layer.size();
    for (const auto& l : s.per_layer) out.layers_sep_above_sp += l.mean_attn_to_sep > l.mean_attn_to_sp;
    out.cross_layers = s.cross_segment.size();
    for (const auto& c : s.cross_segment) out.layers_sepseq_below_vanilla += c.mean_sepseq < c.mean_vanilla;
    return out;
}

namespace {

void write_json(const std::filesystem::path& path, const ojson& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    out << j.dump(2) << "\n";
}

}  // namespace

ProbeSummary write_probe_report(const AttentionStats& s, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / "plots");

    std::vector<std::string> layers;
    std::vector<double> sep, sp, sep_std, sp_std;
    for (const auto& l : s.per_layer) {
        layers.push_back(std::to_string(l.layer));
        sep.push_back(l.mean_attn_to_sep);
        sp.push_back(l.mean_attn_to_sp);
        sep_std.push_back(l.std_sep);
        sp_std.push_back(l.std_sp);
    }
    auto a = plot_data("Attention to separator vs. delimiter by layer", "layer", "mean attention", layers,
                       {{"separator", sep}, {"delimiter", sp}});
    a["error"] = {{"separator", sep_std}, {"delimiter", sp_std}};
    write_json(out_dir / "plots" / "layers_sep_vs_delim.json", a);

    std::vector<std::string> heads;
    std::vector<double> hsep, hsp;
    for (const auto& h : s.per_head) {
        heads.push_back(std::to_string(h.head));
        hsep.push_back(h.mean_sep);
        hsp.push_back(h.mean_sp);
    }
    write_json(out_dir / "plots" / "heads_sep_vs_delim.json",
               plot_data("Attention to separator vs. delimiter by head", "head", "mean attention", heads,
                         {{"separator", hsep}, {"delimiter", hsp}}));

    std::vector<std::string> clayers;
    std::vector<double> van, seg, van_std, seg_std;
    for (const auto& c : s.cross_segment) {
        clayers.push_back(std::to_string(c.layer));
        van.push_back(c.mean_vanilla);
        seg.push_back(c.mean_sepseq);
        van_std.push_back(c.std_vanilla);
        seg_std.push_back(c.std_sepseq);
    }
    auto c = plot_data("Cross-segment attention by layer", "layer", "mean attention", clayers,
                       {{"vanilla", van}, {"sepseq", seg}});
    c["error"] = {{"vanilla", van_std}, {"sepseq", seg_std}};
    write_json(out_dir / "plots" / "cross_segment_by_layer.json", c);

    const auto sum = summarize(s);
    write_json(out_dir / "summary.json", {{"layers", sum.layers},
                                          {"layers_sep_above_delim", sum.layers_sep_above_sp},
                                          {"cross_segment_layers", sum.cross_layers},
                                          {"layers_sepseq_below_vanilla", sum.layers_sepseq_below_vanilla},
                                          {"position_convention", s.position_convention},
                                          {"spec", s.spec}});
    std::string md = "# Attention probe\n\n";
    md += fmt::format("- Layers where the separator draws more attention than the delimiter: {} / {}\n",
                      sum.layers_sep_above_sp, sum.layers);
    md += fmt::format("- Layers where cross-segment attention is lower with separators: {} / {}\n",
                      sum.layers_sepseq_below_vanilla, sum.cross_layers);
    md += fmt::format("- Position convention: {}\n", s.position_convention);
    std::ofstream(out_dir / "probe.md", std::ios::binary) << md;
    return sum;
}

}  // namespace sepseq
