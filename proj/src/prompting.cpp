#include "sepseq/prompting.hpp"

#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "sepseq/errors.hpp"
#include "sepseq/random.hpp"

#ifndef SEPSEQ_TEMPLATE_DIR
#define SEPSEQ_TEMPLATE_DIR "templates"
#endif

namespace sepseq {

const char* to_string(PromptStrategy strategy) {
    switch (strategy) {
        case PromptStrategy::vanilla: return "vanilla";
        case PromptStrategy::cot: return "cot";
        case PromptStrategy::icl: return "icl";
        case PromptStrategy::pot: return "pot";
    }
    return "vanilla";
}

PromptStrategy parse_strategy(std::string_view text) {
    for (auto s : {PromptStrategy::vanilla, PromptStrategy::cot, PromptStrategy::icl,
                   PromptStrategy::pot}) {
        if (text == to_string(s)) return s;
    }
    throw UsageError(fmt::format("unknown strategy '{}' (vanilla, cot, icl, pot)", text));
}

std::vector<TemplateSegment> parse_template(std::string_view text) {
    std::vector<TemplateSegment> out;
    std::string literal;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) {
            literal += c;
            i += 2;
            continue;
        }
        if (c == '{') {
            const auto close = text.find('}', i);
            if (close == std::string_view::npos) throw UsageError("unterminated template placeholder");
            if (!literal.empty()) out.push_back({false, std::move(literal)});
            literal.clear();
            out.push_back({true, std::string(text.substr(i + 1, close - i - 1))});
            i = close + 1;
            continue;
        }
        if (c == '}') throw UsageError("unmatched '}' in template");
        literal += c;
        ++i;
    }
    if (!literal.empty()) out.push_back({false, std::move(literal)});
    return out;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw UsageError(fmt::format("template directory '{}' not found", dir.string()));
    }
    TemplateSet set;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        set.set(entry.path().stem().string(), ss.str());
    }
    if (!set.templates_.count("system")) {
        throw UsageError(fmt::format("template directory '{}' has no system.txt", dir.string()));
    }
    return set;
}

std::filesystem::path TemplateSet::default_dir() { return SEPSEQ_TEMPLATE_DIR; }

void TemplateSet::set(std::string name, std::string text) {
    // Trailing newline of the file is not part of the prompt.
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    parse_template(text);
    templates_[std::move(name)] = std::move(text);
}

const std::string* TemplateSet::find(std::string_view name) const {
    auto it = templates_.find(std::string(name));
    return it == templates_.end() ? nullptr : &it->second;
}

const std::string& TemplateSet::system_text() const {
    static const std::string empty;
    auto it = templates_.find("system");
    return it == templates_.end() ? empty : it->second;
}

std::pair<std::string, const std::string*> TemplateSet::lookup(TaskType task,
                                                               PromptStrategy strategy) const {
    for (auto name : {fmt::format("{}.{}", to_string(task), to_string(strategy)),
                      std::string(to_string(strategy))}) {
        if (auto it = templates_.find(name); it != templates_.end()) return {name, &it->second};
    }
    throw UsageError(fmt::format("no template for task '{}' and strategy '{}'", to_string(task),
                                 to_string(strategy)));
}

void ExemplarPool::add(Sample sample) { by_task_[sample.task].push_back(std::move(sample)); }

std::size_t ExemplarPool::size(TaskType task) const {
    auto it = by_task_.find(task);
    return it == by_task_.end() ? 0 : it->second.size();
}

const Sample& ExemplarPool::select(TaskType task, std::uint64_t seed) const {
    auto it = by_task_.find(task);
    if (it == by_task_.end() || it->second.empty()) {
        throw UsageError(fmt::format("ICL exemplar pool has no entry for task '{}'", to_string(task)));
    }
    const auto idx = mix64(seed, static_cast<std::uint64_t>(task)) % it->second.size();
    return it->second[idx];
}

bool ExemplarPool::contains(std::string_view id) const {
    for (const auto& [task, samples] : by_task_) {
        for (const auto& s : samples) {
            if (s.id == id) return true;
        }
    }
    return false;
}

ExemplarPool ExemplarPool::synthetic(std::uint64_t seed) {
    ExemplarPool pool;
    for (auto task : all_tasks()) {
        if (!is_generated(task)) continue;
        GenSpec spec;
        spec.task = task;
        spec.per_bin = 4;
        spec.bins = {LengthBin::S};
        spec.rng_seed = mix64(seed, 0x1c1ULL);
        spec.id_prefix = "icl-";
        for (auto& s : generate(spec)) pool.add(std::move(s));
    }
    return pool;
}

std::string render_payload(const Sample& sample, const FormatConfig& fmt) {
    if (sample.sequence) return format_sequence(*sample.sequence, fmt);
    if (!sample.struct_data) throw UsageError(fmt::format("sample '{}' has no payload", sample.id));
    const auto& data = *sample.struct_data;
    if (data.is_string()) return data.get<std::string>();
    if (!data.is_array()) throw UsageError(fmt::format("sample '{}' has a non-array payload", sample.id));
    std::vector<std::string> items;
    items.reserve(data.size());
    for (const auto& item : data) items.push_back(item.dump());
    return join_items(items, fmt);
}

namespace {

struct Rendered {
    std::string text;
    std::size_t payload_offset = 0;
    std::size_t payload_length = 0;
    bool has_payload = false;
};

Rendered substitute(const std::string& tmpl, const std::map<std::string, std::string>& values) {
    Rendered r;
    for (const auto& seg : parse_template(tmpl)) {
        if (!seg.placeholder) {
            r.text += seg.text;
            continue;
        }
        auto it = values.find(seg.text);
        if (it == values.end()) throw UsageError(fmt::format("unknown placeholder {{{}}}", seg.text));
        if (seg.text == "payload") {
            if (r.has_payload) throw UsageError("template uses {payload} more than once");
            r.has_payload = true;
            r.payload_offset = r.text.size();
            r.payload_length = it->second.size();
        }
        r.text += it->second;
    }
    return r;
}

}  // namespace

std::string PromptBuilder::render_exemplar(const Sample& exemplar, const FormatConfig& fmt) const {
    const std::string* tmpl = templates_.find(fmt::format("{}.exemplar", to_string(exemplar.task)));
    if (!tmpl) tmpl = templates_.find("exemplar");
    if (!tmpl) throw UsageError("template directory has no exemplar.txt");
    std::map<std::string, std::string> values{
        {"question", exemplar.question},
        {"payload", render_payload(exemplar, fmt)},
        {"answer", exemplar.gold_answer},
    };
    return substitute(*tmpl, values).text;
}

RenderedPrompt PromptBuilder::build(const Sample& sample, PromptStrategy strategy,
                                    const FormatConfig& fmt) const {
    fmt.validate();
    const auto [name, tmpl] = templates_.lookup(sample.task, strategy);

    std::map<std::string, std::string> values;
    values["question"] = sample.question;
    values["payload"] = render_payload(sample, fmt);
    values["exemplar"] = "";

    RenderedPrompt out;
    if (strategy == PromptStrategy::icl) {
        if (pool_.contains(sample.id)) {
            throw UsageError(fmt::format("sample '{}' is also an ICL exemplar", sample.id));
        }
        const Sample& ex = pool_.select(sample.task, seed_);
        values["exemplar"] = render_exemplar(ex, fmt);
        out.metadata.exemplar_id = ex.id;
    }

    const auto rendered = substitute(*tmpl, values);
    if (!rendered.has_payload) throw UsageError(fmt::format("template '{}' has no {{payload}}", name));

    FormatConfig vanilla = fmt;
    vanilla.mode = FormatMode::vanilla;

    out.system_text = templates_.system_text();
    out.user_text = rendered.text;
    auto& m = out.metadata;
    m.sample_id = sample.id;
    m.task = sample.task;
    m.strategy = strategy;
    m.mode = fmt.mode;
    m.segment_size = fmt.segment_size;
    m.separator = fmt.separator.label();
    m.delimiter = fmt.delimiter;
    m.template_name = name;
    m.input_chars = rendered.payload_length;
    m.vanilla_input_chars = render_payload(sample, vanilla).size();
    m.payload_offset = rendered.payload_offset;
    m.payload_length = rendered.payload_length;
    return out;
}

}  // namespace sepseq
