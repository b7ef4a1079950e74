#include "sepseq/config.hpp"

#include <fstream>
#include <set>

#include <fmt/core.h>

#include "sepseq/errors.hpp"

namespace sepseq {

using ojson = nlohmann::ordered_json;

namespace {

void check_keys(const ojson& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw UsageError(fmt::format("config: '{}' must be an object", section));
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw UsageError(fmt::format("config: unknown key '{}' in '{}'", key, section));
    }
}

template <typename T>
T get(const ojson& j, std::string_view section, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw UsageError(fmt::format("config: '{}.{}' has the wrong type", section, key));
    }
}

template <typename T>
void read(const ojson& j, std::string_view section, const char* key, T& out) {
    if (j.contains(key)) out = get<T>(j, section, key);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) return base / path;
    return path;
}

std::vector<std::string> string_list(const ojson& j, std::string_view section, const char* key) {
    const auto& v = j.at(key);
    if (v.is_string()) {
        std::vector<std::string> out;
        const auto s = v.get<std::string>();
        std::size_t start = 0;
        while (start <= s.size()) {
            auto end = s.find(',', start);
            if (end == std::string::npos) end = s.size();
            if (end > start) out.push_back(s.substr(start, end - start));
            start = end + 1;
        }
        return out;
    }
    return get<std::vector<std::string>>(j, section, key);
}

DatasetSpec dataset_from_json(const ojson& j, const std::filesystem::path& base) {
    check_keys(j, "datasets[]", {"task", "corpus", "path", "generate"});
    DatasetSpec d;
    if (j.contains("task")) d.task = parse_task(get<std::string>(j, "datasets[]", "task"));
    const int sources = int(j.contains("corpus")) + int(j.contains("path")) + int(j.contains("generate"));
    if (sources != 1) throw UsageError("config: each dataset needs exactly one of corpus, path, generate");
    if (j.contains("corpus")) {
        d.kind = DatasetSpec::Kind::corpus;
        d.path = resolve(base, get<std::string>(j, "datasets[]", "corpus"));
    } else if (j.contains("path")) {
        d.kind = DatasetSpec::Kind::real;
        d.path = resolve(base, get<std::string>(j, "datasets[]", "path"));
        if (!d.task) throw UsageError("config: a real dataset needs a task");
    } else {
        d.kind = DatasetSpec::Kind::generate;
        if (!d.task) throw UsageError("config: a generated dataset needs a task");
        const auto& g = j.at("generate");
        check_keys(g, "generate", {"bins", "per_bin", "seed", "int_min", "int_max", "decimal_min", "decimal_max",
                                   "decimal_precision", "one_probability", "id_prefix"});
        d.gen = *d.task == TaskType::repetition ? repetition_spec(0) : GenSpec{};
        d.gen.task = *d.task;
        if (g.contains("bins")) {
            d.gen.bins.clear();
            for (const auto& b : string_list(g, "generate", "bins")) d.gen.bins.push_back(parse_bin(b));
        }
        read(g, "generate", "per_bin", d.gen.per_bin);
        read(g, "generate", "seed", d.gen.rng_seed);
        read(g, "generate", "int_min", d.gen.int_min);
        read(g, "generate", "int_max", d.gen.int_max);
        read(g, "generate", "decimal_min", d.gen.decimal_min);
        read(g, "generate", "decimal_max", d.gen.decimal_max);
        read(g, "generate", "decimal_precision", d.gen.decimal_precision);
        read(g, "generate", "one_probability", d.gen.one_probability);
        read(g, "generate", "id_prefix", d.gen.id_prefix);
    }
    return d;
}

ojson dataset_to_json(const DatasetSpec& d) {
    ojson j;
    if (d.task) j["task"] = to_string(*d.task);
    switch (d.kind) {
        case DatasetSpec::Kind::corpus:
            j["corpus"] = d.path.string();
            break;
        case DatasetSpec::Kind::real:
            j["path"] = d.path.string();
            break;
        case DatasetSpec::Kind::generate: {
            std::vector<std::string> bins;
            for (auto b : d.gen.bins) bins.emplace_back(to_string(b));
            j["generate"] = {{"bins", bins},
                             {"per_bin", d.gen.per_bin},
                             {"seed", d.gen.rng_seed},
                             {"int_min", d.gen.int_min},
                             {"int_max", d.gen.int_max},
                             {"decimal_min", d.gen.decimal_min},
                             {"decimal_max", d.gen.decimal_max},
                             {"decimal_precision", d.gen.decimal_precision},
                             {"one_probability", d.gen.one_probability},
                             {"id_prefix", d.gen.id_prefix}};
            break;
        }
    }
    return j;
}

}  // namespace

FormatConfig RunConfig::format(FormatMode mode) const {
    FormatConfig f;
    f.delimiter = delimiter;
    f.separator = SeparatorSymbol::parse(separator);
    f.segment_size = segment_size;
    f.mode = mode;
    return f;
}

void RunConfig::validate(bool check_endpoint) const {
    if (check_endpoint) endpoint.validate();
    if (strategies.empty()) throw UsageError("config: no strategy");
    if (modes.empty()) throw UsageError("config: no format mode");
    for (auto m : modes) format(m).validate();
    if (runs < 1) throw UsageError("config: runs must be >= 1");
    if (concurrency < 1) throw UsageError("config: concurrency must be >= 1");
    if (max_tokens < 1) throw UsageError("config: max_tokens must be >= 1");
    if (temperature < 0) throw UsageError("config: temperature must be >= 0");
    if (abort_failure_fraction < 0 || abort_failure_fraction > 1) {
        throw UsageError("config: abort_failure_fraction must be in [0, 1]");
    }
    if (retry.max_attempts < 1) throw UsageError("config: retry.max_attempts must be >= 1");
    if (datasets.empty()) throw UsageError("config: no datasets");
    for (auto s : strategies) {
        if (s == PromptStrategy::pot && !exec.configured()) {
            throw UsageError("config: the pot strategy needs exec.command");
        }
    }
}

RunConfig config_from_json(const ojson& j, const std::filesystem::path& base) {
    check_keys(j, "config", {"endpoint", "strategy", "format", "runs", "concurrency", "temperature", "max_tokens",
                             "abort_failure_fraction", "min_request_interval_s", "retry", "datasets",
                             "output_dir", "seed", "templates_dir", "icl_pools", "exec", "bootstrap_resamples"});
    RunConfig c;
    if (j.contains("endpoint")) {
        const auto& e = j.at("endpoint");
        check_keys(e, "endpoint", {"base_url", "model", "api_key_env", "timeout_s", "mock"});
        read(e, "endpoint", "base_url", c.endpoint.base_url);
        read(e, "endpoint", "model", c.endpoint.model);
        read(e, "endpoint", "api_key_env", c.endpoint.api_key_env);
        read(e, "endpoint", "timeout_s", c.endpoint.timeout_s);
        if (e.contains("mock") && !e.at("mock").is_null()) c.endpoint.mock = get<std::string>(e, "endpoint", "mock");
    }
    if (j.contains("strategy")) {
        std::string joined;
        for (const auto& s : string_list(j, "config", "strategy")) joined += (joined.empty() ? "" : ",") + s;
        apply_strategy_flag(c, joined);
    }
    if (j.contains("format")) {
        const auto& f = j.at("format");
        check_keys(f, "format", {"mode", "k", "separator", "delimiter"});
        if (f.contains("mode")) {
            c.modes.clear();
            for (const auto& m : string_list(f, "format", "mode")) c.modes.push_back(parse_format_mode(m));
        }
        read(f, "format", "k", c.segment_size);
        read(f, "format", "separator", c.separator);
        read(f, "format", "delimiter", c.delimiter);
    }
    read(j, "config", "runs", c.runs);
    read(j, "config", "concurrency", c.concurrency);
    read(j, "config", "temperature", c.temperature);
    read(j, "config", "max_tokens", c.max_tokens);
    read(j, "config", "abort_failure_fraction", c.abort_failure_fraction);
    read(j, "config", "min_request_interval_s", c.min_request_interval_s);
    read(j, "config", "seed", c.seed);
    read(j, "config", "bootstrap_resamples", c.bootstrap_resamples);
    if (j.contains("retry")) {
        const auto& r = j.at("retry");
        check_keys(r, "retry", {"max_attempts", "backoff_s"});
        read(r, "retry", "max_attempts", c.retry.max_attempts);
        read(r, "retry", "backoff_s", c.retry.backoff_s);
    }
    if (j.contains("datasets")) {
        if (!j.at("datasets").is_array()) throw UsageError("config: 'datasets' must be an array");
        for (const auto& d : j.at("datasets")) c.datasets.push_back(dataset_from_json(d, base));
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base, get<std::string>(j, "config", "output_dir"));
    if (j.contains("templates_dir") && !j.at("templates_dir").is_null()) {
        c.templates_dir = resolve(base, get<std::string>(j, "config", "templates_dir"));
    }
    if (j.contains("icl_pools")) {
        for (const auto& p : get<std::vector<std::string>>(j, "config", "icl_pools")) {
            c.icl_pools.push_back(resolve(base, p));
        }
    }
    if (j.contains("exec")) {
        const auto& e = j.at("exec");
        check_keys(e, "exec", {"command", "timeout_s", "max_output_bytes", "memory_mb", "isolate_network",
                               "max_concurrent"});
        read(e, "exec", "command", c.exec.command);
        read(e, "exec", "timeout_s", c.exec.timeout_s);
        read(e, "exec", "max_output_bytes", c.exec.max_output_bytes);
        read(e, "exec", "memory_mb", c.exec.memory_limit_mb);
        read(e, "exec", "isolate_network", c.exec.isolate_network);
        read(e, "exec", "max_concurrent", c.exec_concurrency);
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError(fmt::format("cannot open config '{}'", path.string()));
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    return config_from_json(j, path.parent_path());
}

ojson config_to_json(const RunConfig& c) {
    ojson j;
    j["endpoint"] = {{"base_url", c.endpoint.base_url},
                     {"model", c.endpoint.model},
                     {"api_key_env", c.endpoint.api_key_env},
                     {"timeout_s", c.endpoint.timeout_s},
                     {"mock", c.endpoint.mock ? ojson(*c.endpoint.mock) : ojson(nullptr)}};
    std::vector<std::string> strategies, modes;
    for (auto s : c.strategies) strategies.emplace_back(to_string(s));
    for (auto m : c.modes) modes.emplace_back(to_string(m));
    j["strategy"] = strategies;
    j["format"] = {{"mode", modes}, {"k", c.segment_size}, {"separator", c.separator}, {"delimiter", c.delimiter}};
    j["runs"] = c.runs;
    j["concurrency"] = c.concurrency;
    j["temperature"] = c.temperature;
    j["max_tokens"] = c.max_tokens;
    j["abort_failure_fraction"] = c.abort_failure_fraction;
    j["min_request_interval_s"] = c.min_request_interval_s;
    j["retry"] = {{"max_attempts", c.retry.max_attempts}, {"backoff_s", c.retry.backoff_s}};
    auto datasets = ojson::array();
    for (const auto& d : c.datasets) datasets.push_back(dataset_to_json(d));
    j["datasets"] = std::move(datasets);
    j["output_dir"] = c.output_dir.string();
    j["seed"] = c.seed;
    j["templates_dir"] = c.templates_dir ? ojson(c.templates_dir->string()) : ojson(nullptr);
    std::vector<std::string> pools;
    for (const auto& p : c.icl_pools) pools.push_back(p.string());
    j["icl_pools"] = pools;
    j["exec"] = {{"command", c.exec.command},
                 {"timeout_s", c.exec.timeout_s},
                 {"max_output_bytes", c.exec.max_output_bytes},
                 {"memory_mb", c.exec.memory_limit_mb},
                 {"isolate_network", c.exec.isolate_network},
                 {"max_concurrent", c.exec_concurrency}};
    j["bootstrap_resamples"] = c.bootstrap_resamples;
    return j;
}

void apply_strategy_flag(RunConfig& c, std::string_view value) {
    std::vector<PromptStrategy> strategies;
    std::set<FormatMode> modes;
    bool shorthand = false;
    bool plain_vanilla = false;
    std::size_t start = 0;
    while (start <= value.size()) {
        auto end = value.find(',', start);
        if (end == std::string_view::npos) end = value.size();
        const auto part = value.substr(start, end - start);
        start = end + 1;
        if (part.empty()) continue;
        PromptStrategy s;
        if (part == "sepseq") {
            s = PromptStrategy::vanilla;
            modes.insert(FormatMode::sepseq);
            shorthand = true;
        } else {
            s = parse_strategy(part);
            plain_vanilla = plain_vanilla || s == PromptStrategy::vanilla;
        }
        if (std::find(strategies.begin(), strategies.end(), s) == strategies.end()) strategies.push_back(s);
    }
    if (strategies.empty()) throw UsageError("empty strategy list");
    c.strategies = std::move(strategies);
    // "vanilla,sepseq" asks for both formats of the plain prompt.
    if (shorthand && plain_vanilla) modes.insert(FormatMode::vanilla);
    if (shorthand) c.modes.assign(modes.begin(), modes.end());
}

}  // namespace sepseq
