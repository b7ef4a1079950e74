#include "sepseq/datagen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "sepseq/errors.hpp"
#include "sepseq/random.hpp"

namespace sepseq {

using ojson = nlohmann::ordered_json;

namespace {

struct TaskName {
    TaskType task;
    const char* name;
};

constexpr std::array<TaskName, 11> kTaskNames{{
    {TaskType::max_int, "max_int"},
    {TaskType::min_int, "min_int"},
    {TaskType::max_float, "max_float"},
    {TaskType::min_float, "min_float"},
    {TaskType::indexing, "indexing"},
    {TaskType::counting, "counting"},
    {TaskType::repetition, "repetition"},
    {TaskType::number_string, "number_string"},
    {TaskType::number_list, "number_list"},
    {TaskType::stock, "stock"},
    {TaskType::weather, "weather"},
}};

}  // namespace

const char* to_string(TaskType task) {
    for (const auto& t : kTaskNames) {
        if (t.task == task) return t.name;
    }
    return "unknown";
}

TaskType parse_task(std::string_view text) {
    for (const auto& t : kTaskNames) {
        if (text == t.name) return t.task;
    }
    // Name used in the dataset statistics table.
    if (text == "mixed_number_string") return TaskType::number_string;
    throw UsageError(fmt::format("unknown task '{}'", text));
}

const std::vector<TaskType>& all_tasks() {
    static const std::vector<TaskType> tasks = [] {
        std::vector<TaskType> out;
        for (const auto& t : kTaskNames) out.push_back(t.task);
        return out;
    }();
    return tasks;
}

bool is_generated(TaskType task) {
    switch (task) {
        case TaskType::max_int:
        case TaskType::min_int:
        case TaskType::max_float:
        case TaskType::min_float:
        case TaskType::indexing:
        case TaskType::counting:
        case TaskType::repetition:
            return true;
        default:
            return false;
    }
}

bool is_choice_task(TaskType task) {
    return task == TaskType::number_list || task == TaskType::stock || task == TaskType::weather;
}

const char* to_string(LengthBin bin) {
    switch (bin) {
        case LengthBin::S: return "S";
        case LengthBin::M: return "M";
        case LengthBin::L: return "L";
        case LengthBin::XL: return "XL";
        case LengthBin::XXL: return "XXL";
    }
    return "?";
}

LengthBin parse_bin(std::string_view text) {
    for (auto b : {LengthBin::S, LengthBin::M, LengthBin::L, LengthBin::XL, LengthBin::XXL}) {
        if (text == to_string(b)) return b;
    }
    throw UsageError(fmt::format("unknown length bin '{}' (S, M, L, XL, XXL)", text));
}

BinBounds bounds(LengthBin bin) {
    switch (bin) {
        case LengthBin::S: return {2, 32};
        case LengthBin::M: return {33, 128};
        case LengthBin::L: return {129, 256};
        case LengthBin::XL: return {257, 512};
        case LengthBin::XXL: return {513, 1024};
    }
    return {0, 0};
}

std::string bin_label(LengthBin bin) {
    const auto b = bounds(bin);
    return fmt::format("{}: {}-{}", to_string(bin), b.min_len, b.max_len);
}

std::optional<LengthBin> bin_for_length(std::size_t n) {
    for (auto b : {LengthBin::S, LengthBin::M, LengthBin::L, LengthBin::XL, LengthBin::XXL}) {
        const auto r = bounds(b);
        if (n >= r.min_len && n <= r.max_len) return b;
    }
    return std::nullopt;
}

std::vector<LengthBin> parse_bins(std::string_view csv) {
    std::vector<LengthBin> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto end = csv.find(',', start);
        if (end == std::string_view::npos) end = csv.size();
        auto part = csv.substr(start, end - start);
        if (!part.empty()) out.push_back(parse_bin(part));
        start = end + 1;
    }
    if (out.empty()) throw UsageError("no length bins given");
    return out;
}

GenSpec repetition_spec(std::uint64_t seed) {
    GenSpec spec;
    spec.task = TaskType::repetition;
    spec.per_bin = 50;
    spec.bins = {LengthBin::S, LengthBin::M, LengthBin::L, LengthBin::XL, LengthBin::XXL};
    spec.rng_seed = seed;
    return spec;
}

std::string default_question(TaskType task) {
    switch (task) {
        case TaskType::max_int:
            return "Identify the index (0-based) of the maximum integer in the sequence. If the "
                   "maximum occurs more than once, give the first such index.";
        case TaskType::min_int:
            return "Identify the index (0-based) of the minimum integer in the sequence. If the "
                   "minimum occurs more than once, give the first such index.";
        case TaskType::max_float:
            return "Identify the index (0-based) of the maximum floating-point number in the "
                   "sequence. If the maximum occurs more than once, give the first such index.";
        case TaskType::min_float:
            return "Identify the index (0-based) of the minimum floating-point number in the "
                   "sequence. If the minimum occurs more than once, give the first such index.";
        case TaskType::indexing:
            return "Determine the index (0-based) of the last occurrence of 1 in the binary "
                   "sequence.";
        case TaskType::counting:
            return "Count the total number of 1s in the binary sequence.";
        case TaskType::repetition:
            return "Reproduce the numerical sequence exactly, without any additions, omissions or "
                   "alterations.";
        case TaskType::number_string:
            return "How many numbers are there in the string? Note that a sequence like 'a243b' "
                   "counts as a single number.";
        default:
            return "";
    }
}

namespace {

std::uint64_t sample_seed(const GenSpec& spec, LengthBin bin, std::size_t index) {
    std::uint64_t s = mix64(spec.rng_seed, static_cast<std::uint64_t>(spec.task) + 1);
    s = mix64(s, static_cast<std::uint64_t>(bin) + 1);
    return mix64(s, index);
}

NumericalSequence draw_sequence(const GenSpec& spec, std::size_t n, Rng& rng) {
    std::vector<std::int64_t> values(n);
    switch (spec.task) {
        case TaskType::max_int:
        case TaskType::min_int:
            for (auto& v : values) v = rng.uniform_int(spec.int_min, spec.int_max);
            return NumericalSequence::from_integers(values);
        case TaskType::max_float:
        case TaskType::min_float:
        case TaskType::repetition:
            for (auto& v : values) v = rng.uniform_int(spec.decimal_min, spec.decimal_max);
            return NumericalSequence::from_scaled(values, spec.decimal_precision);
        case TaskType::indexing:
        case TaskType::counting: {
            for (auto& v : values) v = rng.bernoulli(spec.one_probability) ? 1 : 0;
            if (spec.task == TaskType::indexing &&
                std::find(values.begin(), values.end(), 1) == values.end()) {
                values[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1))] = 1;
            }
            return NumericalSequence::from_integers(values);
        }
        default:
            throw UsageError(fmt::format("task '{}' is not generated", to_string(spec.task)));
    }
}

}  // namespace

std::vector<Sample> generate(const GenSpec& spec) {
    if (!is_generated(spec.task)) {
        throw UsageError(fmt::format("task '{}' is loaded from files, not generated",
                                     to_string(spec.task)));
    }
    if (spec.per_bin < 1) throw UsageError("per_bin must be >= 1");
    if (spec.bins.empty()) throw UsageError("at least one length bin is required");
    if (spec.int_min > spec.int_max || spec.decimal_min > spec.decimal_max) {
        throw UsageError("empty value range");
    }
    if (spec.one_probability < 0.0 || spec.one_probability > 1.0) {
        throw UsageError("one_probability must lie in [0, 1]");
    }

    std::vector<Sample> out;
    out.reserve(spec.per_bin * spec.bins.size());
    for (auto bin : spec.bins) {
        if (bin == LengthBin::XXL && spec.task != TaskType::repetition) {
            throw UsageError("the XXL bin is only used by the repetition task");
        }
        const auto range = bounds(bin);
        for (std::size_t i = 0; i < spec.per_bin; ++i) {
            Sample s;
            s.seed = sample_seed(spec, bin, i);
            Rng rng(s.seed);
            const auto n = static_cast<std::size_t>(rng.uniform_int(
                static_cast<std::int64_t>(range.min_len), static_cast<std::int64_t>(range.max_len)));
            s.id = fmt::format("{}{}-{}-{:03}", spec.id_prefix, to_string(spec.task),
                               to_string(bin), i);
            s.task = spec.task;
            s.bin = bin;
            s.sequence = draw_sequence(spec, n, rng);
            s.question = default_question(spec.task);
            s.gold_answer = oracle(spec.task, *s.sequence);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::string canonical_array(const NumericalSequence& seq) {
    std::string out = "[";
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) out += ", ";
        out += seq[i].rendered();
    }
    out += ']';
    return out;
}

std::string oracle(TaskType task, const NumericalSequence& seq) {
    const auto& v = seq.values();
    switch (task) {
        case TaskType::max_int:
        case TaskType::max_float: {
            std::size_t best = 0;
            for (std::size_t i = 1; i < v.size(); ++i) {
                if (v[i] > v[best]) best = i;
            }
            return std::to_string(best);
        }
        case TaskType::min_int:
        case TaskType::min_float: {
            std::size_t best = 0;
            for (std::size_t i = 1; i < v.size(); ++i) {
                if (v[i] < v[best]) best = i;
            }
            return std::to_string(best);
        }
        case TaskType::indexing: {
            for (std::size_t i = v.size(); i-- > 0;) {
                if (v[i].is_integer() && v[i].mantissa() == 1) return std::to_string(i);
            }
            return "-1";
        }
        case TaskType::counting: {
            const auto n = std::count_if(v.begin(), v.end(), [](const NumberValue& x) {
                return x.is_integer() && x.mantissa() == 1;
            });
            return std::to_string(n);
        }
        case TaskType::repetition:
            return canonical_array(seq);
        default:
            throw UsageError(fmt::format("no sequence oracle for task '{}'", to_string(task)));
    }
}

std::size_t count_digit_runs(std::string_view text) {
    std::size_t runs = 0;
    bool in_run = false;
    for (char c : text) {
        const bool digit = c >= '0' && c <= '9';
        if (digit && !in_run) ++runs;
        in_run = digit;
    }
    return runs;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Records from a JSON array file or a one-object-per-line file.
std::vector<ojson> read_records(const std::filesystem::path& path) {
    const std::string text = slurp(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    std::vector<ojson> records;
    if (first == std::string::npos) return records;
    try {
        if (text[first] == '[') {
            auto doc = ojson::parse(text);
            for (auto& r : doc) records.push_back(std::move(r));
            return records;
        }
        std::istringstream lines(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(lines, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                records.push_back(ojson::parse(line));
            } catch (const ojson::parse_error& e) {
                throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
            }
        }
    } catch (const ojson::parse_error& e) {
        throw DataError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return records;
}

bool is_option_letter(const std::string& s) {
    return s.size() == 1 && s[0] >= 'A' && s[0] <= 'H';
}

}  // namespace

std::vector<Sample> load_real(const std::filesystem::path& path, TaskType task) {
    if (is_generated(task)) {
        throw UsageError(fmt::format("task '{}' is generated, not loaded", to_string(task)));
    }
    const auto records = read_records(path);
    std::vector<Sample> out;
    out.reserve(records.size());
    for (std::size_t idx = 0; idx < records.size(); ++idx) {
        const auto& r = records[idx];
        std::string id = fmt::format("{}-{:04}", to_string(task), idx);
        if (r.is_object() && r.contains("id") && r["id"].is_string()) id = r["id"].get<std::string>();
        auto fail = [&](const std::string& what) {
            return DataError(fmt::format("{}: record '{}': {}", path.string(), id, what));
        };
        if (!r.is_object()) throw fail("not an object");
        if (r.contains("task_type")) {
            if (!r["task_type"].is_string()) throw fail("task_type must be a string");
            TaskType declared;
            try {
                declared = parse_task(r["task_type"].get<std::string>());
            } catch (const UsageError&) {
                throw fail("unknown task_type");
            }
            if (declared != task) throw fail("task_type does not match the requested task");
        }
        if (!r.contains("question") || !r["question"].is_string()) throw fail("missing question");
        if (!r.contains("struct_data")) throw fail("missing struct_data");
        if (!r.contains("answer")) throw fail("missing answer");

        Sample s;
        s.id = id;
        s.task = task;
        s.question = r["question"].get<std::string>();
        s.struct_data = r["struct_data"];
        s.seed = r.value("seed", std::uint64_t{0});
        const auto& answer = r["answer"];
        const auto& data = r["struct_data"];

        if (task == TaskType::number_string) {
            if (!data.is_string()) throw fail("struct_data must be a string");
            if (answer.is_number_integer() && answer.get<std::int64_t>() >= 0) {
                s.gold_answer = std::to_string(answer.get<std::int64_t>());
            } else if (answer.is_string() && !answer.get<std::string>().empty() &&
                       std::all_of(answer.get_ref<const std::string&>().begin(),
                                   answer.get_ref<const std::string&>().end(),
                                   [](char c) { return c >= '0' && c <= '9'; })) {
                s.gold_answer = std::to_string(std::stoll(answer.get<std::string>()));
            } else {
                throw fail("answer must be a non-negative integer");
            }
        } else {
            if (!data.is_array() || data.empty()) throw fail("struct_data must be a non-empty array");
            for (const auto& item : data) {
                const bool ok = task == TaskType::number_list ? item.is_number() : item.is_object();
                if (!ok) {
                    throw fail(task == TaskType::number_list ? "struct_data items must be numbers"
                                                             : "struct_data items must be objects");
                }
            }
            if (!answer.is_string() || !is_option_letter(answer.get<std::string>())) {
                throw fail("answer must be a single option letter A-H");
            }
            s.gold_answer = answer.get<std::string>();
            if (s.question.find("Options:") == std::string::npos ||
                s.question.find(s.gold_answer + ":") == std::string::npos) {
                throw fail("question does not list the answer as a lettered option");
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::string> audit_number_string(const std::vector<Sample>& samples) {
    std::vector<std::string> mismatched;
    for (const auto& s : samples) {
        if (s.task != TaskType::number_string || !s.struct_data || !s.struct_data->is_string()) {
            continue;
        }
        const auto runs = count_digit_runs(s.struct_data->get<std::string>());
        if (std::to_string(runs) != s.gold_answer) mismatched.push_back(s.id);
    }
    return mismatched;
}

ojson sample_to_json(const Sample& sample) {
    ojson j;
    j["id"] = sample.id;
    j["task_type"] = to_string(sample.task);
    j["bin"] = sample.bin ? ojson(to_string(*sample.bin)) : ojson(nullptr);
    if (sample.sequence) {
        auto ts = ojson::array();
        for (const auto& v : sample.sequence->values()) {
            if (v.is_integer()) {
                ts.push_back(v.mantissa());
            } else {
                ts.push_back(v.to_double());
            }
        }
        j["ts"] = std::move(ts);
        j["precision"] = sample.sequence->precision();
    } else if (sample.struct_data) {
        j["struct_data"] = *sample.struct_data;
    }
    j["question"] = sample.question;
    j["answer"] = sample.gold_answer;
    j["seed"] = sample.seed;
    return j;
}

Sample sample_from_json(const ojson& r) {
    const std::string id = r.value("id", std::string{"<no id>"});
    auto fail = [&](const std::string& what) {
        return DataError(fmt::format("record '{}': {}", id, what));
    };
    if (!r.is_object()) throw fail("not an object");
    Sample s;
    try {
        s.id = r.at("id").get<std::string>();
        s.task = parse_task(r.at("task_type").get<std::string>());
        if (r.contains("bin") && !r["bin"].is_null()) s.bin = parse_bin(r["bin"].get<std::string>());
        s.question = r.at("question").get<std::string>();
        const auto& answer = r.at("answer");
        s.gold_answer = answer.is_string() ? answer.get<std::string>() : answer.dump();
        s.seed = r.value("seed", std::uint64_t{0});
    } catch (const ojson::exception& e) {
        throw fail(e.what());
    } catch (const UsageError& e) {
        throw fail(e.what());
    }

    const bool has_ts = r.contains("ts");
    const bool has_struct = r.contains("struct_data");
    if (has_ts == has_struct) throw fail("exactly one of ts / struct_data must be present");
    if (has_ts) {
        const auto& ts = r["ts"];
        if (!ts.is_array() || ts.empty()) throw fail("ts must be a non-empty array");
        const int precision = r.value("precision", 0);
        if (precision < 0 || precision > 9) throw fail("precision out of range");
        const double scale = std::pow(10.0, precision);
        std::vector<std::int64_t> mantissas;
        mantissas.reserve(ts.size());
        for (const auto& x : ts) {
            if (!x.is_number()) throw fail("ts values must be numbers");
            if (precision == 0) {
                if (!x.is_number_integer()) throw fail("integer ts holds a non-integer");
                mantissas.push_back(x.get<std::int64_t>());
            } else {
                mantissas.push_back(std::llround(x.get<double>() * scale));
            }
        }
        s.sequence = NumericalSequence::from_scaled(mantissas, precision);
    } else {
        s.struct_data = r["struct_data"];
    }
    return s;
}

void write_corpus(std::ostream& out, const std::vector<Sample>& samples) {
    for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

void write_corpus(const std::filesystem::path& path, const std::vector<Sample>& samples) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    write_corpus(out, samples);
}

std::vector<Sample> read_corpus(const std::filesystem::path& path) {
    std::vector<Sample> out;
    for (const auto& r : read_records(path)) out.push_back(sample_from_json(r));
    return out;
}

}  // namespace sepseq
