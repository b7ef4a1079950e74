#include "sepseq/llm_client.hpp"

#include <algorithm>
#include <thread>

#include <fmt/core.h>

#include "sepseq/errors.hpp"
#include "sepseq/random.hpp"

namespace sepseq {

using ojson = nlohmann::ordered_json;

void ModelEndpoint::validate() const {
    if (mock && !base_url.empty()) {
        throw UsageError("endpoint sets both a mock and a base_url; choose one");
    }
    if (!mock && base_url.empty()) throw UsageError("endpoint needs a base_url or a mock");
    if (!mock && model.empty()) throw UsageError("endpoint needs a model id");
    if (timeout_s <= 0) throw UsageError("endpoint timeout must be positive");
    if (mock) MockSpec::parse(*mock);
}

bool RetryPolicy::should_retry(const TransportError& e) const {
    if (!e.retryable()) return false;
    if (e.status() == 429) return retry_rate_limit;
    if (e.status() >= 500) return retry_server;
    return retry_timeout;
}

double RetryPolicy::delay_before(int next_attempt) const {
    if (backoff_s.empty() || next_attempt <= 1) return 0.0;
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(next_attempt - 2), backoff_s.size() - 1);
    return backoff_s[i];
}

ojson wire_body(const ChatRequest& request) {
    ojson body;
    body["model"] = request.model;
    body["messages"] = ojson::array({
        ojson{{"role", "system"}, {"content", request.prompt->system_text}},
        ojson{{"role", "user"}, {"content", request.prompt->user_text}},
    });
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    return body;
}

ChatResponse parse_wire_response(const std::string& body) {
    ChatResponse out;
    ojson j;
    try {
        j = ojson::parse(body);
    } catch (const ojson::parse_error& e) {
        throw TransportError(fmt::format("response is not JSON: {}", e.what()), false);
    }
    try {
        const auto& choice = j.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        out.content = content.is_null() ? std::string{} : content.get<std::string>();
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
            out.finish_reason = choice["finish_reason"].get<std::string>();
        }
    } catch (const ojson::exception& e) {
        throw TransportError(fmt::format("response has no choices[0].message.content: {}", e.what()),
                             false);
    }
    if (j.contains("usage") && j["usage"].is_object()) {
        const auto& u = j["usage"];
        auto field = [&](const char* k) -> std::optional<std::int64_t> {
            if (u.contains(k) && u[k].is_number_integer() && u[k].get<std::int64_t>() >= 0) {
                return u[k].get<std::int64_t>();
            }
            return std::nullopt;
        };
        out.usage.prompt_tokens = field("prompt_tokens");
        out.usage.completion_tokens = field("completion_tokens");
        out.usage.total_tokens = field("total_tokens");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mock endpoint

MockSpec MockSpec::parse(std::string_view text) {
    MockSpec spec;
    const auto q = text.find('?');
    const auto kind = text.substr(0, q);
    if (kind == "oracle") {
        spec.kind = Kind::oracle;
    } else if (kind == "null") {
        spec.kind = Kind::null_answer;
    } else if (kind == "repeat") {
        spec.kind = Kind::repeat;
    } else if (kind == "segment") {
        spec.kind = Kind::segment;
    } else {
        throw UsageError(fmt::format("unknown mock '{}' (oracle, null, repeat, segment)", kind));
    }
    if (q == std::string_view::npos) return spec;

    auto params = text.substr(q + 1);
    while (!params.empty()) {
        const auto amp = params.find('&');
        const auto pair = params.substr(0, amp);
        params = amp == std::string_view::npos ? std::string_view{} : params.substr(amp + 1);
        const auto eq = pair.find('=');
        if (eq == std::string_view::npos) throw UsageError(fmt::format("mock parameter '{}' has no value", pair));
        const std::string key(pair.substr(0, eq));
        const std::string value(pair.substr(eq + 1));
        double x = 0;
        try {
            x = std::stod(value);
        } catch (const std::exception&) {
            throw UsageError(fmt::format("mock parameter '{}' is not a number", pair));
        }
        auto probability = [&](double p) {
            if (p < 0 || p > 1) throw UsageError(fmt::format("mock parameter '{}' must lie in [0,1]", key));
            return p;
        };
        if (key == "error") {
            spec.error = probability(x);
        } else if (key == "rate") {
            spec.null_rate = probability(x);
        } else if (key == "transient") {
            spec.transient = probability(x);
        } else if (key == "corrupt_above") {
            spec.corrupt_above = static_cast<std::size_t>(x);
        } else if (key == "span") {
            if (x <= 0) throw UsageError("mock span must be positive");
            spec.span = x;
        } else if (key == "seed") {
            spec.seed = static_cast<std::uint64_t>(x);
        } else if (key == "delay_ms") {
            spec.delay_ms = static_cast<int>(x);
        } else {
            throw UsageError(fmt::format("unknown mock parameter '{}'", key));
        }
    }
    return spec;
}

MockBackend::MockBackend(MockSpec spec, AnswerKey key) : spec_(spec), key_(std::move(key)) {}

namespace {

constexpr std::string_view kNoAnswer = "I cannot determine the answer from the given data.";

FormatConfig format_of(const PromptMetadata& m) {
    FormatConfig cfg;
    cfg.delimiter = m.delimiter;
    cfg.separator = SeparatorSymbol::parse(m.separator);
    cfg.segment_size = m.segment_size;
    cfg.mode = m.mode;
    return cfg;
}

std::optional<NumericalSequence> payload_sequence(const RenderedPrompt& p) {
    if (!is_generated(p.metadata.task)) return std::nullopt;
    try {
        return parse_formatted(p.payload(), format_of(p.metadata));
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::string corrupt_digit(std::string text, double draw) {
    std::vector<std::size_t> digits;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] >= '0' && text[i] <= '9') digits.push_back(i);
    }
    if (digits.empty()) return text + "0";
    const auto pos = digits[std::min(digits.size() - 1, static_cast<std::size_t>(draw * digits.size()))];
    text[pos] = static_cast<char>('0' + (text[pos] - '0' + 1) % 10);
    return text;
}

std::string wrong_answer(const std::string& gold, TaskType task, double draw) {
    if (is_choice_task(task)) return gold == "A" ? "B" : "A";
    if (task == TaskType::repetition) return corrupt_digit(gold, draw);
    try {
        return std::to_string(std::stoll(gold) + 1);
    } catch (const std::exception&) {
        return gold + "1";
    }
}

// Longest run of values not interrupted by a separator.
std::size_t longest_segment(const RenderedPrompt& p) {
    std::size_t n = 1;
    try {
        n = split_items(p.payload(), format_of(p.metadata)).size();
    } catch (const Error&) {
        n = p.metadata.payload_length;
    }
    if (p.metadata.mode == FormatMode::sepseq) return std::min(n, p.metadata.segment_size);
    return n;
}

std::string python_list(const NumericalSequence& seq) {
    std::string out = "[";
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) out += ", ";
        out += seq[i].rendered();
    }
    return out + "]";
}

std::string python_strings(const NumericalSequence& seq) {
    std::string out = "[";
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) out += ", ";
        out += '"' + seq[i].rendered() + '"';
    }
    return out + "]";
}

std::string faithful_program(TaskType task, const RenderedPrompt& p, const std::string& gold) {
    if (auto seq = payload_sequence(p)) {
        const auto data = python_list(*seq);
        switch (task) {
            case TaskType::max_int:
            case TaskType::max_float:
                return "data = " + data +
                       "\nbest = 0\nfor i, x in enumerate(data):\n    if x > data[best]:\n"
                       "        best = i\nprint(best)\n";
            case TaskType::min_int:
            case TaskType::min_float:
                return "data = " + data +
                       "\nbest = 0\nfor i, x in enumerate(data):\n    if x < data[best]:\n"
                       "        best = i\nprint(best)\n";
            case TaskType::indexing:
                return "data = " + data +
                       "\nlast = -1\nfor i, x in enumerate(data):\n    if x == 1:\n        last = i\n"
                       "print(last)\n";
            case TaskType::counting:
                return "data = " + data + "\nprint(sum(1 for x in data if x == 1))\n";
            case TaskType::repetition:
                return "data = " + python_strings(*seq) + "\nprint('[' + ', '.join(data) + ']')\n";
            default:
                break;
        }
    }
    if (task == TaskType::number_string) {
        return "import re\ntext = " + nlohmann::json(std::string(p.payload())).dump() +
               "\nprint(len(re.findall(r'[0-9]+', text)))\n";
    }
    return "print(" + nlohmann::json(gold).dump() + ")\n";
}

}  // namespace

std::string MockBackend::answer_text(const ChatRequest& request, double draw) const {
    const auto& p = *request.prompt;
    const auto task = p.metadata.task;

    std::optional<std::string> gold;
    if (auto it = key_.find(p.metadata.sample_id); it != key_.end()) {
        gold = it->second;
    } else if (auto seq = payload_sequence(p)) {
        gold = oracle(task, *seq);
    }
    if (!gold) return std::string(kNoAnswer);

    bool wrong = false;
    switch (spec_.kind) {
        case MockSpec::Kind::oracle:
            wrong = draw < spec_.error;
            break;
        case MockSpec::Kind::null_answer:
            if (draw < spec_.null_rate) return std::string(kNoAnswer);
            break;
        case MockSpec::Kind::repeat:
            if (task == TaskType::repetition) {
                auto seq = payload_sequence(p);
                if (!seq) return std::string(kNoAnswer);
                auto text = canonical_array(*seq);
                if (seq->size() > spec_.corrupt_above) text = corrupt_digit(std::move(text), draw);
                return text;
            }
            break;
        case MockSpec::Kind::segment:
            wrong = draw < std::min(1.0, static_cast<double>(longest_segment(p)) / spec_.span);
            break;
    }
    const std::string value = wrong ? wrong_answer(*gold, task, draw) : *gold;
    if (task == TaskType::repetition) return value;
    return "I went through the data item by item.\nAnswer: " + value;
}

std::string MockBackend::program_text(const ChatRequest& request, double draw) const {
    const auto& p = *request.prompt;
    std::string gold;
    if (auto it = key_.find(p.metadata.sample_id); it != key_.end()) {
        gold = it->second;
    } else if (auto seq = payload_sequence(p)) {
        gold = oracle(p.metadata.task, *seq);
    }

    std::string code;
    if (spec_.kind == MockSpec::Kind::null_answer && draw < spec_.null_rate) {
        return std::string(kNoAnswer);
    }
    if (spec_.kind == MockSpec::Kind::oracle && draw < spec_.error) {
        code = "print(" + nlohmann::json(wrong_answer(gold, p.metadata.task, draw)).dump() + ")\n";
    } else {
        code = faithful_program(p.metadata.task, p, gold);
    }
    return "```python\n" + code + "```";
}

ChatResponse MockBackend::send(const ChatRequest& request) {
    calls_.fetch_add(1);
    const int now = in_flight_.fetch_add(1) + 1;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
        std::atomic<int>& n;
        ~Leave() { n.fetch_sub(1); }
    } leave{in_flight_};

    if (spec_.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(spec_.delay_ms));

    const auto& p = *request.prompt;
    const std::uint64_t key =
        mix64(mix64(hash_string(p.metadata.sample_id), request.tag.run_index), spec_.seed);
    if (spec_.transient > 0 &&
        hashed_uniform(mix64(key, 0x7a11ULL + static_cast<std::uint64_t>(request.tag.attempt))) <
            spec_.transient) {
        throw TransportError("mock transient failure", true, 503);
    }
    const double draw = hashed_uniform(key);

    ChatResponse out;
    out.content = p.metadata.strategy == PromptStrategy::pot ? program_text(request, draw)
                                                            : answer_text(request, draw);
    out.finish_reason = "stop";
    out.usage.prompt_tokens = estimate_tokens(p.system_text) + estimate_tokens(p.user_text);
    out.usage.completion_tokens = estimate_tokens(out.content);
    out.usage.total_tokens = *out.usage.prompt_tokens + *out.usage.completion_tokens;
    return out;
}

std::shared_ptr<ChatBackend> make_backend(const ModelEndpoint& endpoint, AnswerKey key) {
    endpoint.validate();
    if (endpoint.mock) return std::make_shared<MockBackend>(MockSpec::parse(*endpoint.mock), std::move(key));
    return std::make_shared<HttpBackend>(endpoint);
}

// ---------------------------------------------------------------------------
// Transcripts and client

TranscriptWriter::TranscriptWriter(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw DataError(fmt::format("cannot open transcript '{}'", path.string()));
}

void TranscriptWriter::append(const ojson& record) {
    const auto line = record.dump();
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
}

LlmClient::LlmClient(std::shared_ptr<ChatBackend> backend, std::string model, RetryPolicy policy,
                     double min_request_interval_s)
    : backend_(std::move(backend)),
      model_(std::move(model)),
      policy_(std::move(policy)),
      sleeper_([](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); }),
      min_interval_s_(min_request_interval_s) {
    if (policy_.max_attempts < 1) throw UsageError("retry max_attempts must be >= 1");
}

void LlmClient::pace() const {
    if (min_interval_s_ <= 0) return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(rate_mu_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                std::chrono::duration<double>(min_interval_s_));
    }
    std::this_thread::sleep_until(slot);
}

ChatResponse LlmClient::complete(const RenderedPrompt& prompt, double temperature, int max_tokens,
                                 const RequestTag& tag, int* attempts_out) const {
    ChatRequest request{&prompt, model_, temperature, max_tokens, tag};
    for (int attempt = 1;; ++attempt) {
        request.tag.attempt = attempt;
        if (attempts_out) *attempts_out = attempt;
        pace();
        const auto started = std::chrono::steady_clock::now();
        try {
            auto response = backend_->send(request);
            if (response.latency_ms <= 0) {
                response.latency_ms = std::chrono::duration<double, std::milli>(
                                          std::chrono::steady_clock::now() - started)
                                          .count();
            }
            if (!response.usage.known()) {
                response.usage.estimated = true;
                response.usage.prompt_tokens = estimate_tokens(prompt.system_text) + estimate_tokens(prompt.user_text);
                response.usage.completion_tokens = estimate_tokens(response.content);
                response.usage.total_tokens =
                    *response.usage.prompt_tokens + *response.usage.completion_tokens;
            }
            return response;
        } catch (const TransportError& e) {
            if (attempt >= policy_.max_attempts || !policy_.should_retry(e)) {
                throw TransportError(fmt::format("{} (after {} attempt{})", e.what(), attempt,
                                                 attempt == 1 ? "" : "s"),
                                     false, e.status());
            }
            sleeper_(policy_.delay_before(attempt + 1));
        }
    }
}

ojson transcript_entry(const RunRecord& record, const ChatRequest& request) {
    auto j = to_json(record);
    j["request"] = wire_body(request);
    const auto& m = request.prompt->metadata;
    j["prompt"] = {
        {"template", m.template_name},
        {"payload_offset", m.payload_offset},
        {"payload_length", m.payload_length},
        {"delimiter", m.delimiter},
        {"exemplar_id", m.exemplar_id},
    };
    return j;
}

std::vector<RunRecord> run_batch(const LlmClient& client, std::span<const BatchItem> items,
                                 const BatchOptions& options, TranscriptWriter* transcript) {
    if (options.concurrency < 1) throw UsageError("concurrency must be >= 1");
    if (options.runs < 1) throw UsageError("runs must be >= 1");

    const std::size_t total = items.size() * options.runs;
    std::vector<RunRecord> records(total);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failures{0};
    std::atomic<bool> abort{false};
    const auto failure_limit = static_cast<std::size_t>(options.abort_failure_fraction * static_cast<double>(total));

    auto worker = [&] {
        while (!abort.load()) {
            const std::size_t job = next.fetch_add(1);
            if (job >= total) return;
            const auto& item = items[job / options.runs];
            const std::size_t run = job % options.runs;
            const auto& prompt = *item.prompt;

            RunRecord r;
            r.sample_id = prompt.metadata.sample_id;
            r.run_index = run;
            r.task = prompt.metadata.task;
            r.bin = item.bin;
            r.condition = item.condition;
            r.input_chars = prompt.metadata.input_chars;
            r.vanilla_input_chars = prompt.metadata.vanilla_input_chars;

            RequestTag tag{r.sample_id, run, 1};
            try {
                auto response = client.complete(prompt, options.temperature, options.max_tokens, tag,
                                                &r.attempts);
                r.response = std::move(response.content);
                r.usage = response.usage;
                r.latency_ms = response.latency_ms;
                r.finish_reason = std::move(response.finish_reason);
                if (options.post_process) options.post_process(r);
            } catch (const TransportError& e) {
                r.error = e.what();
                if (failures.fetch_add(1) + 1 > failure_limit) abort.store(true);
            }
            if (transcript) {
                ChatRequest request{&prompt, client.model(), options.temperature, options.max_tokens, tag};
                transcript->append(transcript_entry(r, request));
            }
            records[job] = std::move(r);
        }
    };

    const std::size_t n_workers = std::min(options.concurrency, std::max<std::size_t>(total, 1));
    {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    }

    if (abort.load()) {
        throw TransportError(fmt::format("aborted: {} of {} requests failed (limit {:.0f}%)",
                                         failures.load(), total, options.abort_failure_fraction * 100),
                             false);
    }
    return records;
}

}  // namespace sepseq
