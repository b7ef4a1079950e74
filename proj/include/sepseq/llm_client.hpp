#pragma once

// Chat-completion client: HTTP and in-process mock backends, retry policy,
// bounded-concurrency batch execution and transcript persistence.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sepseq/errors.hpp"
#include "sepseq/prompting.hpp"
#include "sepseq/records.hpp"

namespace sepseq {

struct ModelEndpoint {
    std::string base_url;
    std::string model;
    std::string api_key_env = "LLM_API_KEY";
    double timeout_s = 120.0;
    /// Mock spec such as "oracle?error=0.2"; excludes base_url.
    std::optional<std::string> mock;

    void validate() const;
};

struct ChatResponse {
    std::string content;
    TokenUsage usage;
    double latency_ms = 0.0;
    std::string finish_reason;
};

struct RetryPolicy {
    int max_attempts = 4;
    /// Delay before attempt n (n >= 2) is backoff_s[min(n - 2, size - 1)].
    std::vector<double> backoff_s{1.0, 2.0, 4.0, 8.0};
    bool retry_rate_limit = true;  // 429
    bool retry_server = true;      // 5xx
    bool retry_timeout = true;     // connection failures and timeouts

    bool should_retry(const TransportError& e) const;
    double delay_before(int next_attempt) const;
};

struct RequestTag {
    std::string sample_id;
    std::size_t run_index = 0;
    int attempt = 1;
};

struct ChatRequest {
    const RenderedPrompt* prompt = nullptr;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 4096;
    RequestTag tag;
};

/// Request body exactly {model, messages, temperature, max_tokens}.
nlohmann::ordered_json wire_body(const ChatRequest& request);

/// Parses {choices[0].message.content, choices[0].finish_reason, usage.*}.
/// Missing usage leaves counts empty. Throws TransportError on a body
/// without content.
ChatResponse parse_wire_response(const std::string& body);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// One attempt. Throws TransportError on failure.
    virtual ChatResponse send(const ChatRequest& request) = 0;
};

/// POST {base_url}/chat/completions with a bearer key read from the
/// endpoint's environment variable at send time.
class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(ModelEndpoint endpoint);
    ChatResponse send(const ChatRequest& request) override;

private:
    ModelEndpoint endpoint_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

/// Mock endpoint family, written "<kind>?<key>=<value>&...":
///   oracle     correct answer; error=p gives a wrong but well-formed answer with probability p
///   null       no extractable answer with probability rate=p (default 1), else correct
///   repeat     echoes the payload as the canonical array; one digit corrupted when the
///              sequence is longer than corrupt_above (default 256); other tasks act as oracle
///   segment    wrong answer with probability min(1, longest unseparated run / span)
///              (span default 64); PoT programs stay faithful
/// Common keys: transient=q fails an attempt with a retryable 503 with probability q,
/// seed=s varies the draws, delay_ms=t sleeps per request.
/// Under the pot strategy every kind answers with a Python program.
struct MockSpec {
    enum class Kind { oracle, null_answer, repeat, segment };
    Kind kind = Kind::oracle;
    double error = 0.0;
    double null_rate = 1.0;
    std::size_t corrupt_above = 256;
    double span = 64.0;
    double transient = 0.0;
    std::uint64_t seed = 0;
    int delay_ms = 0;

    static MockSpec parse(std::string_view text);
};

/// sample id -> gold answer, supplied by the harness.
using AnswerKey = std::map<std::string, std::string, std::less<>>;

class MockBackend : public ChatBackend {
public:
    MockBackend(MockSpec spec, AnswerKey key);
    ChatResponse send(const ChatRequest& request) override;

    /// Largest number of concurrent send() calls observed.
    int max_in_flight() const { return max_in_flight_.load(); }
    std::int64_t calls() const { return calls_.load(); }

private:
    std::string answer_text(const ChatRequest& request, double draw) const;
    std::string program_text(const ChatRequest& request, double draw) const;

    MockSpec spec_;
    AnswerKey key_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    std::atomic<std::int64_t> calls_{0};
};

std::shared_ptr<ChatBackend> make_backend(const ModelEndpoint& endpoint, AnswerKey key = {});

/// Thread-safe, append-only JSON-lines writer.
class TranscriptWriter {
public:
    explicit TranscriptWriter(const std::filesystem::path& path);
    void append(const nlohmann::ordered_json& record);

private:
    std::mutex mu_;
    std::ofstream out_;
};

class LlmClient {
public:
    using Sleeper = std::function<void(double seconds)>;

    LlmClient(std::shared_ptr<ChatBackend> backend, std::string model, RetryPolicy policy = {},
              double min_request_interval_s = 0.0);

    /// Sends with retries. Fills a whitespace estimate (flagged) when the
    /// endpoint reports no usage. Throws TransportError once retries are
    /// exhausted or on a non-retryable failure; `attempts_out` receives the count.
    ChatResponse complete(const RenderedPrompt& prompt, double temperature, int max_tokens,
                          const RequestTag& tag, int* attempts_out = nullptr) const;

    const std::string& model() const { return model_; }
    void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

private:
    void pace() const;

    std::shared_ptr<ChatBackend> backend_;
    std::string model_;
    RetryPolicy policy_;
    Sleeper sleeper_;
    double min_interval_s_;
    mutable std::mutex rate_mu_;
    mutable std::chrono::steady_clock::time_point next_slot_{};
};

struct BatchItem {
    const RenderedPrompt* prompt = nullptr;
    std::optional<LengthBin> bin;
    Condition condition;
};

struct BatchOptions {
    std::size_t concurrency = 8;
    std::size_t runs = 10;
    double temperature = 0.0;
    int max_tokens = 4096;
    /// Abort once failures exceed this fraction of all requests.
    double abort_failure_fraction = 0.5;
    /// Runs on the worker after each response (PoT execution).
    std::function<void(RunRecord&)> post_process;
};

/// Executes every item `runs` times with at most `concurrency` requests in
/// flight. Failed requests are kept as records tagged with the error. Records
/// come back ordered by (item, run); each is also appended to `transcript`.
std::vector<RunRecord> run_batch(const LlmClient& client, std::span<const BatchItem> items,
                                 const BatchOptions& options, TranscriptWriter* transcript = nullptr);

/// Transcript line for one record: the record plus the wire request.
nlohmann::ordered_json transcript_entry(const RunRecord& record, const ChatRequest& request);

}  // namespace sepseq
