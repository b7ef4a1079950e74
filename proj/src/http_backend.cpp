#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <chrono>
#include <cstdlib>

#include <fmt/core.h>

#include "sepseq/errors.hpp"
#include "sepseq/llm_client.hpp"

namespace sepseq {

HttpBackend::HttpBackend(ModelEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    const auto& url = endpoint_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw UsageError(fmt::format("base_url '{}' has no scheme", url));
    }
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

ChatResponse HttpBackend::send(const ChatRequest& request) {
    httplib::Client cli(scheme_host_port_);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(endpoint_.timeout_s));
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto started = std::chrono::steady_clock::now();
    const auto res = cli.Post(path_prefix_ + "/chat/completions", headers,
                              wire_body(request).dump(), "application/json");
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

    if (!res) {
        throw TransportError(fmt::format("request failed: {}", httplib::to_string(res.error())), true);
    }
    const int status = res->status;
    if (status != 200) {
        const bool retryable = status == 408 || status == 429 || status >= 500;
        throw TransportError(fmt::format("endpoint returned HTTP {}", status), retryable, status);
    }
    auto response = parse_wire_response(res->body);
    response.latency_ms = latency;
    return response;
}

}  // namespace sepseq
