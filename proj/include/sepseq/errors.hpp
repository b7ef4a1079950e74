#pragma once

#include <stdexcept>
#include <string>

namespace sepseq {

/// Error categories. The CLI maps each to a process exit code.
enum class ErrorKind {
    usage,      // bad arguments or configuration
    transport,  // endpoint unreachable, retries exhausted
    data,       // parse, load or schema failure
    execution,  // external program failed or timed out
    domain,     // non-finite numeric input
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error(ErrorKind::usage, message) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorKind::data, message) {}
};

/// Parse failure that remembers where in the input it happened.
class ParseError : public DataError {
public:
    ParseError(const std::string& message, std::size_t offset)
        : DataError(message + " at byte " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class TransportError : public Error {
public:
    TransportError(const std::string& message, bool retryable, int status = 0)
        : Error(ErrorKind::transport, message), retryable_(retryable), status_(status) {}

    bool retryable() const noexcept { return retryable_; }
    /// HTTP status, or 0 when the failure happened below HTTP.
    int status() const noexcept { return status_; }

private:
    bool retryable_;
    int status_;
};

class ExecutionError : public Error {
public:
    ExecutionError(const std::string& message, bool timed_out = false)
        : Error(ErrorKind::execution, message), timed_out_(timed_out) {}

    bool timed_out() const noexcept { return timed_out_; }

private:
    bool timed_out_;
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& message) : Error(ErrorKind::domain, message) {}
};

/// 0 ok, 1 usage, 2 transport, 3 data.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return 1;
        case ErrorKind::transport: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::execution: return 3;
        case ErrorKind::domain: return 3;
    }
    return 1;
}

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::transport: return "transport";
        case ErrorKind::data: return "data";
        case ErrorKind::execution: return "execution";
        case ErrorKind::domain: return "domain";
    }
    return "unknown";
}

}  // namespace sepseq
