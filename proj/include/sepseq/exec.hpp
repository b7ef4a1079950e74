#pragma once

// Runs model-written programs for program-of-thought prompting.
//
// Trust boundary: the program runs in a separate process with resource
// limits, an empty environment, a throwaway working directory and, where the
// kernel allows it, a private network namespace with no interfaces. This is
// process isolation, not a container.

#include <cstddef>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace sepseq {

struct ExecSpec {
    /// Interpreter argv; the program file path is appended. Empty disables PoT.
    std::vector<std::string> command;
    double timeout_s = 10.0;
    std::size_t max_output_bytes = 64 * 1024;
    std::size_t memory_limit_mb = 1024;
    std::string file_name = "program.py";
    bool isolate_network = true;

    bool configured() const { return !command.empty(); }
};

struct ExecResult {
    std::string output;  // captured stdout, cut at max_output_bytes
    bool truncated = false;
    bool network_isolated = false;
    double wall_ms = 0.0;
};

/// Throws UsageError when the spec has no command, ExecutionError on a
/// nonzero exit, a signal, or a timeout.
ExecResult run_program(std::string_view code, const ExecSpec& spec);

/// Body of the last fenced code block in a response, or the whole response
/// when it has none.
std::string extract_program(std::string_view response);

/// run_program with a cap on concurrently running programs.
class ProgramRunner {
public:
    explicit ProgramRunner(ExecSpec spec, std::ptrdiff_t max_concurrent = 4)
        : spec_(std::move(spec)), slots_(max_concurrent) {}

    ExecResult run(std::string_view code) {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{slots_};
        return run_program(code, spec_);
    }

    const ExecSpec& spec() const { return spec_; }

private:
    ExecSpec spec_;
    std::counting_semaphore<> slots_;
};

}  // namespace sepseq
