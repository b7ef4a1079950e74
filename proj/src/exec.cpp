#include "sepseq/exec.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include <fmt/core.h>

#include "sepseq/errors.hpp"

namespace sepseq {

namespace fs = std::filesystem;

namespace {

class ScratchDir {
public:
    ScratchDir() {
        std::string tmpl = (fs::temp_directory_path() / "sepseq-pot-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) {
            throw ExecutionError(fmt::format("mkdtemp failed: {}", std::strerror(errno)));
        }
        path_ = tmpl;
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() { reset(); }
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        reset();
        fd_ = std::exchange(o.fd_, -1);
        return *this;
    }
    int get() const { return fd_; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

std::pair<Fd, Fd> make_pipe() {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) {
        throw ExecutionError(fmt::format("pipe failed: {}", std::strerror(errno)));
    }
    return {Fd(fds[0]), Fd(fds[1])};
}

void set_limit(int resource, rlim_t value) {
    rlimit lim{value, value};
    ::setrlimit(resource, &lim);
}

// Runs in the forked child: only async-signal-safe calls from here on.
[[noreturn]] void child_main(const ExecSpec& spec, const char* dir, int out_fd, int status_fd,
                             char* const* argv, char* const* envp) {
    ::setpgid(0, 0);
    char isolated = 'n';
    if (spec.isolate_network) {
        if (::unshare(CLONE_NEWNET) == 0 || ::unshare(CLONE_NEWUSER | CLONE_NEWNET) == 0) {
            isolated = 'N';
        }
    }
    (void)!::write(status_fd, &isolated, 1);

    if (::chdir(dir) != 0) ::_exit(126);
    const rlim_t mem = static_cast<rlim_t>(spec.memory_limit_mb) * 1024 * 1024;
    if (mem > 0) set_limit(RLIMIT_AS, mem);
    set_limit(RLIMIT_CPU, static_cast<rlim_t>(std::ceil(spec.timeout_s)) + 1);
    set_limit(RLIMIT_FSIZE, 16 * 1024 * 1024);
    set_limit(RLIMIT_CORE, 0);

    const int devnull = ::open("/dev/null", O_RDWR);
    ::dup2(devnull, 0);
    ::dup2(out_fd, 1);
    ::dup2(devnull, 2);

    ::execvpe(argv[0], argv, envp);
    const char fail = 'E';
    (void)!::write(status_fd, &fail, 1);
    ::_exit(127);
}

}  // namespace

ExecResult run_program(std::string_view code, const ExecSpec& spec) {
    if (!spec.configured()) {
        throw UsageError("program execution is disabled: no runner command configured (exec.command)");
    }
    const auto started = std::chrono::steady_clock::now();
    ScratchDir scratch;
    const fs::path file = scratch.path() / spec.file_name;
    {
        std::ofstream out(file, std::ios::binary);
        out << code;
        if (!out) throw ExecutionError("cannot write program file");
    }

    std::vector<std::string> args = spec.command;
    args.push_back(file.string());
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    std::string home = "HOME=" + scratch.path().string();
    std::string path_var = "PATH=/usr/local/bin:/usr/bin:/bin";
    std::string lang = "LANG=C.UTF-8";
    std::vector<char*> envp{home.data(), path_var.data(), lang.data(), nullptr};
    const std::string dir = scratch.path().string();

    auto [out_r, out_w] = make_pipe();
    auto [status_r, status_w] = make_pipe();

    const pid_t pid = ::fork();
    if (pid < 0) throw ExecutionError(fmt::format("fork failed: {}", std::strerror(errno)));
    if (pid == 0) child_main(spec, dir.c_str(), out_w.get(), status_w.get(), argv.data(), envp.data());

    out_w.reset();
    status_w.reset();

    ExecResult result;
    const auto deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        std::chrono::duration<double>(spec.timeout_s));
    bool timed_out = false;
    char buf[4096];
    bool out_open = true;
    while (out_open) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            break;
        }
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
        pollfd pfd{out_r.get(), POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(left));
        if (rc < 0 && errno != EINTR) break;
        if (rc <= 0) continue;
        const ssize_t n = ::read(out_r.get(), buf, sizeof buf);
        if (n <= 0) {
            out_open = false;
            break;
        }
        const std::size_t room = spec.max_output_bytes - std::min(spec.max_output_bytes, result.output.size());
        result.output.append(buf, std::min<std::size_t>(room, static_cast<std::size_t>(n)));
        if (static_cast<std::size_t>(n) > room) result.truncated = true;
    }

    int status = 0;
    while (!timed_out) {
        const pid_t w = ::waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    if (timed_out) {
        ::kill(-pid, SIGKILL);
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        throw ExecutionError(fmt::format("program timed out after {} s", spec.timeout_s), true);
    }

    char flag = 0;
    while (::read(status_r.get(), &flag, 1) == 1) {
        if (flag == 'N') result.network_isolated = true;
        if (flag == 'E') throw ExecutionError(fmt::format("cannot execute '{}'", spec.command[0]));
    }
    if (WIFSIGNALED(status)) {
        throw ExecutionError(fmt::format("program killed by signal {}", WTERMSIG(status)));
    }
    if (WIFEXITED(status) && WEXITSTATUS(status) != 0) {
        throw ExecutionError(fmt::format("program exited with status {}", WEXITSTATUS(status)));
    }
    result.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return result;
}

std::string extract_program(std::string_view response) {
    const auto close = response.rfind("```");
    if (close == std::string_view::npos || close == 0) return std::string(response);
    const auto open = response.rfind("```", close - 1);
    if (open == std::string_view::npos) return std::string(response);
    auto body_start = response.find('\n', open);
    if (body_start == std::string_view::npos || body_start > close) return std::string(response);
    return std::string(response.substr(body_start + 1, close - body_start - 1));
}

}  // namespace sepseq
