/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include "mesbench/adapter.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

namespace mesbench::adapter {

namespace {

constexpr std::size_t kMaxLineBytes = std::size_t{256} << 20;

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    return static_cast<int>(std::clamp<std::chrono::milliseconds::rep>(left.count(), 0, 1 << 30));
}

std::string excerpt(const std::string& line) {
    constexpr std::size_t kMax = 200;
    return line.size() <= kMax ? line : line.substr(0, kMax) + "...";
}

[[noreturn]] void violation(const std::string& what) {
    throw Error(ErrorCode::ProtocolViolation, what);
}

Clock::time_point deadline_after(double seconds) {
    return Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
}

}  // namespace

// ---------------------------------------------------------------------------

Process::Process(const std::vector<std::string>& argv) {
    if (argv.empty()) throw Error(ErrorCode::InvalidConfig, "adapter command is empty");

    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
        throw Error(ErrorCode::AdapterError, std::string("socketpair: ") + std::strerror(errno));
    }
    int status_pipe[2];
    if (::pipe2(status_pipe, O_CLOEXEC) != 0) {
        ::close(sv[0]);
        ::close(sv[1]);
        throw Error(ErrorCode::AdapterError, std::string("pipe: ") + std::strerror(errno));
    }

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        const int err = errno;
        for (int fd : {sv[0], sv[1], status_pipe[0], status_pipe[1]}) ::close(fd);
        throw Error(ErrorCode::AdapterError, std::string("fork: ") + std::strerror(err));
    }
    if (pid == 0) {
        // Own process group, so a kill reaches wrapper scripts' children too.
        ::setpgid(0, 0);
        ::dup2(sv[1], STDIN_FILENO);
        ::dup2(sv[1], STDOUT_FILENO);
        ::execvp(args[0], args.data());
        const int err = errno;
        [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
        ::_exit(127);
    }

    ::close(sv[1]);
    ::close(status_pipe[1]);
    m_pid = pid;
    m_fd = sv[0];

    int exec_errno = 0;
    ssize_t got;
    do {
        got = ::read(status_pipe[0], &exec_errno, sizeof exec_errno);
    } while (got < 0 && errno == EINTR);
    ::close(status_pipe[0]);
    if (got > 0) {
        kill();
        throw Error(ErrorCode::AdapterError,
                    "cannot execute '" + argv.front() + "': " + std::strerror(exec_errno));
    }
    ::fcntl(m_fd, F_SETFL, ::fcntl(m_fd, F_GETFL) | O_NONBLOCK);
}

Process::~Process() { kill(); }

void Process::send(const nlohmann::json& frame, Clock::time_point deadline) {
    if (m_fd < 0) throw Error(ErrorCode::AdapterError, "adapter process is closed");
    const std::string text = frame.dump() + "\n";
    std::size_t offset = 0;
    while (offset < text.size()) {
        pollfd p{m_fd, POLLOUT, 0};
        const int ready = ::poll(&p, 1, remaining_ms(deadline));
        if (ready < 0 && errno == EINTR) continue;
        if (ready == 0) throw Error(ErrorCode::AdapterTimeout, "adapter stopped reading its input");
        const ssize_t n = ::send(m_fd, text.data() + offset, text.size() - offset, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EAGAIN || errno == EINTR) continue;
            throw Error(ErrorCode::AdapterError, std::string("write to adapter: ") + std::strerror(errno));
        }
        offset += static_cast<std::size_t>(n);
    }
}

std::string Process::receive_line(Clock::time_point deadline) {
    if (m_fd < 0) throw Error(ErrorCode::AdapterError, "adapter process is closed");
    for (;;) {
        if (const auto nl = m_buffer.find('\n'); nl != std::string::npos) {
            std::string line = m_buffer.substr(0, nl);
            m_buffer.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        if (m_buffer.size() > kMaxLineBytes) violation("frame exceeds size limit");

        pollfd p{m_fd, POLLIN, 0};
        const int ready = ::poll(&p, 1, remaining_ms(deadline));
        if (ready < 0 && errno == EINTR) continue;
        if (ready == 0) throw Error(ErrorCode::AdapterTimeout, "no reply from adapter before the deadline");
        char chunk[65536];
        const ssize_t n = ::read(m_fd, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EAGAIN || errno == EINTR) continue;
            throw Error(ErrorCode::AdapterError, std::string("read from adapter: ") + std::strerror(errno));
        }
        if (n == 0) {
            violation(m_buffer.empty() ? "adapter closed its output"
                                       : "adapter closed its output mid-frame: " + excerpt(m_buffer));
        }
        m_buffer.append(chunk, static_cast<std::size_t>(n));
    }
}

void Process::finish(double grace_seconds) {
    if (m_pid <= 0) return;
    if (m_fd >= 0) ::shutdown(m_fd, SHUT_WR);
    const auto deadline = deadline_after(grace_seconds);
    while (Clock::now() < deadline) {
        int status = 0;
        const pid_t r = ::waitpid(m_pid, &status, WNOHANG);
        if (r == m_pid || (r < 0 && errno == ECHILD)) {
            m_pid = -1;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    kill();
}

void Process::kill() noexcept {
    if (m_pid > 0) {
        ::kill(-m_pid, SIGKILL);
        ::kill(m_pid, SIGKILL);
        int status = 0;
        while (::waitpid(m_pid, &status, 0) < 0 && errno == EINTR) {
        }
        m_pid = -1;
    }
    if (m_fd >= 0) {
        ::close(m_fd);
        m_fd = -1;
    }
}

// ---------------------------------------------------------------------------

Session::Session(const std::vector<std::string>& command, double timeout_seconds)
    : m_process(command), m_deadline(deadline_after(timeout_seconds)) {
    if (!(timeout_seconds > 0.0)) throw Error(ErrorCode::InvalidConfig, "adapter timeout must be positive");
}

nlohmann::json Session::request(const nlohmann::json& frame, std::string_view expected_type) {
    try {
        m_process.send(frame, m_deadline);
        const std::string line = m_process.receive_line(m_deadline);
        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            violation("malformed frame: " + excerpt(line));
        }
        if (!reply.is_object() || !reply.contains("type") || !reply["type"].is_string()) {
            violation("frame without a type: " + excerpt(line));
        }
        const auto type = reply["type"].get<std::string>();
        if (type == "error") {
            throw Error(ErrorCode::AdapterError, reply.value("code", std::string("unknown")) + ": " +
                                                     reply.value("message", std::string()));
        }
        if (type != expected_type) {
            violation("expected '" + std::string(expected_type) + "' frame, got: " + excerpt(line));
        }
        return reply;
    } catch (const nlohmann::json::exception& e) {
        m_process.kill();
        throw Error(ErrorCode::ProtocolViolation, e.what());
    } catch (...) {
        m_process.kill();
        throw;
    }
}

const Handshake& Session::handshake() {
    if (m_handshake) return *m_handshake;
    const auto reply = request({{"type", "handshake"}, {"protocol_version", kProtocolVersion}}, "handshake");
    Handshake h;
    try {
        h.protocol_version = reply.at("protocol_version").get<int>();
        h.framework_name = reply.at("framework_name").get<std::string>();
        if (reply.contains("expertise_level")) h.expertise_level = reply["expertise_level"].get<int>();
    } catch (const nlohmann::json::exception&) {
        m_process.kill();
        violation("incomplete handshake: " + excerpt(reply.dump()));
    }
    if (h.protocol_version != kProtocolVersion) {
        m_process.kill();
        throw Error(ErrorCode::HandshakeMismatch, "adapter speaks protocol " + std::to_string(h.protocol_version) +
                                                      ", harness speaks " + std::to_string(kProtocolVersion));
    }
    if (h.expertise_level < 1 || h.expertise_level > 6) {
        m_process.kill();
        violation("expertise_level outside 1..6: " + std::to_string(h.expertise_level));
    }
    m_handshake = std::move(h);
    return *m_handshake;
}

double Session::train(const FeatureTable& rows, const std::vector<double>& target,
                      const std::string& target_name, double budget_seconds, ErrorKind scoring) {
    handshake();
    const auto reply = request({{"type", "train"},
                                {"budget_seconds", budget_seconds},
                                {"scoring", std::string(to_string(scoring))},
                                {"target", target_name},
                                {"rows", rows.to_csv(&target, target_name)}},
                               "train_ack");
    const auto it = reply.find("train_seconds");
    if (it == reply.end() || !it->is_number() || !(it->get<double>() >= 0.0)) {
        m_process.kill();
        violation("train_ack without a valid train_seconds: " + excerpt(reply.dump()));
    }
    return it->get<double>();
}

Vector Session::predict(const FeatureTable& rows) {
    handshake();
    const auto reply = request({{"type", "predict"}, {"rows", rows.to_csv()}}, "predictions");
    const auto it = reply.find("values");
    if (it == reply.end() || !it->is_array() || it->size() != rows.rows()) {
        m_process.kill();
        violation("predictions frame must carry " + std::to_string(rows.rows()) + " values: " +
                  excerpt(reply.dump()));
    }
    Vector out(static_cast<Eigen::Index>(rows.rows()));
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const auto& v = (*it)[i];
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
            m_process.kill();
            violation("non-numeric prediction at index " + std::to_string(i));
        }
        out(static_cast<Eigen::Index>(i)) = v.get<double>();
    }
    return out;
}

void Session::shutdown() {
    if (!m_process.running()) return;
    try {
        m_process.send({{"type", "shutdown"}}, std::min(m_deadline, deadline_after(1.0)));
    } catch (const Error&) {
        // The child is reaped below either way.
    }
    m_process.finish(2.0);
}

// ---------------------------------------------------------------------------

ExternalResult bridge_external(const std::vector<std::string>& command, const FeatureTable& train,
                               const std::vector<double>& target, const FeatureTable& test,
                               double budget_seconds, ErrorKind scoring, std::optional<double> timeout_seconds) {
    if (!(budget_seconds > 0.0)) throw Error(ErrorCode::InvalidConfig, "budget_seconds must be positive");
    Session session(command, timeout_seconds.value_or(hard_timeout(budget_seconds)));
    const auto& peer = session.handshake();
    ExternalResult result;
    result.framework_name = peer.framework_name;
    result.expertise_level = peer.expertise_level;
    const auto start = Clock::now();
    result.train_seconds = session.train(train, target, "price", budget_seconds, scoring);
    result.wall_seconds = seconds_since(start);
    result.predictions = session.predict(test);
    session.shutdown();
    return result;
}

}  // namespace mesbench::adapter
