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

#pragma once

#include "mesbench/criteria.hpp"
#include "mesbench/table.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

namespace mesbench::adapter {

/// JSON-lines protocol spoken with external framework adapters over their
/// standard streams. See docs/adapter_protocol.md.
inline constexpr int kProtocolVersion = 1;

/// Hard limit for a whole adapter session.
inline double hard_timeout(double budget_seconds) { return 2.0 * budget_seconds + 60.0; }

/// Owns one adapter child process. The child's stdin and stdout are the two
/// ends of a socket pair, so a dead child never raises SIGPIPE here.
class Process {
public:
    explicit Process(const std::vector<std::string>& argv);
    ~Process();

    Process(const Process&) = delete;
    Process& operator=(const Process&) = delete;

    /// Writes one frame; throws AdapterTimeout when the child stops reading.
    void send(const nlohmann::json& frame, Clock::time_point deadline);

    /// Reads one line. Throws AdapterTimeout past the deadline and
    /// ProtocolViolation on end of stream.
    std::string receive_line(Clock::time_point deadline);

    /// Closes the write side and reaps the child, killing it if it has not
    /// exited within `grace_seconds`.
    void finish(double grace_seconds);

    void kill() noexcept;

    [[nodiscard]] bool running() const noexcept { return m_pid > 0; }

private:
    pid_t m_pid = -1;
    int m_fd = -1;
    std::string m_buffer;
};

struct Handshake {
    int protocol_version = 0;
    std::string framework_name;
    int expertise_level = kAutomatedExpertise;
};

/// Client side of the protocol. Every request waits for exactly one reply
/// before the session deadline; any failure kills the child.
class Session {
public:
    Session(const std::vector<std::string>& command, double timeout_seconds);

    const Handshake& handshake();

    /// Returns the adapter-reported training seconds.
    double train(const FeatureTable& rows, const std::vector<double>& target,
                 const std::string& target_name, double budget_seconds, ErrorKind scoring);

    Vector predict(const FeatureTable& rows);

    void shutdown();

    [[nodiscard]] const std::optional<Handshake>& peer() const noexcept { return m_handshake; }

private:
    nlohmann::json request(const nlohmann::json& frame, std::string_view expected_type);

    Process m_process;
    Clock::time_point m_deadline;
    std::optional<Handshake> m_handshake;
};

struct ExternalResult {
    Vector predictions;
    double train_seconds = 0.0;  ///< as reported by the adapter
    double wall_seconds = 0.0;   ///< train request round trip seen by the harness
    int expertise_level = kAutomatedExpertise;
    std::string framework_name;
};

/// Handshake, train, predict, shutdown. The timeout defaults to
/// `hard_timeout(budget_seconds)`.
ExternalResult bridge_external(const std::vector<std::string>& command, const FeatureTable& train,
                               const std::vector<double>& target, const FeatureTable& test,
                               double budget_seconds, ErrorKind scoring = ErrorKind::mape,
                               std::optional<double> timeout_seconds = std::nullopt);

}  // namespace mesbench::adapter
