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

// Reference adapter for protocol tests. Predicts the training-target mean.
//
//   mock_adapter [--mode mean|malformed|version2|hang|error|crash] [--name NAME]
//
// Modes other than `mean` misbehave on purpose when the train request
// arrives (or at handshake for version2).

#include "mesbench/csv.hpp"

#include "json.hpp"

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        if (end > start) out.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

double target_mean(const std::string& csv_text, const std::string& target) {
    const auto lines = lines_of(csv_text);
    if (lines.size() < 2) throw std::runtime_error("no training rows");
    const auto header = mesbench::csv::split_line(lines[0]);
    std::size_t col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == target) col = i;
    }
    if (col == header.size()) throw std::runtime_error("target column '" + target + "' not found");
    double sum = 0.0;
    for (std::size_t r = 1; r < lines.size(); ++r) sum += std::stod(mesbench::csv::split_line(lines[r]).at(col));
    return sum / static_cast<double>(lines.size() - 1);
}

void reply(const nlohmann::json& frame) { std::cout << frame.dump() << '\n' << std::flush; }

}  // namespace

int main(int argc, char** argv) {
    std::string mode = "mean";
    std::string name = "mock";
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--mode") mode = argv[i + 1];
        else if (flag == "--name") name = argv[i + 1];
    }

    double mean = 0.0;
    bool trained = false;
    std::string line;
    while (std::getline(std::cin, line)) {
        nlohmann::json in;
        try {
            in = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            reply({{"type", "error"}, {"code", "bad_frame"}, {"message", e.what()}});
            continue;
        }
        const auto type = in.value("type", std::string());
        if (type == "handshake") {
            reply({{"type", "handshake"},
                   {"protocol_version", mode == "version2" ? 2 : 1},
                   {"framework_name", name},
                   {"expertise_level", 2}});
        } else if (type == "train") {
            if (mode == "malformed") {
                std::cout << "{\"type\": \"train_ack\", \"train_seconds\": " << std::endl;
                continue;
            }
            if (mode == "hang") {
                std::this_thread::sleep_for(std::chrono::hours(1));
            }
            if (mode == "crash") return 3;
            if (mode == "error") {
                reply({{"type", "error"}, {"code", "framework_failure"}, {"message", "mock failure"}});
                continue;
            }
            const auto start = std::chrono::steady_clock::now();
            try {
                mean = target_mean(in.at("rows").get<std::string>(), in.value("target", std::string("price")));
                trained = true;
            } catch (const std::exception& e) {
                reply({{"type", "error"}, {"code", "bad_request"}, {"message", e.what()}});
                continue;
            }
            reply({{"type", "train_ack"},
                   {"train_seconds",
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
        } else if (type == "predict") {
            if (!trained) {
                reply({{"type", "error"}, {"code", "not_trained"}, {"message", "predict before train"}});
                continue;
            }
            const auto rows = lines_of(in.value("rows", std::string()));
            const std::size_t n = rows.empty() ? 0 : rows.size() - 1;
            reply({{"type", "predictions"}, {"values", std::vector<double>(n, mean)}});
        } else if (type == "shutdown") {
            return 0;
        } else {
            reply({{"type", "error"}, {"code", "unknown_type"}, {"message", "unknown frame type: " + type}});
        }
    }
    return 0;
}
