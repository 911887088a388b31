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

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mesbench {

using Rng = std::mt19937_64;

/// One splitmix64 step; used to decorrelate derived seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

namespace detail {
constexpr std::uint64_t mix_part(std::uint64_t acc, std::uint64_t part) noexcept {
    return splitmix64(acc ^ splitmix64(part));
}
constexpr std::uint64_t mix_part(std::uint64_t acc, std::string_view part) noexcept {
    return mix_part(acc, fnv1a(part));
}
constexpr std::uint64_t mix_part(std::uint64_t acc, const char* part) noexcept {
    return mix_part(acc, std::string_view(part));
}
}  // namespace detail

/// Seed derived purely from a master seed and an ordered list of tags
/// (strings or integers). Same inputs always give the same seed.
template <typename... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t master, const Parts&... parts) noexcept {
    std::uint64_t acc = splitmix64(master);
    ((acc = detail::mix_part(acc, parts)), ...);
    return acc;
}

/// Uniform permutation of 0..n-1 (Fisher-Yates).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace mesbench
