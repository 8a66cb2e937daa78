#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mpcrl/types.hpp"

namespace mpcrl {

// Shortest round-trip decimal representation; identical output for identical doubles.
std::string fmt_num(double v);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// SplitMix64 finaliser, used to derive child seeds.
std::uint64_t mix64(std::uint64_t v);
std::uint64_t hash_state(const State& x);

nlohmann::json state_to_json(const State& x);
State state_from_json(const nlohmann::json& j);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace mpcrl
