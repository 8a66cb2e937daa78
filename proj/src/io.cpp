#include "mpcrl/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mpcrl {

std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

std::uint64_t mix64(std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return v ^ (v >> 31);
}

std::uint64_t hash_state(const State& x) {
  std::uint64_t h = 0x51ed270b27a5a8c3ULL;
  for (int i = 0; i < kStateDim; ++i) {
    // +0.0 and -0.0 hash alike
    const double v = x[i] == 0.0 ? 0.0 : x[i];
    h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

nlohmann::json state_to_json(const State& x) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < kStateDim; ++i) j.push_back(x[i]);
  return j;
}

State state_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kStateDim) throw ConfigError("state must be a 5-element array");
  State x;
  for (int i = 0; i < kStateDim; ++i) x[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return x;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << content;
}

}  // namespace mpcrl
