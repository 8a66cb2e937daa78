#include "mpcrl/gust.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "mpcrl/io.hpp"

namespace mpcrl {

void GustConfig::validate() const {
  if (!(sigma_w >= 0.0) || !(length_scale > 0.0) || !(w_max > 0.0) || !(sigma_max >= 0.0)) {
    throw ConfigError("gust parameters must be non-negative (length_scale, w_max positive)");
  }
}

GustProfile dryden_generate(std::uint64_t seed, double duration, double airspeed, double sigma_w,
                            double length_scale, double sample_time, double w_max) {
  if (!(duration > 0.0) || !(airspeed > 0.0) || !(sigma_w >= 0.0) || !(length_scale > 0.0) ||
      !(sample_time > 0.0) || !(w_max > 0.0)) {
    throw ConfigError("dryden_generate: parameters must be positive");
  }
  const auto n = static_cast<std::size_t>(std::llround(duration / sample_time));
  GustProfile g;
  g.seed = seed;
  g.scale = sigma_w;
  g.length_scale = length_scale;
  g.w_max = w_max;
  g.samples.resize(n, 0.0);
  if (n == 0 || sigma_w == 0.0) return g;

  const double a = std::exp(-airspeed * sample_time / length_scale);
  const double drive = sigma_w * std::sqrt(1.0 - a * a);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double state = sigma_w * normal(rng);
  for (std::size_t k = 0; k < n; ++k) {
    g.samples[k] = std::clamp(state, -w_max, w_max);
    state = a * state + drive * normal(rng);
  }
  return g;
}

std::pair<double, double> intensity_band(std::size_t i, std::size_t n, double sigma_max) {
  const double width = sigma_max / static_cast<double>(n);
  return {width * static_cast<double>(i), width * static_cast<double>(i + 1)};
}

std::vector<GustProfile> training_ensemble(const State& x0, std::size_t n_realizations,
                                           const GustConfig& cfg, double duration, double airspeed,
                                           double sample_time, std::uint64_t base_seed) {
  if (n_realizations == 0) throw ConfigError("training_ensemble needs at least one realization");
  std::vector<GustProfile> out;
  out.reserve(n_realizations);
  const std::uint64_t state_key = hash_state(x0);
  for (std::size_t i = 0; i < n_realizations; ++i) {
    const auto [lo, hi] = intensity_band(i, n_realizations, cfg.sigma_max);
    const double sigma = 0.5 * (lo + hi);
    const std::uint64_t seed = mix64(state_key ^ mix64(base_seed + i));
    out.push_back(dryden_generate(seed, duration, airspeed, sigma, cfg.length_scale, sample_time,
                                  cfg.w_max));
  }
  return out;
}

void write_gust_csv(std::ostream& os, const GustProfile& g) {
  os << "# seed=" << g.seed << " sigma_w=" << fmt_num(g.scale)
     << " length_scale=" << fmt_num(g.length_scale) << " w_max=" << fmt_num(g.w_max) << '\n';
  os << "k,w\n";
  for (std::size_t k = 0; k < g.samples.size(); ++k) os << k << ',' << fmt_num(g.samples[k]) << '\n';
}

GustProfile read_gust_csv(std::istream& is) {
  GustProfile g;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "seed") g.seed = std::stoull(val);
        else if (key == "sigma_w") g.scale = std::stod(val);
        else if (key == "length_scale") g.length_scale = std::stod(val);
        else if (key == "w_max") g.w_max = std::stod(val);
      }
      continue;
    }
    if (!header_seen) {
      if (line != "k,w") throw ConfigError("gust csv: expected header 'k,w'");
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("gust csv: malformed row");
    const auto k = std::stoull(line.substr(0, comma));
    if (k != g.samples.size()) throw ConfigError("gust csv: rows out of order");
    g.samples.push_back(std::stod(line.substr(comma + 1)));
  }
  return g;
}

}  // namespace mpcrl
