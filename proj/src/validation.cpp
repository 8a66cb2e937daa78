#include "mpcrl/validation.hpp"

#include <random>

#include "mpcrl/io.hpp"

namespace mpcrl {

void ValidationConfig::validate() const {
  if (taylor_samples < 1 || lpv_samples < 1 || lpv_horizon < 1) {
    throw ConfigError("validation sample counts and horizon must be >= 1");
  }
  if (!(taylor_threshold > 0.0) || !(lpv_threshold > 0.0)) {
    throw ConfigError("validation thresholds must be > 0");
  }
  if (!(mode_lo_hz >= 0.0 && mode_hi_hz > mode_lo_hz)) {
    throw ConfigError("validation mode band must satisfy 0 <= lo < hi");
  }
  if (!(envelope > 0.0 && envelope <= 1.0)) throw ConfigError("validation.envelope must be in (0, 1]");
}

nlohmann::json TaylorReport::to_json() const {
  return {{"max_relative", max_relative},
          {"worst_component", worst_component},
          {"worst_state", state_to_json(worst_state)},
          {"samples", per_sample.size()}};
}

std::vector<State> sample_box(const StateBox& box, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<State> out(static_cast<std::size_t>(n));
  for (State& x : out) {
    for (int i = 0; i < kStateDim; ++i) x(i) = box.lo(i) + (box.hi(i) - box.lo(i)) * unit(rng);
  }
  return out;
}

TaylorReport taylor_fidelity(const Plant& plant, std::span<const State> states,
                             const InputBox& input_box, double w_max, const State& scale,
                             std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed));
  std::uniform_real_distribution<double> u_dist(input_box.lo, input_box.hi);
  std::uniform_real_distribution<double> w_dist(-w_max, w_max);
  const double T = plant.sample_time();
  TaylorReport r;
  for (const State& x : states) {
    const double u = u_dist(rng);
    const double w = w_max > 0.0 ? w_dist(rng) : 0.0;
    const State taylor = plant.step_taylor2(x, u, w);
    const State oracle = plant.integrate_rk4(x, u, w, 2.0 * T, 100);
    const State rel = (taylor - oracle).cwiseAbs().cwiseQuotient(scale);
    int i = 0;
    const double m = rel.maxCoeff(&i);
    r.per_sample.push_back(m);
    if (m > r.max_relative) {
      r.max_relative = m;
      r.worst_component = i;
      r.worst_state = x;
    }
  }
  return r;
}

nlohmann::json ModelValidation::to_json(const ValidationConfig& cfg) const {
  return {{"pass", pass()},
          {"taylor", taylor.to_json()},
          {"taylor_threshold", cfg.taylor_threshold},
          {"taylor_pass", taylor_pass},
          {"lpv", lpv.to_json()},
          {"lpv_threshold", cfg.lpv_threshold},
          {"lpv_pass", lpv_pass},
          {"mode_band_hz", {cfg.mode_lo_hz, cfg.mode_hi_hz}},
          {"mode_pass", mode_pass}};
}

ModelValidation validate_model(const Plant& plant, const StateBox& admissible,
                               const InputBox& input_box, double w_max,
                               const ValidationConfig& cfg, std::uint64_t seed) {
  const StateBox env = admissible.scaled(cfg.envelope);
  const State scale = admissible.half_width();
  ModelValidation v;
  const auto taylor_states = sample_box(env, cfg.taylor_samples, mix64(seed ^ 0x7a1f));
  v.taylor = taylor_fidelity(plant, taylor_states, input_box, w_max, scale, seed);
  v.taylor_pass = v.taylor.max_relative < cfg.taylor_threshold;
  const auto lpv_states = sample_box(env, cfg.lpv_samples, mix64(seed ^ 0x1b2d));
  // Free rollouts may drift past the admissible edge; the schedule only has to stay finite.
  v.lpv = validate_lpv(plant, lpv_states, cfg.lpv_horizon, admissible.scaled(4.0), scale);
  v.lpv_pass = v.lpv.max_relative_error < cfg.lpv_threshold;
  v.mode_pass = v.lpv.dominant_mode_hz >= cfg.mode_lo_hz && v.lpv.dominant_mode_hz <= cfg.mode_hi_hz;
  return v;
}

}  // namespace mpcrl
