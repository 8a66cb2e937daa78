#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "mpcrl/lpv.hpp"
#include "mpcrl/plant.hpp"

namespace mpcrl {

struct ValidationConfig {
  int taylor_samples = 1000;
  double taylor_threshold = 0.02;
  int lpv_samples = 100;
  int lpv_horizon = 100;
  double lpv_threshold = 0.01;
  double mode_lo_hz = 0.5;
  double mode_hi_hz = 5.0;
  double envelope = 0.9;  // fraction of the admissible box sampled

  void validate() const;
};

struct TaylorReport {
  double max_relative = 0.0;  // max over samples and components of |taylor - rk4| / c_i
  int worst_component = 0;
  State worst_state = State::Zero();
  std::vector<double> per_sample;

  [[nodiscard]] nlohmann::json to_json() const;
};

// Uniform samples over `box`, deterministic in `seed`.
std::vector<State> sample_box(const StateBox& box, int n, std::uint64_t seed);

// Two-step Taylor prediction against RK4 over 2T (100 substeps) with u and w held. Inputs and
// disturbances are drawn uniformly from the input box and [-w_max, w_max].
TaylorReport taylor_fidelity(const Plant& plant, std::span<const State> states,
                             const InputBox& input_box, double w_max, const State& scale,
                             std::uint64_t seed);

struct ModelValidation {
  TaylorReport taylor;
  LpvValidationReport lpv;
  bool taylor_pass = false;
  bool lpv_pass = false;
  bool mode_pass = false;

  [[nodiscard]] bool pass() const { return taylor_pass && lpv_pass && mode_pass; }
  [[nodiscard]] nlohmann::json to_json(const ValidationConfig& cfg) const;
};

ModelValidation validate_model(const Plant& plant, const StateBox& admissible,
                               const InputBox& input_box, double w_max,
                               const ValidationConfig& cfg, std::uint64_t seed);

}  // namespace mpcrl
