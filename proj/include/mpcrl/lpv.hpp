#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "mpcrl/plant.hpp"

namespace mpcrl {

// Discrete-time model scheduled at a linearisation state:
//   x(k+1) = A x(k) + B u(k) + E w(k) + c
// The affine offset c makes the model exact at the linearisation point.
struct LpvModel {
  StateMatrix A = StateMatrix::Identity();
  State B = State::Zero();
  State E = State::Zero();
  State c = State::Zero();
  State x_lin = State::Zero();
  double u_lin = 0.0;
  double sample_time = 0.0;

  [[nodiscard]] State step(const State& x, double u, double w = 0.0) const {
    return A * x + B * u + E * w + c;
  }
};

// Linearises step_euler at (x, u = beta_f, w = 0). Throws DomainError when x is outside `envelope`.
LpvModel linearize(const Plant& plant, const State& x, const StateBox& envelope);

struct ModalInfo {
  double frequency_hz = 0.0;
  double damping_ratio = 0.0;
};

// Oscillatory modes of a discrete state matrix, least damped first.
std::vector<ModalInfo> modal_analysis(const StateMatrix& A, double sample_time);

struct LpvSampleReport {
  State x0 = State::Zero();
  double relative_error = 0.0;
};

struct LpvValidationReport {
  double max_relative_error = 0.0;
  double max_matrix_deviation = 0.0;  // relative to the largest entry of A at equilibrium
  double dominant_mode_hz = 0.0;
  std::vector<ModalInfo> modes;
  std::vector<LpvSampleReport> samples;

  [[nodiscard]] nlohmann::json to_json() const;
};

// Rolls the re-scheduled LPV model and an RK4 oracle (10 substeps per sample) for `horizon`
// steps from every sample, commanded input held at the initial flap angle and no gust. The
// relative error of a sample is ||X_lpv - X_true||_W / ||X_true||_W over the stacked trajectory,
// W = diag(1/c_i^2).
LpvValidationReport validate_lpv(const Plant& plant, std::span<const State> samples, int horizon,
                                 const StateBox& envelope, const State& norm_scale);

}  // namespace mpcrl
