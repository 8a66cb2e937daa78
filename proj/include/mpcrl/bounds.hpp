#pragma once

#include <array>
#include <functional>
#include <string>

#include <json.hpp>

#include "mpcrl/gust.hpp"
#include "mpcrl/mpc.hpp"

namespace mpcrl {

// States reached at k+1 and k+2 when input u is applied at step k.
struct TwoStepResponse {
  State x1 = State::Zero();
  State x2 = State::Zero();
};
using TwoStepMap = std::function<TwoStepResponse(double u)>;

// Euler step for k+1 and the second-order Taylor prediction for k+2, disturbance held at w.
TwoStepMap wing_two_step(const Plant& plant, const State& x0, double w);

struct BoundSearchConfig {
  double margin = 0.02;           // fraction of each box half-width kept clear of the boundary
  int n_probe = 17;               // probes per interval during certification
  double bisection_tol = 1e-10;   // rad
  int max_shrink = 40;            // halvings toward u* before collapsing the interval
  double roundoff_tol = 1e-9;     // probe tolerance as a fraction of each box half-width
};

struct SafeBounds {
  bool feasible = false;
  bool verified = false;
  std::string reason;
  double u_star = 0.0;
  double u_min = 0.0;
  double u_max = 0.0;
  // Element-wise envelope of the trajectories under u_min and u_max at k, k+1, k+2.
  std::array<State, 3> x_traj_min{State::Zero(), State::Zero(), State::Zero()};
  std::array<State, 3> x_traj_max{State::Zero(), State::Zero(), State::Zero()};
  int shrink_count = 0;

  [[nodiscard]] nlohmann::json to_json() const;
};

// Expands outward from u_star while both predicted states stay inside `safe_box`.
SafeBounds bounds_around(const TwoStepMap& map, const State& x0, double u_star,
                         const StateBox& safe_box, const InputBox& input_box,
                         double bisection_tol);

// Recomputes the bounding envelope for the current [u_min, u_max].
void refresh_envelope(const TwoStepMap& map, const State& x0, SafeBounds& b);

struct ProbeResult {
  bool ok = true;
  int violations = 0;
};

// Checks x_min(kappa) <= x(kappa) <= x_max(kappa) for kappa = k+1, k+2 on n_probe evenly spaced
// inputs in [u_min, u_max]. `tol` is an absolute per-component allowance for rounding.
ProbeResult probe_bounding(const TwoStepMap& map, const SafeBounds& b, int n_probe,
                           const State& tol);

// Probes the interval; on failure halves it toward u_star and retries. Returns false only when
// even the collapsed interval cannot be certified.
bool certify_bounding(const TwoStepMap& map, const State& x0, SafeBounds& b, int n_probe,
                      const State& tol, int max_shrink);

// Full training-time bound computation for one (state, gust) pair: MPC on the LPV model, bound
// expansion inside the tightened state box, then certification.
SafeBounds safe_bounds(const Plant& plant, const State& x0, const GustProfile& gust,
                       const MpcConfig& mpc, const BoundSearchConfig& cfg);

}  // namespace mpcrl
