#include "mpcrl/bounds.hpp"

#include <algorithm>

#include "mpcrl/io.hpp"

namespace mpcrl {

TwoStepMap wing_two_step(const Plant& plant, const State& x0, double w) {
  return [&plant, x0, w](double u) {
    return TwoStepResponse{plant.step_euler(x0, u, w), plant.step_taylor2(x0, u, w)};
  };
}

nlohmann::json SafeBounds::to_json() const {
  nlohmann::json j;
  j["feasible"] = feasible;
  j["verified"] = verified;
  if (!reason.empty()) j["reason"] = reason;
  j["u_star"] = u_star;
  j["u_min"] = u_min;
  j["u_max"] = u_max;
  j["x_traj_min"] = nlohmann::json::array();
  j["x_traj_max"] = nlohmann::json::array();
  for (int k = 0; k < 3; ++k) {
    j["x_traj_min"].push_back(state_to_json(x_traj_min[static_cast<std::size_t>(k)]));
    j["x_traj_max"].push_back(state_to_json(x_traj_max[static_cast<std::size_t>(k)]));
  }
  j["shrink_count"] = shrink_count;
  return j;
}

namespace {

bool trajectory_safe(const TwoStepResponse& r, const StateBox& box) {
  return box.contains(r.x1) && box.contains(r.x2);
}

}  // namespace

void refresh_envelope(const TwoStepMap& map, const State& x0, SafeBounds& b) {
  const TwoStepResponse lo = map(b.u_min);
  const TwoStepResponse hi = map(b.u_max);
  b.x_traj_min = {x0, lo.x1.cwiseMin(hi.x1), lo.x2.cwiseMin(hi.x2)};
  b.x_traj_max = {x0, lo.x1.cwiseMax(hi.x1), lo.x2.cwiseMax(hi.x2)};
}

SafeBounds bounds_around(const TwoStepMap& map, const State& x0, double u_star,
                         const StateBox& safe_box, const InputBox& input_box,
                         double bisection_tol) {
  SafeBounds b;
  b.u_star = input_box.clamp(u_star);
  if (!trajectory_safe(map(b.u_star), safe_box)) {
    b.reason = "nominal input leaves the tightened state box";
    return b;
  }
  auto expand = [&](double limit) {
    if (trajectory_safe(map(limit), safe_box)) return limit;
    double safe = b.u_star;
    double unsafe = limit;
    while (std::abs(unsafe - safe) > bisection_tol) {
      const double mid = 0.5 * (safe + unsafe);
      if (trajectory_safe(map(mid), safe_box)) safe = mid;
      else unsafe = mid;
    }
    return safe;
  };
  b.u_max = expand(input_box.hi);
  b.u_min = expand(input_box.lo);
  b.feasible = true;
  refresh_envelope(map, x0, b);
  return b;
}

ProbeResult probe_bounding(const TwoStepMap& map, const SafeBounds& b, int n_probe,
                           const State& tol) {
  ProbeResult res;
  const int n = std::max(n_probe, 1);
  for (int j = 0; j < n; ++j) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(j) / (n - 1);
    const double u = b.u_min + frac * (b.u_max - b.u_min);
    const TwoStepResponse r = map(u);
    const std::array<const State*, 2> xs = {&r.x1, &r.x2};
    for (std::size_t k = 0; k < 2; ++k) {
      const State& x = *xs[k];
      const bool inside = ((x - b.x_traj_min[k + 1]).array() >= -tol.array()).all() &&
                          ((b.x_traj_max[k + 1] - x).array() >= -tol.array()).all();
      if (!inside) {
        res.ok = false;
        ++res.violations;
      }
    }
  }
  return res;
}

bool certify_bounding(const TwoStepMap& map, const State& x0, SafeBounds& b, int n_probe,
                      const State& tol, int max_shrink) {
  b.verified = false;
  if (!b.feasible) return false;
  for (int attempt = 0; attempt <= max_shrink + 1; ++attempt) {
    if (probe_bounding(map, b, n_probe, tol).ok) {
      b.verified = true;
      return true;
    }
    ++b.shrink_count;
    if (attempt < max_shrink) {
      b.u_min = b.u_star - 0.5 * (b.u_star - b.u_min);
      b.u_max = b.u_star + 0.5 * (b.u_max - b.u_star);
    } else {
      b.u_min = b.u_star;
      b.u_max = b.u_star;
    }
    refresh_envelope(map, x0, b);
  }
  b.reason = "bounding trajectories could not be certified";
  return false;
}

SafeBounds safe_bounds(const Plant& plant, const State& x0, const GustProfile& gust,
                       const MpcConfig& mpc, const BoundSearchConfig& cfg) {
  const MpcSolution sol = solve_wing_mpc(plant, x0, gust.samples, mpc);
  if (!sol.feasible) {
    SafeBounds b;
    b.reason = "mpc infeasible";
    return b;
  }
  const StateBox box = state_box_of(mpc);
  const StateBox safe_box = box.tightened(cfg.margin);
  const double w0 = gust.samples.empty() ? 0.0 : gust.samples.front();
  const TwoStepMap map = wing_two_step(plant, x0, w0);
  SafeBounds b = bounds_around(map, x0, sol.inputs.front(), safe_box, {mpc.u_lo, mpc.u_hi},
                               cfg.bisection_tol);
  if (!b.feasible) return b;
  const State tol = cfg.roundoff_tol * box.half_width();
  certify_bounding(map, x0, b, cfg.n_probe, tol, cfg.max_shrink);
  return b;
}

}  // namespace mpcrl
