#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mpcrl/lpv.hpp"

namespace mpcrl {

// Single-input linear prediction model x+ = A x + B u + E w + c of any state dimension.
struct LinearModel {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::VectorXd E;
  Eigen::VectorXd c;

  [[nodiscard]] Eigen::Index dim() const { return A.rows(); }
};

LinearModel to_linear_model(const LpvModel& m);

struct MpcConfig {
  int horizon = 20;    // N input moves
  int substeps = 1;    // plant steps each move is held for
  Eigen::VectorXd q;   // diagonal stage weight
  double r = 1.0;      // input weight
  double terminal_scale = 1.0;  // terminal weight = terminal_scale * Q
  Eigen::VectorXd x_lo;
  Eigen::VectorXd x_hi;
  double u_lo = -1.0;
  double u_hi = 1.0;
  double tolerance = 1e-8;       // KKT residual
  double feasibility_tol = 1e-6; // state-box violation, in units of box half-width
  int max_iterations = 20000;    // inner iterations, summed over outer updates

  void validate(Eigen::Index nx) const;
};

struct MpcSolution {
  bool feasible = false;
  std::vector<double> inputs;  // N moves
  double cost = 0.0;
  double kkt_residual = 0.0;
  double max_violation = 0.0;  // normalised state-box violation
  int iterations = 0;
};

// Minimises sum_{j<N} (x_j' Q x_j + r u_j^2) + x_N' Qf x_N over the prediction model with the
// known gust segment injected (samples past its end count as zero), subject to the input box and
// the state box at every move boundary. Projected Nesterov gradient inside an augmented
// Lagrangian loop for the state constraints.
MpcSolution solve_mpc(const LinearModel& model, const Eigen::VectorXd& x0,
                      std::span<const double> gust, const MpcConfig& cfg,
                      std::span<const double> warm_start = {});

// Cost of an input sequence under the same objective (no constraint terms).
double mpc_cost(const LinearModel& model, const Eigen::VectorXd& x0, std::span<const double> gust,
                const MpcConfig& cfg, std::span<const double> inputs);

// Linearises the wing at x0 and solves the MPC problem on the resulting model.
MpcSolution solve_wing_mpc(const Plant& plant, const State& x0, std::span<const double> gust,
                           const MpcConfig& cfg, std::span<const double> warm_start = {});

StateBox state_box_of(const MpcConfig& cfg);

}  // namespace mpcrl
