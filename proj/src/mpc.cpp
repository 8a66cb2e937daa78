#include "mpcrl/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mpcrl {

LinearModel to_linear_model(const LpvModel& m) {
  LinearModel lm;
  lm.A = m.A;
  lm.B = m.B;
  lm.E = m.E;
  lm.c = m.c;
  return lm;
}

void MpcConfig::validate(Eigen::Index nx) const {
  if (horizon < 1 || substeps < 1) throw ConfigError("mpc horizon and substeps must be >= 1");
  if (q.size() != nx || (q.array() < 0.0).any()) {
    throw ConfigError("mpc stage weight must be a non-negative diagonal of the state dimension");
  }
  if (!(r > 0.0)) throw ConfigError("mpc input weight must be > 0");
  if (!(terminal_scale >= 0.0)) throw ConfigError("mpc terminal scale must be >= 0");
  if (!(u_hi > u_lo)) throw ConfigError("mpc input box must satisfy lo < hi");
  if (x_lo.size() != x_hi.size() || (x_lo.size() != 0 && x_lo.size() != nx)) {
    throw ConfigError("mpc state box has the wrong dimension");
  }
  if (x_lo.size() != 0 && !((x_hi.array() > x_lo.array()).all())) {
    throw ConfigError("mpc state box must satisfy lo < hi");
  }
  if (!(tolerance > 0.0) || !(feasibility_tol > 0.0) || max_iterations < 1) {
    throw ConfigError("mpc tolerances must be positive");
  }
}

StateBox state_box_of(const MpcConfig& cfg) {
  StateBox box;
  box.lo = cfg.x_lo;
  box.hi = cfg.x_hi;
  return box;
}

namespace {

struct Condensed {
  Eigen::MatrixXd gamma;  // (n N) x N, block-boundary states as affine maps of U
  Eigen::VectorXd free;   // (n N), response with U = 0
};

Condensed condense(const LinearModel& m, const Eigen::VectorXd& x0, std::span<const double> gust,
                   int horizon, int substeps) {
  const Eigen::Index n = m.dim();
  Condensed out;
  out.gamma.setZero(n * horizon, horizon);
  out.free.setZero(n * horizon);
  // Over one block: x+ = As x + Bs u + (free drift). Block column j of gamma is As^(i-j) Bs.
  Eigen::MatrixXd As = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd Bs = Eigen::VectorXd::Zero(n);
  for (int s = 0; s < substeps; ++s) {
    Bs = m.A * Bs + m.B;
    As = m.A * As;
  }
  std::vector<Eigen::VectorXd> pw(static_cast<std::size_t>(horizon));
  pw[0] = Bs;
  for (int k = 1; k < horizon; ++k) pw[static_cast<std::size_t>(k)] = As * pw[static_cast<std::size_t>(k - 1)];
  for (int i = 0; i < horizon; ++i) {
    for (int j = 0; j <= i; ++j) {
      out.gamma.block(i * n, j, n, 1) = pw[static_cast<std::size_t>(i - j)];
    }
  }
  Eigen::VectorXd x = x0;
  std::size_t t = 0;
  for (int j = 0; j < horizon; ++j) {
    for (int s = 0; s < substeps; ++s, ++t) {
      const double w = t < gust.size() ? gust[t] : 0.0;
      x = m.A * x + m.E * w + m.c;
    }
    out.free.segment(j * n, n) = x;
  }
  return out;
}

double max_eigenvalue(const Eigen::MatrixXd& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return std::max(es.eigenvalues().maxCoeff(), 0.0);
}

}  // namespace

double mpc_cost(const LinearModel& model, const Eigen::VectorXd& x0, std::span<const double> gust,
                const MpcConfig& cfg, std::span<const double> inputs) {
  Eigen::VectorXd x = x0;
  double cost = 0.0;
  std::size_t t = 0;
  for (int j = 0; j < cfg.horizon; ++j) {
    const double u = inputs[static_cast<std::size_t>(j)];
    if (j > 0) cost += x.dot(cfg.q.cwiseProduct(x));
    cost += cfg.r * u * u;
    for (int s = 0; s < cfg.substeps; ++s, ++t) {
      const double w = t < gust.size() ? gust[t] : 0.0;
      x = model.A * x + model.B * u + model.E * w + model.c;
    }
  }
  cost += cfg.terminal_scale * x.dot(cfg.q.cwiseProduct(x));
  return cost;
}

MpcSolution solve_mpc(const LinearModel& model, const Eigen::VectorXd& x0,
                      std::span<const double> gust, const MpcConfig& cfg,
                      std::span<const double> warm_start) {
  const Eigen::Index n = model.dim();
  cfg.validate(n);
  const int N = cfg.horizon;
  MpcSolution sol;

  const bool constrained = cfg.x_lo.size() == n;
  if (constrained && !((x0.array() >= cfg.x_lo.array()).all() &&
                       (x0.array() <= cfg.x_hi.array()).all())) {
    sol.feasible = false;
    sol.max_violation = std::numeric_limits<double>::infinity();
    return sol;
  }

  const Condensed cd = condense(model, x0, gust, N, cfg.substeps);

  // Quadratic objective 0.5 U'HU + g'U.
  Eigen::MatrixXd H = 2.0 * cfg.r * Eigen::MatrixXd::Identity(N, N);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(N);
  for (int j = 0; j < N; ++j) {
    const double scale = (j == N - 1) ? cfg.terminal_scale : 1.0;
    if (scale == 0.0) continue;
    const auto gam = cd.gamma.middleRows(j * n, n);
    const Eigen::VectorXd qd = scale * cfg.q;
    H.noalias() += 2.0 * gam.transpose() * qd.asDiagonal() * gam;
    g.noalias() += 2.0 * gam.transpose() * qd.cwiseProduct(cd.free.segment(j * n, n));
  }

  // Normalised state-box rows: G U <= h.
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  if (constrained) {
    const Eigen::VectorXd inv_hw = (0.5 * (cfg.x_hi - cfg.x_lo)).cwiseInverse();
    G.resize(2 * n * N, N);
    h.resize(2 * n * N);
    for (int j = 0; j < N; ++j) {
      const auto gam = cd.gamma.middleRows(j * n, n);
      const auto fr = cd.free.segment(j * n, n);
      G.middleRows(j * n, n) = inv_hw.asDiagonal() * gam;
      h.segment(j * n, n) = (cfg.x_hi - fr).cwiseProduct(inv_hw);
      G.middleRows(n * N + j * n, n) = -(inv_hw.asDiagonal() * gam);
      h.segment(n * N + j * n, n) = (fr - cfg.x_lo).cwiseProduct(inv_hw);
    }
  }

  auto project = [&](Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], cfg.u_lo, cfg.u_hi);
    return v;
  };

  Eigen::VectorXd U = Eigen::VectorXd::Zero(N);
  if (static_cast<int>(warm_start.size()) == N) {
    for (int j = 0; j < N; ++j) U[j] = warm_start[static_cast<std::size_t>(j)];
  }
  U = project(U);

  const double lh = max_eigenvalue(H);
  const double lg = constrained ? 2.0 * max_eigenvalue(G.topRows(n * N).transpose() * G.topRows(n * N)) : 0.0;
  double rho = (constrained && lg > 0.0) ? lh / lg : 0.0;
  Eigen::VectorXd mu = constrained ? Eigen::VectorXd::Zero(G.rows()) : Eigen::VectorXd();

  auto gradient = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd grad = H * v + g;
    if (constrained) {
      const Eigen::VectorXd act = (mu + rho * (G * v - h)).cwiseMax(0.0);
      grad.noalias() += G.transpose() * act;
    }
    return grad;
  };
  auto violation = [&](const Eigen::VectorXd& v) {
    return constrained ? std::max(0.0, (G * v - h).maxCoeff()) : 0.0;
  };

  int iters = 0;
  double prev_violation = std::numeric_limits<double>::infinity();
  double residual = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < 40; ++outer) {
    const double L = lh + rho * lg;
    Eigen::VectorXd y = U;
    Eigen::VectorXd U_prev = U;
    double t = 1.0;
    while (iters < cfg.max_iterations) {
      ++iters;
      const Eigen::VectorXd U_next = project(y - gradient(y) / L);
      residual = (U_next - y).cwiseAbs().maxCoeff();
      if ((y - U_next).dot(U_next - U_prev) > 0.0) {
        // adaptive restart
        t = 1.0;
        y = U_next;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = U_next + ((t - 1.0) / t_next) * (U_next - U_prev);
        t = t_next;
      }
      U_prev = U_next;
      U = U_next;
      if (residual < cfg.tolerance) break;
    }
    const double viol = violation(U);
    if (!constrained) break;
    const bool multipliers_settled =
        (mu - (mu + rho * (G * U - h)).cwiseMax(0.0)).cwiseAbs().maxCoeff() < cfg.feasibility_tol;
    if (viol <= cfg.feasibility_tol && multipliers_settled) break;
    if (iters >= cfg.max_iterations) break;
    mu = (mu + rho * (G * U - h)).cwiseMax(0.0);
    if (viol > 0.25 * prev_violation) rho *= 10.0;
    prev_violation = viol;
  }

  sol.iterations = iters;
  sol.kkt_residual = residual;
  sol.max_violation = violation(U);
  sol.feasible = sol.max_violation <= cfg.feasibility_tol;
  sol.inputs.assign(U.data(), U.data() + N);
  sol.cost = mpc_cost(model, x0, gust, cfg, sol.inputs);
  return sol;
}

MpcSolution solve_wing_mpc(const Plant& plant, const State& x0, std::span<const double> gust,
                           const MpcConfig& cfg, std::span<const double> warm_start) {
  const StateBox box = state_box_of(cfg);
  if (!box.contains(x0)) {
    MpcSolution sol;
    sol.max_violation = std::numeric_limits<double>::infinity();
    return sol;
  }
  const LpvModel lpv = linearize(plant, x0, box);
  const Eigen::VectorXd x = x0;
  return solve_mpc(to_linear_model(lpv), x, gust, cfg, warm_start);
}

}  // namespace mpcrl
