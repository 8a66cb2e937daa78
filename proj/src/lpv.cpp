#include "mpcrl/lpv.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace mpcrl {

LpvModel linearize(const Plant& plant, const State& x, const StateBox& envelope) {
  if (!x.allFinite() || !envelope.contains(x)) {
    throw DomainError("linearisation state outside the scheduling envelope");
  }
  const double u = x[kFlap];
  const State& scale = plant.jacobian_scale();
  LpvModel m;
  m.x_lin = x;
  m.u_lin = u;
  m.sample_time = plant.sample_time();
  for (int i = 0; i < kStateDim; ++i) {
    const double h = 1e-6 * scale[i];
    State xp = x;
    State xm = x;
    xp[i] += h;
    xm[i] -= h;
    m.A.col(i) = (plant.step_euler(xp, u, 0.0) - plant.step_euler(xm, u, 0.0)) / (2.0 * h);
  }
  const double hu = 1e-6;
  m.B = (plant.step_euler(x, u + hu, 0.0) - plant.step_euler(x, u - hu, 0.0)) / (2.0 * hu);
  const double hw = 1e-6;
  m.E = (plant.step_euler(x, u, hw) - plant.step_euler(x, u, -hw)) / (2.0 * hw);
  m.c = plant.step_euler(x, u, 0.0) - m.A * x - m.B * u;
  return m;
}

std::vector<ModalInfo> modal_analysis(const StateMatrix& A, double sample_time) {
  Eigen::EigenSolver<StateMatrix> es(A);
  std::vector<ModalInfo> modes;
  for (int i = 0; i < kStateDim; ++i) {
    const std::complex<double> z = es.eigenvalues()[i];
    if (z.imag() <= 0.0) continue;
    const std::complex<double> s = std::log(z) / sample_time;
    const double wn = std::abs(s);
    modes.push_back({s.imag() / (2.0 * std::numbers::pi), wn > 0 ? -s.real() / wn : 0.0});
  }
  std::sort(modes.begin(), modes.end(),
            [](const ModalInfo& a, const ModalInfo& b) { return a.damping_ratio < b.damping_ratio; });
  return modes;
}

nlohmann::json LpvValidationReport::to_json() const {
  nlohmann::json j;
  j["max_relative_error"] = max_relative_error;
  j["max_matrix_deviation"] = max_matrix_deviation;
  j["dominant_mode_hz"] = dominant_mode_hz;
  j["modes"] = nlohmann::json::array();
  for (const auto& m : modes) {
    j["modes"].push_back({{"frequency_hz", m.frequency_hz}, {"damping_ratio", m.damping_ratio}});
  }
  j["samples"] = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json row;
    row["x0"] = nlohmann::json::array();
    for (int i = 0; i < kStateDim; ++i) row["x0"].push_back(s.x0[i]);
    row["relative_error"] = s.relative_error;
    j["samples"].push_back(row);
  }
  return j;
}

LpvValidationReport validate_lpv(const Plant& plant, std::span<const State> samples, int horizon,
                                 const StateBox& envelope, const State& norm_scale) {
  if (samples.empty()) throw ConfigError("validate_lpv needs at least one sample");
  const State inv_scale = norm_scale.cwiseInverse();
  const double T = plant.sample_time();

  LpvValidationReport report;
  const LpvModel eq = linearize(plant, State::Zero(), envelope);
  const double eq_max = eq.A.cwiseAbs().maxCoeff();
  report.modes = modal_analysis(eq.A, T);
  report.dominant_mode_hz = report.modes.empty() ? 0.0 : report.modes.front().frequency_hz;

  for (const State& x0 : samples) {
    const double u = x0(StateIndex::kFlap);
    State x_lpv = x0;
    State x_true = x0;
    double err2 = 0.0;
    double ref2 = 0.0;
    for (int k = 0; k < horizon; ++k) {
      const LpvModel m = linearize(plant, x_lpv, envelope);
      report.max_matrix_deviation =
          std::max(report.max_matrix_deviation, (m.A - eq.A).cwiseAbs().maxCoeff() / eq_max);
      x_lpv = m.step(x_lpv, u);
      x_true = plant.integrate_rk4(x_true, u, 0.0, T, 10);
      err2 += (x_lpv - x_true).cwiseProduct(inv_scale).squaredNorm();
      ref2 += x_true.cwiseProduct(inv_scale).squaredNorm();
    }
    const double rel = ref2 > 0.0 ? std::sqrt(err2 / ref2) : 0.0;
    report.samples.push_back({x0, rel});
    report.max_relative_error = std::max(report.max_relative_error, rel);
  }
  return report;
}

}  // namespace mpcrl
