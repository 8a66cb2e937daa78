#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mpcrl/types.hpp"

namespace mpcrl {

// Parameters of the two-degree-of-freedom typical section with a trailing-edge flap.
// Structural equations (plunge positive down, pitch positive nose up):
//   [m_T  S ] [h'' ]   [c_h  0 ] [h' ]   [k_h   0        ] [h]   [-L]
//   [S    I ] [th'']+  [0   c_a] [th']+  [0   k_a(theta) ] [th] = [ M]
// with quasi-steady lift/moment linear in alpha_eff and beta_f.
struct PlantParams {
  double mass_plunge = 12.387;        // total plunging mass m_T (kg)
  double static_unbalance = 0.07433;  // S = m_W x_alpha b (kg m)
  double inertia_pitch = 0.0465;      // I_alpha about the elastic axis (kg m^2)
  double damping_plunge = 27.43;      // c_h (kg/s)
  double damping_pitch = 0.036;       // c_alpha (kg m^2/s)
  double stiffness_plunge = 1500.0;   // k_h (N/m)
  // k_alpha(theta) = sum_i pitch_stiffness[i] * theta^i (N m/rad)
  std::vector<double> pitch_stiffness = {4.0, 0.0, 40.0};
  double air_density = 1.225;  // rho (kg/m^3)
  double airspeed = 8.0;       // V (m/s)
  double semichord = 0.135;    // b (m)
  double span = 0.6;           // s (m)
  double a_offset = 1.1847;    // aerodynamic centre offset coefficient in alpha_eff
  double cl_alpha = 6.28;
  double cl_beta = 3.358;
  double cm_alpha = -1.155;
  double cm_beta = -0.635;
  double actuator_gain = 125.0;  // lambda (1/s)
  double sample_time = 1e-3;     // T (s)

  void validate() const;
};

PlantParams load_plant_params(const std::string& toml_path);
PlantParams parse_plant_params(const std::string& toml_text);

// Effective aeroelastic angle of attack. Throws DomainError on non-finite input.
double alpha_eff(const State& x, double w, const PlantParams& p);

class Plant {
 public:
  explicit Plant(PlantParams params);

  [[nodiscard]] const PlantParams& params() const { return params_; }
  [[nodiscard]] double sample_time() const { return params_.sample_time; }

  // Finite-difference step scale per state component (perturbation = 1e-6 * scale).
  void set_jacobian_scale(const State& scale);
  [[nodiscard]] const State& jacobian_scale() const { return fd_scale_; }

  [[nodiscard]] double alpha_eff(const State& x, double w) const;

  // Continuous-time state derivative f(x, u, w).
  [[nodiscard]] State deriv(const State& x, double u, double w) const;

  // Plunge and pitch accelerations. They are affine in beta_f:
  //   a(x, w) = drift(x with beta_f = 0, w) + flap_gain() * beta_f
  [[nodiscard]] Eigen::Vector2d accelerations(const State& x, double w) const;
  [[nodiscard]] Eigen::Vector2d flap_gain() const { return flap_gain_; }

  [[nodiscard]] double actuator_step(double beta, double u) const;

  // One Euler step; the flap uses the exact discrete actuator law.
  [[nodiscard]] State step_euler(const State& x, double u, double w) const;

  // Second-order Taylor prediction of x(k+2) with u and w held over the horizon.
  [[nodiscard]] State step_taylor2(const State& x, double u, double w) const;

  // Central finite-difference Jacobians of deriv.
  [[nodiscard]] StateMatrix jacobian_x(const State& x, double u, double w) const;
  [[nodiscard]] State jacobian_u(const State& x, double u, double w) const;
  [[nodiscard]] State jacobian_w(const State& x, double u, double w) const;

  // Classical RK4 integration of the continuous model over `duration` in `substeps` steps.
  [[nodiscard]] State integrate_rk4(const State& x, double u, double w, double duration,
                                    int substeps) const;

 private:
  PlantParams params_;
  Eigen::Matrix2d mass_inverse_;
  Eigen::Vector2d flap_gain_;
  State fd_scale_ = State::Ones();
};

struct TimeSeries {
  std::vector<State> x;   // x[0..n]
  std::vector<double> u;  // commanded input applied over [k, k+1)
  std::vector<double> w;  // disturbance over [k, k+1)
  [[nodiscard]] std::size_t steps() const { return u.size(); }
};

struct SimulationResult {
  TimeSeries series;
  bool aborted = false;
  std::size_t abort_step = 0;
  std::string abort_reason;
};

using ControllerFn = std::function<double(std::size_t k, const State& x)>;

// Fixed-step closed-loop rollout at rate 1/T. `steps` steps are executed; gust samples past the
// end of `gust` are treated as zero.
SimulationResult simulate(const Plant& plant, const State& x0, const ControllerFn& controller,
                          std::span<const double> gust, std::size_t steps,
                          const InputBox& input_box);

void write_timeseries_csv(std::ostream& os, const TimeSeries& ts, double sample_time);

}  // namespace mpcrl
