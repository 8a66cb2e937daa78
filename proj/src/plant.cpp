#include "mpcrl/plant.hpp"

#include <cmath>
#include <ostream>

#include "mpcrl/io.hpp"

namespace mpcrl {

void PlantParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
  };
  positive(mass_plunge, "mass_plunge");
  positive(inertia_pitch, "inertia_pitch");
  positive(airspeed, "airspeed");
  positive(semichord, "semichord");
  positive(span, "span");
  positive(air_density, "air_density");
  positive(actuator_gain, "actuator_gain");
  positive(sample_time, "sample_time");
  if (sample_time * actuator_gain >= 1.0) {
    throw ConfigError("sample_time * actuator_gain must be < 1");
  }
  if (pitch_stiffness.empty()) throw ConfigError("pitch_stiffness needs at least one coefficient");
  const double det = mass_plunge * inertia_pitch - static_unbalance * static_unbalance;
  if (!(det > 1e-12 * mass_plunge * inertia_pitch)) {
    throw ConfigError("structural mass matrix is singular");
  }
}

namespace {

void require_finite(const State& x, double u, double w) {
  if (!x.allFinite() || !std::isfinite(u) || !std::isfinite(w)) {
    throw DomainError("non-finite plant input");
  }
}

double pitch_stiffness(const PlantParams& p, double theta) {
  double k = 0.0;
  double pw = 1.0;
  for (double c : p.pitch_stiffness) {
    k += c * pw;
    pw *= theta;
  }
  return k;
}

}  // namespace

double alpha_eff(const State& x, double w, const PlantParams& p) {
  if (!x.allFinite() || !std::isfinite(w)) throw DomainError("non-finite alpha_eff input");
  const double V = p.airspeed;
  const double th = x[kPitch];
  return std::atan((V * std::sin(th) - w) / (V * std::cos(th))) + x[kPlungeRate] / V +
         p.a_offset * p.semichord * x[kPitchRate] / V;
}

Plant::Plant(PlantParams params) : params_(std::move(params)) {
  params_.validate();
  Eigen::Matrix2d m;
  m << params_.mass_plunge, params_.static_unbalance, params_.static_unbalance,
      params_.inertia_pitch;
  mass_inverse_ = m.inverse();
  const double q = 0.5 * params_.air_density * params_.airspeed * params_.airspeed;
  const double b = params_.semichord;
  const double s = params_.span;
  const Eigen::Vector2d force_per_flap(-q * b * s * params_.cl_beta, q * b * b * s * params_.cm_beta);
  flap_gain_ = mass_inverse_ * force_per_flap;
}

void Plant::set_jacobian_scale(const State& scale) {
  if (!(scale.array() > 0.0).all() || !scale.allFinite()) {
    throw ConfigError("jacobian scale must be positive");
  }
  fd_scale_ = scale;
}

double Plant::alpha_eff(const State& x, double w) const { return mpcrl::alpha_eff(x, w, params_); }

Eigen::Vector2d Plant::accelerations(const State& x, double w) const {
  const PlantParams& p = params_;
  const double q = 0.5 * p.air_density * p.airspeed * p.airspeed;
  const double b = p.semichord;
  const double s = p.span;
  const double ae = mpcrl::alpha_eff(x, w, p);
  const double beta = x[kFlap];
  const double lift = q * b * s * (p.cl_alpha * ae + p.cl_beta * beta);
  const double moment = q * b * b * s * (p.cm_alpha * ae + p.cm_beta * beta);
  const double th = x[kPitch];
  Eigen::Vector2d rhs;
  rhs[0] = -lift - p.damping_plunge * x[kPlungeRate] - p.stiffness_plunge * x[kPlunge];
  rhs[1] = moment - p.damping_pitch * x[kPitchRate] - pitch_stiffness(p, th) * th;
  return mass_inverse_ * rhs;
}

State Plant::deriv(const State& x, double u, double w) const {
  require_finite(x, u, w);
  const Eigen::Vector2d a = accelerations(x, w);
  State dx;
  dx << x[kPlungeRate], x[kPitchRate], a[0], a[1], params_.actuator_gain * (u - x[kFlap]);
  return dx;
}

double Plant::actuator_step(double beta, double u) const {
  const double g = params_.sample_time * params_.actuator_gain;
  return (1.0 - g) * beta + g * u;
}

State Plant::step_euler(const State& x, double u, double w) const {
  State next = x + params_.sample_time * deriv(x, u, w);
  next[kFlap] = actuator_step(x[kFlap], u);
  return next;
}

StateMatrix Plant::jacobian_x(const State& x, double u, double w) const {
  StateMatrix J;
  for (int i = 0; i < kStateDim; ++i) {
    const double h = 1e-6 * fd_scale_[i];
    State xp = x;
    State xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (deriv(xp, u, w) - deriv(xm, u, w)) / (2.0 * h);
  }
  return J;
}

State Plant::jacobian_u(const State& x, double u, double w) const {
  const double h = 1e-6;
  return (deriv(x, u + h, w) - deriv(x, u - h, w)) / (2.0 * h);
}

State Plant::jacobian_w(const State& x, double u, double w) const {
  const double h = 1e-6;
  return (deriv(x, u, w + h) - deriv(x, u, w - h)) / (2.0 * h);
}

State Plant::step_taylor2(const State& x, double u, double w) const {
  // Input and disturbance are held over the two-step horizon, so their state gradients vanish
  // and the second derivative reduces to J_x f.
  const double T = params_.sample_time;
  const State f = deriv(x, u, w);
  const StateMatrix J = jacobian_x(x, u, w);
  return x + 2.0 * T * f + 2.0 * T * T * (J * f);
}

State Plant::integrate_rk4(const State& x, double u, double w, double duration,
                           int substeps) const {
  const double dt = duration / substeps;
  State y = x;
  for (int i = 0; i < substeps; ++i) {
    const State k1 = deriv(y, u, w);
    const State k2 = deriv(y + 0.5 * dt * k1, u, w);
    const State k3 = deriv(y + 0.5 * dt * k2, u, w);
    const State k4 = deriv(y + dt * k3, u, w);
    y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

SimulationResult simulate(const Plant& plant, const State& x0, const ControllerFn& controller,
                          std::span<const double> gust, std::size_t steps,
                          const InputBox& input_box) {
  SimulationResult out;
  out.series.x.reserve(steps + 1);
  out.series.u.reserve(steps);
  out.series.w.reserve(steps);
  out.series.x.push_back(x0);
  State x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double u = controller(k, x);
    if (!std::isfinite(u) || !input_box.contains(u)) {
      out.aborted = true;
      out.abort_step = k;
      out.abort_reason = std::isfinite(u) ? "input outside actuator box" : "non-finite input";
      break;
    }
    const double w = k < gust.size() ? gust[k] : 0.0;
    try {
      x = plant.step_euler(x, u, w);
    } catch (const DomainError& e) {
      out.aborted = true;
      out.abort_step = k;
      out.abort_reason = e.what();
      break;
    }
    out.series.u.push_back(u);
    out.series.w.push_back(w);
    out.series.x.push_back(x);
  }
  return out;
}

void write_timeseries_csv(std::ostream& os, const TimeSeries& ts, double sample_time) {
  os << "k,t,h,theta,v_h,v_theta,beta_f,u,w\n";
  for (std::size_t k = 0; k < ts.steps(); ++k) {
    const State& x = ts.x[k];
    os << k << ',' << fmt_num(static_cast<double>(k) * sample_time);
    for (int i = 0; i < kStateDim; ++i) os << ',' << fmt_num(x[i]);
    os << ',' << fmt_num(ts.u[k]) << ',' << fmt_num(ts.w[k]) << '\n';
  }
}

}  // namespace mpcrl
