#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mpcrl/plant.hpp"
#include "support.hpp"

using namespace mpcrl;

namespace {

// Reference RK4 on deriv, with its own fixed step (negative durations integrate backwards).
State rk4(const Plant& p, State x, double u, double w, double duration, int n) {
  const double h = duration / n;
  for (int i = 0; i < n; ++i) {
    const State k1 = p.deriv(x, u, w);
    const State k2 = p.deriv(x + 0.5 * h * k1, u, w);
    const State k3 = p.deriv(x + 0.5 * h * k2, u, w);
    const State k4 = p.deriv(x + h * k3, u, w);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

Plant with_sample_time(const Plant& base, double T) {
  PlantParams p = base.params();
  p.sample_time = T;
  Plant out(p);
  out.set_jacobian_scale(base.jacobian_scale());
  return out;
}

State sample_state(std::mt19937_64& rng, const StateBox& box) {
  State x;
  for (int i = 0; i < kStateDim; ++i) {
    x[i] = std::uniform_real_distribution<double>(box.lo[i], box.hi[i])(rng);
  }
  return x;
}

}  // namespace

TEST_CASE("alpha_eff reference values") {
  PlantParams p;
  p.airspeed = 10.0;
  State x = State::Zero();
  CHECK(alpha_eff(x, 0.0, p) == 0.0);
  CHECK(alpha_eff(x, -1.0, p) == doctest::Approx(0.099669).epsilon(1e-6));
  x[kPlungeRate] = 1.0;
  CHECK(alpha_eff(x, 0.0, p) == doctest::Approx(0.1).epsilon(1e-12));
  x[kPlungeRate] = NAN;
  CHECK_THROWS_AS((void)alpha_eff(x, 0.0, p), DomainError);
}

TEST_CASE("deriv at equilibrium and on the actuator channel") {
  const Plant plant = test::default_plant();
  CHECK(plant.deriv(State::Zero(), 0.0, 0.0).norm() == 0.0);
  const State d = plant.deriv(State::Zero(), 0.01, 0.0);
  CHECK(d[kFlap] == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(d.head<4>().norm() == 0.0);
}

TEST_CASE("deriv matches a finite difference of an integrated trajectory") {
  const Plant plant = test::default_plant();
  const StateBox box = test::default_config().state_box;
  std::mt19937_64 rng(7);
  const double h = 1e-3;
  auto central = [&](const State& x, double u, double w, double step) -> State {
    return (rk4(plant, x, u, w, step, 100) - rk4(plant, x, u, w, -step, 100)) / (2.0 * step);
  };
  for (int s = 0; s < 20; ++s) {
    const State x = sample_state(rng, box);
    const double u = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    const double w = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    // Richardson extrapolation removes the h^2 term of the central difference.
    const State fd = (4.0 * central(x, u, w, 0.5 * h) - central(x, u, w, h)) / 3.0;
    const State d = plant.deriv(x, u, w);
    for (int i = 0; i < kStateDim; ++i) {
      CHECK(std::abs(fd[i] - d[i]) <= 1e-6 * std::max(1.0, std::abs(d[i])));
    }
  }
}

TEST_CASE("accelerations are affine in the flap angle") {
  const Plant plant = test::default_plant();
  State x;
  x << 0.01, 0.05, -0.2, 0.4, 0.0;
  const Eigen::Vector2d a0 = plant.accelerations(x, 0.7);
  x[kFlap] = 0.2;
  const Eigen::Vector2d a1 = plant.accelerations(x, 0.7);
  CHECK((a1 - a0 - 0.2 * plant.flap_gain()).norm() <= 1e-9 * a1.norm());
}

TEST_CASE("actuator law") {
  const Plant plant = test::default_plant();
  CHECK(plant.actuator_step(0.0, 0.0) == 0.0);
  CHECK(plant.actuator_step(0.17, 0.17) == doctest::Approx(0.17).epsilon(1e-15));
  CHECK(plant.actuator_step(0.0, 1.0) == doctest::Approx(0.125).epsilon(1e-15));
  const State x1 = plant.step_euler(State::Zero(), 0.2, 0.0);
  CHECK(x1[kFlap] == doctest::Approx(1e-3 * 125.0 * 0.2).epsilon(1e-15));
}

TEST_CASE("Euler step: fixed point and second-order local error") {
  const Plant plant = test::default_plant();
  CHECK(plant.step_euler(State::Zero(), 0.0, 0.0).norm() == 0.0);

  // Local error of one Euler step is O(T^2): halving T divides it by about 4.
  State x;
  x << 0.01, 0.08, 0.3, -0.5, 0.1;
  const State scale = test::default_config().state_box.half_width();
  double prev = 0.0;
  for (double T : {1e-3, 5e-4, 2.5e-4}) {
    const Plant p = with_sample_time(plant, T);
    const State err = (p.step_euler(x, 0.05, 0.4) - rk4(p, x, 0.05, 0.4, T, 200)).cwiseQuotient(scale);
    const double e = err.cwiseAbs().maxCoeff();
    if (prev > 0.0) {
      CHECK(prev / e == doctest::Approx(4.0).epsilon(0.1));
    }
    prev = e;
  }
}

TEST_CASE("Taylor two-step prediction") {
  const Plant plant = test::default_plant();
  CHECK(plant.step_taylor2(State::Zero(), 0.0, 0.0).norm() == 0.0);

  // Agreement with a fine RK4 over 2T across the envelope, relative to the box half-widths.
  const RunConfig cfg = test::default_config();
  const State scale = cfg.state_box.half_width();
  const StateBox envelope = cfg.state_box.scaled(0.9);
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int s = 0; s < 500; ++s) {
    const State x = sample_state(rng, envelope);
    const double u = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    const double w = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    const State ref = rk4(plant, x, u, w, 2.0 * plant.sample_time(), 100);
    worst = std::max(worst, (plant.step_taylor2(x, u, w) - ref).cwiseQuotient(scale).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 0.02);

  // Third-order local error against a fine RK4 over 2T: halving T divides it by about 8.
  State x;
  x << 0.01, 0.08, 0.3, -0.5, 0.1;
  double prev = 0.0;
  for (double T : {2e-3, 1e-3, 5e-4}) {
    const Plant p = with_sample_time(plant, T);
    const State err = (p.step_taylor2(x, 0.05, 0.4) - rk4(p, x, 0.05, 0.4, 2.0 * T, 400)).cwiseQuotient(scale);
    const double e = err.cwiseAbs().maxCoeff();
    if (prev > 0.0) {
      CHECK(prev / e == doctest::Approx(8.0).epsilon(0.15));
    }
    prev = e;
  }
}

TEST_CASE("library RK4 agrees with the reference integrator") {
  const Plant plant = test::default_plant();
  State x;
  x << -0.01, 0.1, 0.2, 0.3, -0.1;
  const State a = plant.integrate_rk4(x, 0.1, -1.0, 0.01, 50);
  const State b = rk4(plant, x, 0.1, -1.0, 0.01, 50);
  CHECK((a - b).norm() <= 1e-12);
}

TEST_CASE("simulate") {
  const Plant plant = test::default_plant();
  const InputBox box{-0.3, 0.3};
  const ControllerFn zero = [](std::size_t, const State&) { return 0.0; };

  SUBCASE("equilibrium stays put") {
    const SimulationResult r = simulate(plant, State::Zero(), zero, {}, 500, box);
    REQUIRE(r.series.x.size() == 501);
    for (const State& x : r.series.x) CHECK(x.norm() == 0.0);
  }

  SUBCASE("constant command: flap converges geometrically") {
    const double c = 0.1;
    const ControllerFn hold = [&](std::size_t, const State&) { return c; };
    const SimulationResult r = simulate(plant, State::Zero(), hold, {}, 50, box);
    const double ratio = 1.0 - 1e-3 * 125.0;
    for (std::size_t k = 0; k <= 50; ++k) {
      const double expect = c * (1.0 - std::pow(ratio, static_cast<double>(k)));
      CHECK(r.series.x[k][kFlap] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("matches an explicit step loop") {
    std::vector<double> gust(300);
    for (std::size_t k = 0; k < gust.size(); ++k) gust[k] = std::sin(0.02 * static_cast<double>(k));
    const ControllerFn ctrl = [](std::size_t, const State& x) { return -2.0 * x[kPitch]; };
    State x0;
    x0 << 0.005, 0.05, 0.0, 0.0, 0.0;
    const SimulationResult r = simulate(plant, x0, ctrl, gust, 400, box);
    State x = x0;
    for (std::size_t k = 0; k < 400; ++k) {
      const double u = box.clamp(-2.0 * x[kPitch]);
      x = plant.step_euler(x, u, k < gust.size() ? gust[k] : 0.0);
      CHECK(r.series.x[k + 1] == x);
    }
  }
}

TEST_CASE("plant parameters reject invalid values") {
  PlantParams p;
  p.sample_time = 0.01;  // T lambda = 1.25
  CHECK_THROWS_AS(p.validate(), ConfigError);
  CHECK_THROWS_AS(parse_plant_params("[plant]\nairspeed = -1.0\n"), ConfigError);
}

TEST_CASE("time series CSV has one row per step") {
  const Plant plant = test::default_plant();
  const SimulationResult r = simulate(plant, State::Zero(), [](std::size_t, const State&) { return 0.0; },
                                      {}, 10, InputBox{-0.3, 0.3});
  std::ostringstream os;
  write_timeseries_csv(os, r.series, plant.sample_time());
  std::istringstream is(os.str());
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 11);
}
