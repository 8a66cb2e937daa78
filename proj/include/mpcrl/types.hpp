#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace mpcrl {

inline constexpr int kStateDim = 5;

// Wing state layout: [plunge h, pitch theta, plunge rate, pitch rate, flap beta_f].
using State = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;

enum StateIndex : int { kPlunge = 0, kPitch = 1, kPlungeRate = 2, kPitchRate = 3, kFlap = 4 };

inline constexpr std::array<const char*, kStateDim> kStateNames = {"h", "theta", "v_h", "v_theta",
                                                                   "beta_f"};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Axis-aligned box over the wing state.
struct StateBox {
  State lo = State::Constant(-1.0);
  State hi = State::Constant(1.0);

  [[nodiscard]] bool contains(const State& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
  [[nodiscard]] State center() const { return 0.5 * (lo + hi); }
  [[nodiscard]] State half_width() const { return 0.5 * (hi - lo); }

  // Box shrunk by `fraction` of each half-width on both sides.
  [[nodiscard]] StateBox tightened(double fraction) const {
    const State m = fraction * half_width();
    return {lo + m, hi - m};
  }
  // Box scaled about its centre.
  [[nodiscard]] StateBox scaled(double fraction) const {
    const State c = center();
    const State hw = fraction * half_width();
    return {c - hw, c + hw};
  }

  void validate() const {
    if (!lo.allFinite() || !hi.allFinite() || !((hi.array() > lo.array()).all())) {
      throw ConfigError("state box must be finite with lo < hi in every dimension");
    }
  }
};

struct InputBox {
  double lo = -1.0;
  double hi = 1.0;

  [[nodiscard]] bool contains(double u) const { return u >= lo && u <= hi; }
  [[nodiscard]] double clamp(double u) const { return u < lo ? lo : (u > hi ? hi : u); }
  [[nodiscard]] double half_width() const { return 0.5 * (hi - lo); }

  void validate() const {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw ConfigError("input box must be finite with lo < hi");
    }
  }
};

}  // namespace mpcrl
