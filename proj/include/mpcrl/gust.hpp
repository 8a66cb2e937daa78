#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "mpcrl/types.hpp"

namespace mpcrl {

struct GustConfig {
  double sigma_w = 1.0;       // evaluation turbulence intensity (m/s)
  double length_scale = 50.0; // L_w (m)
  double w_max = 3.0;         // bound of the disturbance set W (m/s)
  double sigma_max = 1.5;     // upper end of the training intensity range (m/s)

  void validate() const;
};

struct GustProfile {
  std::vector<double> samples;  // vertical gust velocity at each plant step (m/s)
  std::uint64_t seed = 0;
  double scale = 0.0;           // sigma_w
  double length_scale = 0.0;    // L_w
  double w_max = 0.0;
};

// First-order Dryden vertical gust: unit white noise through sigma * sqrt(2L/(pi V)) / (1 + (L/V) s),
// discretised exactly at T (stationary AR(1) with variance sigma^2), then clipped to [-w_max, w_max].
GustProfile dryden_generate(std::uint64_t seed, double duration, double airspeed, double sigma_w,
                            double length_scale, double sample_time, double w_max);

// Deterministic ensemble for one training state. Realization i uses intensity at the centre of
// band i of [0, sigma_max] split into n equal bands.
std::vector<GustProfile> training_ensemble(const State& x0, std::size_t n_realizations,
                                           const GustConfig& cfg, double duration, double airspeed,
                                           double sample_time, std::uint64_t base_seed);

// Intensity band [lo, hi) assigned to realization i of n.
std::pair<double, double> intensity_band(std::size_t i, std::size_t n, double sigma_max);

void write_gust_csv(std::ostream& os, const GustProfile& g);
GustProfile read_gust_csv(std::istream& is);

}  // namespace mpcrl
