#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mpcrl/gust.hpp"

using namespace mpcrl;

TEST_CASE("zero intensity gives a zero profile") {
  const GustProfile g = dryden_generate(3, 2.0, 8.0, 0.0, 50.0, 1e-3, 3.0);
  REQUIRE(g.samples.size() == 2000);
  for (double w : g.samples) CHECK(w == 0.0);
}

TEST_CASE("same seed gives an identical profile") {
  const GustProfile a = dryden_generate(42, 1.0, 8.0, 1.0, 50.0, 1e-3, 3.0);
  const GustProfile b = dryden_generate(42, 1.0, 8.0, 1.0, 50.0, 1e-3, 3.0);
  const GustProfile c = dryden_generate(43, 1.0, 8.0, 1.0, 50.0, 1e-3, 3.0);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
}

TEST_CASE("stationary statistics before clipping") {
  // 1e6 samples with an unreachable clip level; the AR(1) coefficient is exp(-V T / L).
  const double sigma = 1.3;
  const GustProfile g = dryden_generate(5, 1000.0, 8.0, sigma, 50.0, 1e-3, 1e9);
  REQUIRE(g.samples.size() == 1000000);
  double mean = 0.0;
  for (double w : g.samples) mean += w;
  mean /= static_cast<double>(g.samples.size());
  double var = 0.0;
  double lag1 = 0.0;
  for (std::size_t k = 0; k < g.samples.size(); ++k) {
    var += (g.samples[k] - mean) * (g.samples[k] - mean);
    if (k > 0) lag1 += (g.samples[k] - mean) * (g.samples[k - 1] - mean);
  }
  lag1 /= var;
  var /= static_cast<double>(g.samples.size() - 1);
  CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.1));
  CHECK(lag1 == doctest::Approx(std::exp(-8.0 * 1e-3 / 50.0)).epsilon(1e-3));
}

TEST_CASE("profile stays inside the disturbance bound") {
  const GustProfile g = dryden_generate(9, 20.0, 8.0, 2.5, 50.0, 1e-3, 3.0);
  for (double w : g.samples) CHECK(std::abs(w) <= 3.0);
}

TEST_CASE("training ensembles") {
  GustConfig cfg;
  cfg.sigma_max = 1.5;
  State x0;
  x0 << 0.01, 0.0, 0.1, 0.0, 0.0;

  SUBCASE("single realization") {
    CHECK(training_ensemble(x0, 1, cfg, 0.5, 8.0, 1e-3, 1).size() == 1);
  }
  SUBCASE("reproducible for the same state") {
    const auto a = training_ensemble(x0, 3, cfg, 0.5, 8.0, 1e-3, 1);
    const auto b = training_ensemble(x0, 3, cfg, 0.5, 8.0, 1e-3, 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].samples == b[i].samples);
    State x1 = x0;
    x1[kPitch] = 0.05;
    CHECK(training_ensemble(x1, 3, cfg, 0.5, 8.0, 1e-3, 1)[0].samples != a[0].samples);
  }
  SUBCASE("intensities stratify [0, sigma_max]") {
    const std::size_t n = 5;
    const auto e = training_ensemble(x0, n, cfg, 0.5, 8.0, 1e-3, 1);
    const double width = cfg.sigma_max / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double lo = width * static_cast<double>(i);
      CHECK(e[i].scale >= lo);
      CHECK(e[i].scale < lo + width);
      const auto band = intensity_band(i, n, cfg.sigma_max);
      CHECK(band.first == doctest::Approx(lo));
      CHECK(band.second == doctest::Approx(lo + width));
    }
  }
  SUBCASE("zero realizations is rejected") {
    CHECK_THROWS_AS(training_ensemble(x0, 0, cfg, 0.5, 8.0, 1e-3, 1), ConfigError);
  }
}

TEST_CASE("gust CSV round trip is exact") {
  const GustProfile g = dryden_generate(77, 0.3, 8.0, 1.0, 50.0, 1e-3, 3.0);
  std::stringstream ss;
  write_gust_csv(ss, g);
  const GustProfile r = read_gust_csv(ss);
  CHECK(r.samples == g.samples);
  CHECK(r.seed == g.seed);
  CHECK(r.scale == g.scale);
}

TEST_CASE("invalid generator parameters are rejected") {
  CHECK_THROWS_AS(dryden_generate(1, 1.0, 8.0, -1.0, 50.0, 1e-3, 3.0), ConfigError);
  CHECK_THROWS_AS(dryden_generate(1, 1.0, 8.0, 1.0, 0.0, 1e-3, 3.0), ConfigError);
}
