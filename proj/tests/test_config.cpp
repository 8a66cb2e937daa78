#include <doctest.h>

#include <string>

#include "mpcrl/io.hpp"
#include "support.hpp"

using namespace mpcrl;

namespace {

std::string default_text() { return read_text_file(test::config_path("default.toml")); }

RunConfig parse(const std::string& text) { return parse_run_config(text, MPCRL_CONFIG_DIR); }

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("default configuration loads and validates") {
  const RunConfig cfg = test::default_config();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.plant.airspeed == 8.0);
  CHECK(cfg.state_box.hi[kPlunge] == 0.02);
  CHECK(cfg.eval.runs == 100);
  // Normalised weights are divided by the squared half-widths.
  CHECK(cfg.reward.q[kPlunge] == doctest::Approx(1.0 / (0.02 * 0.02)));
  const StateGrid g = cfg.grid();
  CHECK(g.cell_count() == 7 * 7 * 7 * 7);
  CHECK(cfg.r_max() == doctest::Approx(0.5 * g.normalized_half_diagonal()));
}

TEST_CASE("the hash tracks results, not job count or output directory") {
  const std::string text = default_text();
  const RunConfig a = parse(text);
  RunConfig b = parse(text);
  b.jobs = 8;
  b.out_dir = "elsewhere";
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(parse(replace(text, "seed = 1", "seed = 2")).hash() != a.hash());
  CHECK(parse(replace(text, "rollout = 200", "rollout = 100")).hash() != a.hash());
}

TEST_CASE("invalid configurations are configuration errors") {
  const std::string text = default_text();
  CHECK_THROWS_AS(parse(replace(text, "hi = [0.02,", "hi = [-0.03,")), ConfigError);
  CHECK_THROWS_AS(parse(replace(text, "lo = -0.3", "lo = 0.3")), ConfigError);
  CHECK_THROWS_AS(parse(replace(text, "horizon = 20", "horizon = 0")), ConfigError);
  CHECK_THROWS_AS(parse(replace(text, "k = 4", "k = 4\nbogus = 1")), ConfigError);
  CHECK_THROWS_AS(parse(replace(text, "runs = 100", "runs = \"many\"")), ConfigError);
  CHECK_THROWS_AS(parse(replace(text, "plant.toml", "missing.toml")), ConfigError);
  CHECK_THROWS_AS(parse("seed = [unclosed"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.toml"), ConfigError);
}

TEST_CASE("hashing and number formatting are stable") {
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
  CHECK(fmt_num(0.1) == "0.1");
  CHECK(std::stod(fmt_num(1.0 / 3.0)) == 1.0 / 3.0);
  State x;
  x << 1e-300, -0.0, 3.5, -2.25e10, 0.1;
  CHECK(state_from_json(state_to_json(x)) == x);
}
