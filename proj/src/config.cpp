#include "mpcrl/config.hpp"

#include <filesystem>
#include <set>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "mpcrl/io.hpp"

namespace mpcrl {

namespace {

// Typed access to one TOML table that rejects keys nobody asked for.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  double number(const std::string& key, double fallback) {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (auto v = n->value<double>()) return *v;
    throw ConfigError(where(key) + " must be a number");
  }

  int integer(const std::string& key, int fallback) {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (auto v = n->value<std::int64_t>()) return static_cast<int>(*v);
    throw ConfigError(where(key) + " must be an integer");
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (auto v = n->value<std::int64_t>(); v && *v >= 0) return static_cast<std::uint64_t>(*v);
    throw ConfigError(where(key) + " must be a non-negative integer");
  }

  bool boolean(const std::string& key, bool fallback) {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (auto v = n->value<bool>()) return *v;
    throw ConfigError(where(key) + " must be a boolean");
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (auto v = n->value<std::string>()) return *v;
    throw ConfigError(where(key) + " must be a string");
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
    const toml::node* n = find(key);
    if (!n) return fallback;
    const toml::array* arr = n->as_array();
    if (!arr) throw ConfigError(where(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) {
      auto v = e.value<double>();
      if (!v) throw ConfigError(where(key) + " must be an array of numbers");
      out.push_back(*v);
    }
    return out;
  }

  State state(const std::string& key, const State& fallback) {
    const std::vector<double> v = numbers(key, {fallback.data(), fallback.data() + kStateDim});
    if (v.size() != kStateDim) throw ConfigError(where(key) + " must have 5 entries");
    return State(v.data());
  }

  Section sub(const std::string& key) {
    const toml::node* n = find(key);
    if (!n) return {nullptr, qualified(key)};
    const toml::table* t = n->as_table();
    if (!t) throw ConfigError(where(key) + " must be a table");
    return {t, qualified(key)};
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (used_.count(std::string(k.str())) == 0) {
        throw ConfigError("unknown config key " + qualified(std::string(k.str())));
      }
    }
  }

 private:
  const toml::node* find(const std::string& key) {
    used_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }
  std::string qualified(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }
  std::string where(const std::string& key) const { return "config key " + qualified(key); }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> used_;
};

toml::table parse_toml(const std::string& text) {
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("TOML parse error: ") + std::string(e.description()));
  }
}

PlantParams plant_from_section(Section& s) {
  PlantParams p;
  p.mass_plunge = s.number("mass_plunge", p.mass_plunge);
  p.static_unbalance = s.number("static_unbalance", p.static_unbalance);
  p.inertia_pitch = s.number("inertia_pitch", p.inertia_pitch);
  p.damping_plunge = s.number("damping_plunge", p.damping_plunge);
  p.damping_pitch = s.number("damping_pitch", p.damping_pitch);
  p.stiffness_plunge = s.number("stiffness_plunge", p.stiffness_plunge);
  p.pitch_stiffness = s.numbers("pitch_stiffness", p.pitch_stiffness);
  p.air_density = s.number("air_density", p.air_density);
  p.airspeed = s.number("airspeed", p.airspeed);
  p.semichord = s.number("semichord", p.semichord);
  p.span = s.number("span", p.span);
  p.a_offset = s.number("a_offset", p.a_offset);
  p.cl_alpha = s.number("cl_alpha", p.cl_alpha);
  p.cl_beta = s.number("cl_beta", p.cl_beta);
  p.cm_alpha = s.number("cm_alpha", p.cm_alpha);
  p.cm_beta = s.number("cm_beta", p.cm_beta);
  p.actuator_gain = s.number("actuator_gain", p.actuator_gain);
  p.sample_time = s.number("sample_time", p.sample_time);
  s.finish();
  p.validate();
  return p;
}

State scaled_weights(const State& normalized, const State& half_width) {
  return normalized.cwiseQuotient(half_width.cwiseProduct(half_width));
}

}  // namespace

PlantParams parse_plant_params(const std::string& toml_text) {
  const toml::table t = parse_toml(toml_text);
  Section root(&t, "");
  Section s = root.sub("plant");
  if (t.contains("plant")) {
    root.finish();
    return plant_from_section(s);
  }
  return plant_from_section(root);
}

PlantParams load_plant_params(const std::string& toml_path) {
  return parse_plant_params(read_text_file(toml_path));
}

nlohmann::json plant_params_to_json(const PlantParams& p) {
  return {{"mass_plunge", p.mass_plunge},
          {"static_unbalance", p.static_unbalance},
          {"inertia_pitch", p.inertia_pitch},
          {"damping_plunge", p.damping_plunge},
          {"damping_pitch", p.damping_pitch},
          {"stiffness_plunge", p.stiffness_plunge},
          {"pitch_stiffness", p.pitch_stiffness},
          {"air_density", p.air_density},
          {"airspeed", p.airspeed},
          {"semichord", p.semichord},
          {"span", p.span},
          {"a_offset", p.a_offset},
          {"cl_alpha", p.cl_alpha},
          {"cl_beta", p.cl_beta},
          {"cm_alpha", p.cm_alpha},
          {"cm_beta", p.cm_beta},
          {"actuator_gain", p.actuator_gain},
          {"sample_time", p.sample_time}};
}

RunConfig parse_run_config(const std::string& toml_text, const std::string& base_dir) {
  const toml::table t = parse_toml(toml_text);
  Section root(&t, "");
  RunConfig c;

  const std::string plant_rel = root.string("plant", "");
  if (plant_rel.empty()) throw ConfigError("config key plant (path to plant.toml) is required");
  std::filesystem::path plant_path(plant_rel);
  if (plant_path.is_relative()) plant_path = std::filesystem::path(base_dir) / plant_path;
  c.plant_path = plant_path.lexically_normal().string();
  if (!std::filesystem::exists(c.plant_path)) {
    throw ConfigError("plant file not found: " + c.plant_path);
  }
  c.plant = load_plant_params(c.plant_path);
  c.seed = root.unsigned_integer("seed", c.seed);
  c.jobs = root.integer("jobs", c.jobs);
  c.out_dir = root.string("out", c.out_dir);

  Section sb = root.sub("state_box");
  c.state_box.lo = sb.state("lo", State(-0.02, -0.15, -0.15, -1.5, -0.35));
  c.state_box.hi = sb.state("hi", State(0.02, 0.15, 0.15, 1.5, 0.35));
  sb.finish();

  Section ib = root.sub("input_box");
  c.input_box.lo = ib.number("lo", -0.3);
  c.input_box.hi = ib.number("hi", 0.3);
  ib.finish();

  Section g = root.sub("gust");
  c.gust.sigma_w = g.number("sigma_w", c.gust.sigma_w);
  c.gust.length_scale = g.number("length_scale", c.gust.length_scale);
  c.gust.w_max = g.number("w_max", c.gust.w_max);
  c.gust.sigma_max = g.number("sigma_max", c.gust.sigma_max);
  g.finish();

  c.state_box.validate();
  c.input_box.validate();
  const State hw = c.state_box.half_width();
  const double cu = c.input_box.half_width();

  Section m = root.sub("mpc");
  c.mpc.horizon = m.integer("horizon", c.mpc.horizon);
  c.mpc.substeps = m.integer("substeps", c.mpc.substeps);
  c.mpc.q = scaled_weights(m.state("q", State(1.0, 1.0, 1.0, 1.0, 0.0)), hw);
  c.mpc.r = m.number("r", 0.1) / (cu * cu);
  c.mpc.terminal_scale = m.number("terminal_scale", c.mpc.terminal_scale);
  c.mpc.tolerance = m.number("tolerance", c.mpc.tolerance);
  c.mpc.feasibility_tol = m.number("feasibility_tol", c.mpc.feasibility_tol);
  c.mpc.max_iterations = m.integer("max_iterations", c.mpc.max_iterations);
  m.finish();
  c.mpc.x_lo = c.state_box.lo;
  c.mpc.x_hi = c.state_box.hi;
  c.mpc.u_lo = c.input_box.lo;
  c.mpc.u_hi = c.input_box.hi;

  Section b = root.sub("bounds");
  c.bounds.margin = b.number("margin", c.bounds.margin);
  c.bounds.n_probe = b.integer("n_probe", c.bounds.n_probe);
  c.bounds.bisection_tol = b.number("bisection_tol", c.bounds.bisection_tol);
  c.bounds.max_shrink = b.integer("max_shrink", c.bounds.max_shrink);
  c.bounds.roundoff_tol = b.number("roundoff_tol", c.bounds.roundoff_tol);
  b.finish();

  Section tr = root.sub("training");
  c.training.samples_per_dim = tr.integer("samples_per_dim", c.training.samples_per_dim);
  c.training.envelope = tr.number("envelope", c.training.envelope);
  c.training.realizations = tr.integer("realizations", c.training.realizations);
  c.training.grid_bins = tr.integer("grid_bins", c.training.grid_bins);
  c.training.q.n_actions = tr.integer("n_actions", c.training.q.n_actions);
  c.training.q.gamma = tr.number("gamma", c.training.q.gamma);
  c.training.q.max_sweeps = tr.integer("max_sweeps", c.training.q.max_sweeps);
  c.training.q.tolerance = tr.number("tolerance", c.training.q.tolerance);
  tr.finish();

  Section rw = root.sub("reward");
  c.reward.q = scaled_weights(rw.state("q", State::Ones()), hw);
  c.reward.r = rw.number("r", 0.1) / (cu * cu);
  c.reward.rollout = rw.integer("rollout", c.reward.rollout);
  rw.finish();

  Section f = root.sub("filter");
  c.filter.k = f.integer("k", c.filter.k);
  c.filter.r_max = f.number("r_max", c.filter.r_max);
  c.r_max_factor = f.number("r_max_factor", c.r_max_factor);
  c.filter.epsilon = f.number("epsilon", c.filter.epsilon);
  c.filter.h_u = f.number("h_u", c.filter.h_u);
  c.filter.h_x = f.number("h_x", c.filter.h_x);
  c.filter.delay_steps = f.integer("delay_steps", c.filter.delay_steps);
  c.filter.remainder = f.boolean("remainder", c.filter.remainder);
  c.filter.local_retraining = f.boolean("local_retraining", c.filter.local_retraining);
  f.finish();

  Section e = root.sub("evaluation");
  c.eval.runs = e.integer("runs", c.eval.runs);
  c.eval.episode.duration = e.number("duration", c.eval.episode.duration);
  c.eval.episode.gust_phase = e.number("gust_phase", c.eval.episode.gust_phase);
  c.eval.episode.rate_limit = e.number("rate_limit", c.eval.episode.rate_limit);
  c.eval.episode.settle_band = e.number("settle_band", c.eval.episode.settle_band);
  c.eval.episode.excursion_fraction =
      e.number("excursion_fraction", c.eval.episode.excursion_fraction);
  c.eval.init_fraction = e.number("init_fraction", c.eval.init_fraction);
  c.eval.keep_series = e.integer("keep_series", c.eval.keep_series);
  e.finish();

  Section v = root.sub("validation");
  c.validation.taylor_samples = v.integer("taylor_samples", c.validation.taylor_samples);
  c.validation.taylor_threshold = v.number("taylor_threshold", c.validation.taylor_threshold);
  c.validation.lpv_samples = v.integer("lpv_samples", c.validation.lpv_samples);
  c.validation.lpv_horizon = v.integer("lpv_horizon", c.validation.lpv_horizon);
  c.validation.lpv_threshold = v.number("lpv_threshold", c.validation.lpv_threshold);
  c.validation.mode_lo_hz = v.number("mode_lo_hz", c.validation.mode_lo_hz);
  c.validation.mode_hi_hz = v.number("mode_hi_hz", c.validation.mode_hi_hz);
  c.validation.envelope = v.number("envelope", c.validation.envelope);
  v.finish();

  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const std::filesystem::path p(path);
  if (!std::filesystem::exists(p)) throw ConfigError("config file not found: " + path);
  return parse_run_config(read_text_file(path), p.parent_path().string());
}

void RunConfig::validate() const {
  plant.validate();
  state_box.validate();
  input_box.validate();
  if (!state_box.contains(State::Zero())) throw ConfigError("state box must contain the equilibrium");
  if (!input_box.contains(0.0)) throw ConfigError("input box must contain zero");
  gust.validate();
  mpc.validate(kStateDim);
  if (!(bounds.margin >= 0.0 && bounds.margin < 1.0)) throw ConfigError("bounds.margin must be in [0, 1)");
  if (bounds.n_probe < 2 || bounds.max_shrink < 0 || !(bounds.bisection_tol > 0.0) ||
      !(bounds.roundoff_tol >= 0.0)) {
    throw ConfigError("invalid bounds settings");
  }
  if (training.samples_per_dim < 2) throw ConfigError("training.samples_per_dim must be >= 2");
  if (!(training.envelope > 0.0 && training.envelope <= 1.0)) {
    throw ConfigError("training.envelope must be in (0, 1]");
  }
  if (training.realizations < 1 || training.grid_bins < 1) {
    throw ConfigError("training.realizations and grid_bins must be >= 1");
  }
  training.q.validate();
  reward.validate();
  filter.validate();
  if (!(r_max_factor > 0.0)) throw ConfigError("filter.r_max_factor must be > 0");
  if (eval.runs < 1) throw ConfigError("evaluation.runs must be >= 1");
  if (!(eval.init_fraction > 0.0 && eval.init_fraction <= 1.0)) {
    throw ConfigError("evaluation.init_fraction must be in (0, 1]");
  }
  eval.episode.validate(plant.sample_time);
  validation.validate();
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

StateGrid RunConfig::grid() const {
  StateGrid g;
  g.box = state_box;
  g.bins.fill(training.grid_bins);
  // Training states all start with the flap at rest, so the flap is not binned.
  g.bins[kFlap] = 1;
  return g;
}

double RunConfig::r_max() const {
  return filter.r_max > 0.0 ? filter.r_max : r_max_factor * grid().normalized_half_diagonal();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["plant"] = plant_params_to_json(plant);
  j["seed"] = seed;
  j["state_box"] = {{"lo", state_to_json(state_box.lo)}, {"hi", state_to_json(state_box.hi)}};
  j["input_box"] = {{"lo", input_box.lo}, {"hi", input_box.hi}};
  j["gust"] = {{"sigma_w", gust.sigma_w},
               {"length_scale", gust.length_scale},
               {"w_max", gust.w_max},
               {"sigma_max", gust.sigma_max}};
  j["mpc"] = {{"horizon", mpc.horizon},
              {"substeps", mpc.substeps},
              {"q", state_to_json(State(mpc.q))},
              {"r", mpc.r},
              {"terminal_scale", mpc.terminal_scale},
              {"tolerance", mpc.tolerance},
              {"feasibility_tol", mpc.feasibility_tol},
              {"max_iterations", mpc.max_iterations}};
  j["bounds"] = {{"margin", bounds.margin},
                 {"n_probe", bounds.n_probe},
                 {"bisection_tol", bounds.bisection_tol},
                 {"max_shrink", bounds.max_shrink},
                 {"roundoff_tol", bounds.roundoff_tol}};
  j["training"] = {{"samples_per_dim", training.samples_per_dim},
                   {"envelope", training.envelope},
                   {"realizations", training.realizations},
                   {"grid_bins", training.grid_bins},
                   {"n_actions", training.q.n_actions},
                   {"gamma", training.q.gamma},
                   {"max_sweeps", training.q.max_sweeps},
                   {"tolerance", training.q.tolerance}};
  j["reward"] = {{"q", state_to_json(reward.q)}, {"r", reward.r}, {"rollout", reward.rollout}};
  j["filter"] = {{"k", filter.k},
                 {"r_max", r_max()},
                 {"epsilon", filter.epsilon},
                 {"h_u", filter.h_u},
                 {"h_x", filter.h_x},
                 {"delay_steps", filter.delay_steps},
                 {"remainder", filter.remainder},
                 {"local_retraining", filter.local_retraining}};
  j["evaluation"] = {{"runs", eval.runs},
                     {"duration", eval.episode.duration},
                     {"gust_phase", eval.episode.gust_phase},
                     {"rate_limit", eval.episode.rate_limit},
                     {"settle_band", eval.episode.settle_band},
                     {"excursion_fraction", eval.episode.excursion_fraction},
                     {"init_fraction", eval.init_fraction},
                     {"keep_series", eval.keep_series}};
  j["validation"] = {{"taylor_samples", validation.taylor_samples},
                     {"taylor_threshold", validation.taylor_threshold},
                     {"lpv_samples", validation.lpv_samples},
                     {"lpv_horizon", validation.lpv_horizon},
                     {"lpv_threshold", validation.lpv_threshold},
                     {"mode_lo_hz", validation.mode_lo_hz},
                     {"mode_hi_hz", validation.mode_hi_hz},
                     {"envelope", validation.envelope}};
  return j;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json().dump())); }

Plant make_plant(const RunConfig& cfg) {
  Plant p(cfg.plant);
  p.set_jacobian_scale(cfg.state_box.half_width());
  return p;
}

}  // namespace mpcrl
