#include "mpcrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <unordered_map>

#include "mpcrl/io.hpp"
#include "mpcrl/parallel.hpp"

namespace mpcrl {

void EpisodeConfig::validate(double sample_time) const {
  if (!(duration > 0.0) || !(gust_phase >= 0.0) || gust_phase > duration) {
    throw ConfigError("episode needs duration > 0 and 0 <= gust_phase <= duration");
  }
  if (!(rate_limit > 0.0)) throw ConfigError("rate_limit must be > 0");
  if (!(settle_band > 0.0) || !(excursion_fraction > 0.0)) {
    throw ConfigError("settle_band and excursion_fraction must be > 0");
  }
  const double n = duration / sample_time;
  if (std::abs(n - std::round(n)) > 1e-6) throw ConfigError("duration must be a multiple of T");
}

std::size_t EpisodeConfig::steps(double sample_time) const {
  return static_cast<std::size_t>(std::llround(duration / sample_time));
}

std::size_t EpisodeConfig::gust_steps(double sample_time) const {
  return static_cast<std::size_t>(std::llround(gust_phase / sample_time));
}

const std::vector<std::string>& EpisodeMetrics::column_names() {
  static const std::vector<std::string> names = {
      "max_overshoot_h", "settle_h",         "max_alpha_eff",   "settle_alpha",
      "rms_vh_full",     "rms_vh_post",      "rms_vtheta_full", "rms_vtheta_post",
      "excursions_h",    "excursions_alpha", "median_du_pct",   "fallback_count",
      "violation_count", "certified_steps",  "bound_violations", "envelope_exits",
      "infeasible_steps"};
  return names;
}

std::vector<double> EpisodeMetrics::values() const {
  return {max_overshoot_h,
          settle_h,
          max_alpha_eff,
          settle_alpha,
          rms_vh_full,
          rms_vh_post,
          rms_vtheta_full,
          rms_vtheta_post,
          static_cast<double>(excursions_h),
          static_cast<double>(excursions_alpha),
          median_du_pct,
          static_cast<double>(fallback_count),
          static_cast<double>(violation_count),
          static_cast<double>(certified_steps),
          static_cast<double>(bound_violations),
          static_cast<double>(envelope_exits),
          static_cast<double>(infeasible_steps)};
}

double settling_time(std::span<const double> signal, std::size_t from, double band,
                     double sample_time) {
  std::size_t last_out = from;
  bool any = false;
  for (std::size_t k = from; k < signal.size(); ++k) {
    if (std::abs(signal[k]) > band) {
      last_out = k;
      any = true;
    }
  }
  if (!any) return 0.0;
  return static_cast<double>(last_out + 1 - from) * sample_time;
}

int count_excursions(std::span<const double> signal, double threshold) {
  int n = 0;
  bool outside = false;
  for (double s : signal) {
    const bool now = std::abs(s) > threshold;
    if (now && !outside) ++n;
    outside = now;
  }
  return n;
}

double median_du_pct(std::span<const double> u, double rate_limit) {
  if (u.size() < 2) return 0.0;
  std::vector<double> pct;
  pct.reserve(u.size() - 1);
  for (std::size_t k = 1; k < u.size(); ++k) {
    pct.push_back(100.0 * std::min(std::abs(u[k] - u[k - 1]) / rate_limit, 1.0));
  }
  const std::size_t mid = pct.size() / 2;
  std::nth_element(pct.begin(), pct.begin() + static_cast<std::ptrdiff_t>(mid), pct.end());
  const double upper = pct[mid];
  if (pct.size() % 2 == 1) return upper;
  const double lower = *std::max_element(pct.begin(), pct.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

namespace {

double rms(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::vector<double> component(const TimeSeries& ts, int i) {
  std::vector<double> out;
  out.reserve(ts.x.size());
  for (const State& x : ts.x) out.push_back(x[i]);
  return out;
}

std::vector<double> alpha_series(const Plant& plant, const TimeSeries& ts) {
  std::vector<double> out;
  out.reserve(ts.x.size());
  for (std::size_t k = 0; k < ts.x.size(); ++k) {
    const double w = k < ts.w.size() ? ts.w[k] : 0.0;
    out.push_back(plant.alpha_eff(ts.x[k], w));
  }
  return out;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

EpisodeMetrics compute_metrics(const Plant& plant, const TimeSeries& ts, std::size_t gust_end,
                               const StateBox& admissible, const EpisodeConfig& cfg,
                               const OpenLoopPeak& peak) {
  EpisodeMetrics m;
  const double T = plant.sample_time();
  const State hw = admissible.half_width();
  const std::vector<double> h = component(ts, kPlunge);
  const std::vector<double> vh = component(ts, kPlungeRate);
  const std::vector<double> vt = component(ts, kPitchRate);
  const std::vector<double> alpha = alpha_series(plant, ts);
  const std::size_t from = std::min(gust_end, h.size());

  m.max_overshoot_h = max_abs(h);
  m.max_alpha_eff = max_abs(alpha) * 180.0 / std::numbers::pi;
  m.settle_h = settling_time(h, from, cfg.settle_band * hw[kPlunge], T);
  // alpha_eff is an incidence, banded like the pitch angle
  m.settle_alpha = settling_time(alpha, from, cfg.settle_band * hw[kPitch], T);
  m.rms_vh_full = rms(vh);
  m.rms_vtheta_full = rms(vt);
  m.rms_vh_post = rms(std::span<const double>(vh).subspan(from));
  m.rms_vtheta_post = rms(std::span<const double>(vt).subspan(from));
  m.excursions_h = count_excursions(h, cfg.excursion_fraction * peak.h);
  m.excursions_alpha = count_excursions(alpha, cfg.excursion_fraction * peak.alpha);
  m.median_du_pct = median_du_pct(ts.u, cfg.rate_limit);
  for (std::size_t k = 1; k < ts.x.size(); ++k) {
    if (!admissible.contains(ts.x[k])) ++m.violation_count;
  }
  return m;
}

namespace {

struct RateLimitedRun {
  SimulationResult sim;
  std::vector<FilterDecision> decisions;
};

RateLimitedRun rollout(const HarnessContext& ctx, Controller& controller, const RunSpec& run) {
  const Plant& plant = *ctx.plant;
  const double rate = ctx.episode.rate_limit;
  RateLimitedRun out;
  double u_prev = ctx.input_box.clamp(run.x0[kFlap]);
  const ControllerFn fn = [&](std::size_t k, const State& x) {
    const double cmd = controller.command(k, x, u_prev, rate);
    if (!std::isfinite(cmd)) return cmd;
    const double u = ctx.input_box.clamp(std::clamp(cmd, u_prev - rate, u_prev + rate));
    if (const FilterDecision* d = controller.last_decision()) out.decisions.push_back(*d);
    u_prev = u;
    return u;
  };
  try {
    out.sim = simulate(plant, run.x0, fn, run.gust.samples, ctx.episode.steps(plant.sample_time()),
                       ctx.input_box);
  } catch (const DomainError& e) {
    // diverged trajectory; keep what was recorded
    out.sim.aborted = true;
    out.sim.abort_reason = e.what();
  }
  return out;
}

}  // namespace

OpenLoopPeak open_loop_peak(const HarnessContext& ctx, const RunSpec& run) {
  auto zero = make_zero_controller();
  const RateLimitedRun r = rollout(ctx, *zero, run);
  OpenLoopPeak p;
  const TimeSeries& ts = r.sim.series;
  for (std::size_t k = 0; k < ts.x.size(); ++k) {
    const double w = k < ts.w.size() ? ts.w[k] : 0.0;
    p.h = std::max(p.h, std::abs(ts.x[k][kPlunge]));
    p.alpha = std::max(p.alpha, std::abs(ctx.plant->alpha_eff(ts.x[k], w)));
  }
  return p;
}

EpisodeResult run_episode(const HarnessContext& ctx, Controller& controller, const RunSpec& run,
                          const OpenLoopPeak& peak) {
  const Plant& plant = *ctx.plant;
  RateLimitedRun r = rollout(ctx, controller, run);
  EpisodeResult res;
  res.series = std::move(r.sim.series);
  res.decisions = std::move(r.decisions);
  res.metrics = compute_metrics(plant, res.series, ctx.episode.gust_steps(plant.sample_time()),
                                ctx.admissible, ctx.episode, peak);
  res.metrics.aborted = r.sim.aborted;
  res.metrics.infeasible_steps = controller.infeasible_count();

  for (const FilterDecision& d : res.decisions) {
    if (d.fallback_tier > 0) ++res.metrics.fallback_count;
    if (d.envelope_exit) ++res.metrics.envelope_exits;
    if (!d.certified || d.k + 1 >= res.series.x.size()) continue;
    ++res.metrics.certified_steps;
    const State& next = res.series.x[d.k + 1];
    bool ok = ctx.admissible.contains(next);
    for (std::size_t n = 0; n < d.x_plus.size(); ++n) {
      if (((next - d.x_plus[n]).cwiseAbs().array() > d.deltas[n].array()).any()) ok = false;
    }
    if (!ok) ++res.metrics.bound_violations;
  }
  return res;
}

RunSpec make_run(int run, std::uint64_t seed0, const HarnessContext& ctx, const GustConfig& gust,
                 double init_fraction) {
  const Plant& plant = *ctx.plant;
  const double T = plant.sample_time();
  RunSpec spec;
  spec.run = run;
  spec.seed = mix64(seed0 + static_cast<std::uint64_t>(run));
  if (ctx.episode.gust_phase > 0.0) {
    spec.gust = dryden_generate(spec.seed, ctx.episode.gust_phase, plant.params().airspeed,
                                gust.sigma_w, gust.length_scale, T, gust.w_max);
  } else {
    spec.gust.seed = spec.seed;
  }
  spec.gust.samples.resize(ctx.episode.steps(T), 0.0);

  const StateBox inner = ctx.admissible.scaled(init_fraction);
  std::mt19937_64 rng(mix64(spec.seed ^ 0x5eedULL));
  for (int i = 0; i < kStateDim; ++i) {
    std::uniform_real_distribution<double> dist(inner.lo[i], inner.hi[i]);
    spec.x0[i] = dist(rng);
  }
  return spec;
}

EpisodeMetrics CampaignResult::mean(std::size_t controller) const {
  const auto& rows = runs.at(controller);
  const std::size_t ncol = EpisodeMetrics::column_names().size();
  std::vector<double> acc(ncol, 0.0);
  for (const auto& m : rows) {
    const auto v = m.values();
    for (std::size_t c = 0; c < ncol; ++c) acc[c] += v[c];
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  for (double& a : acc) a /= n;
  EpisodeMetrics m;
  m.max_overshoot_h = acc[0];
  m.settle_h = acc[1];
  m.max_alpha_eff = acc[2];
  m.settle_alpha = acc[3];
  m.rms_vh_full = acc[4];
  m.rms_vh_post = acc[5];
  m.rms_vtheta_full = acc[6];
  m.rms_vtheta_post = acc[7];
  // counts are summed over the campaign rather than averaged
  auto total = [&](auto field) {
    int s = 0;
    for (const auto& r : rows) s += r.*field;
    return s;
  };
  m.excursions_h = total(&EpisodeMetrics::excursions_h);
  m.excursions_alpha = total(&EpisodeMetrics::excursions_alpha);
  m.median_du_pct = acc[10];
  m.fallback_count = total(&EpisodeMetrics::fallback_count);
  m.violation_count = total(&EpisodeMetrics::violation_count);
  m.certified_steps = total(&EpisodeMetrics::certified_steps);
  m.bound_violations = total(&EpisodeMetrics::bound_violations);
  m.envelope_exits = total(&EpisodeMetrics::envelope_exits);
  m.infeasible_steps = total(&EpisodeMetrics::infeasible_steps);
  return m;
}

CampaignResult monte_carlo(const HarnessContext& ctx, const std::vector<NamedController>& controllers,
                           const GustConfig& gust, const CampaignConfig& cfg) {
  if (cfg.runs < 1) throw ConfigError("monte_carlo needs at least one run");
  ctx.episode.validate(ctx.plant->sample_time());
  const auto n_runs = static_cast<std::size_t>(cfg.runs);
  const auto keep = static_cast<std::size_t>(std::clamp(cfg.keep_series, 0, cfg.runs));

  CampaignResult res;
  for (const auto& c : controllers) res.controllers.push_back(c.name);
  res.runs.assign(controllers.size(), std::vector<EpisodeMetrics>(n_runs));
  res.kept.assign(controllers.size(), std::vector<EpisodeResult>(keep));
  res.specs.resize(n_runs);
  for (std::size_t r = 0; r < n_runs; ++r) {
    res.specs[r] = make_run(static_cast<int>(r), cfg.seed, ctx, gust, cfg.init_fraction);
  }

  parallel_for(n_runs * controllers.size(), cfg.jobs, [&](std::size_t task) {
    const std::size_t r = task / controllers.size();
    const std::size_t c = task % controllers.size();
    const RunSpec& spec = res.specs[r];
    const OpenLoopPeak peak = open_loop_peak(ctx, spec);
    auto ctrl = controllers[c].make(spec);
    EpisodeResult er = run_episode(ctx, *ctrl, spec, peak);
    res.runs[c][r] = er.metrics;
    if (r < keep) res.kept[c][r] = std::move(er);
  });
  return res;
}

void write_metrics_summary_csv(std::ostream& os, const CampaignResult& r) {
  os << "controller";
  for (const auto& n : EpisodeMetrics::column_names()) os << ',' << n;
  os << '\n';
  for (std::size_t c = 0; c < r.controllers.size(); ++c) {
    os << r.controllers[c];
    for (double v : r.mean(c).values()) os << ',' << fmt_num(v);
    os << '\n';
  }
}

void write_metrics_runs_csv(std::ostream& os, const CampaignResult& r) {
  os << "run,seed,controller";
  for (const auto& n : EpisodeMetrics::column_names()) os << ',' << n;
  os << ",aborted\n";
  for (std::size_t run = 0; run < r.specs.size(); ++run) {
    for (std::size_t c = 0; c < r.controllers.size(); ++c) {
      const EpisodeMetrics& m = r.runs[c][run];
      os << run << ',' << r.specs[run].seed << ',' << r.controllers[c];
      for (double v : m.values()) os << ',' << fmt_num(v);
      os << ',' << (m.aborted ? 1 : 0) << '\n';
    }
  }
}

namespace {

class ZeroController final : public Controller {
 public:
  [[nodiscard]] std::string name() const override { return "open_loop"; }
  double command(std::size_t, const State&, double, double) override { return 0.0; }
};

class LpvController final : public Controller {
 public:
  LpvController(const Plant& plant, MpcConfig cfg) : plant_(plant), cfg_(std::move(cfg)) {}
  [[nodiscard]] std::string name() const override { return "lpv"; }

  double command(std::size_t, const State& x, double u_prev, double) override {
    std::vector<double> warm;
    if (!last_.empty()) {
      warm.assign(last_.begin() + 1, last_.end());
      warm.push_back(last_.back());
    }
    MpcSolution sol;
    try {
      sol = solve_wing_mpc(plant_, x, {}, cfg_, warm);
    } catch (const DomainError&) {
      sol.feasible = false;
    }
    if (!sol.feasible) {
      ++infeasible_;
      last_.clear();
      return u_prev;
    }
    last_ = sol.inputs;
    return sol.inputs.front();
  }
  [[nodiscard]] int infeasible_count() const override { return infeasible_; }

 private:
  const Plant& plant_;
  MpcConfig cfg_;
  std::vector<double> last_;
  int infeasible_ = 0;
};

class RlController final : public Controller {
 public:
  RlController(std::shared_ptr<const QTable> table, const InputBox& box)
      : table_(std::move(table)), box_(box) {}
  [[nodiscard]] std::string name() const override { return "rl"; }
  double command(std::size_t, const State& x, double, double) override {
    const std::int64_t cell = table_->grid.cell_index(x);
    auto it = nearest_.find(cell);
    if (it == nearest_.end()) it = nearest_.emplace(cell, table_->nearest_visited(cell)).first;
    return box_.clamp(table_->cells.at(it->second).best_action());
  }

 private:
  std::shared_ptr<const QTable> table_;
  InputBox box_;
  std::unordered_map<std::int64_t, std::int64_t> nearest_;
};

class MpcRlController final : public Controller {
 public:
  explicit MpcRlController(std::unique_ptr<SafetyFilter> filter) : filter_(std::move(filter)) {}
  [[nodiscard]] std::string name() const override { return "mpcrl"; }
  double command(std::size_t k, const State& x, double u_prev, double rate) override {
    last_ = filter_->step(k, x, u_prev, rate);
    return last_.u;
  }
  [[nodiscard]] const FilterDecision* last_decision() const override { return &last_; }

 private:
  std::unique_ptr<SafetyFilter> filter_;
  FilterDecision last_;
};

}  // namespace

std::unique_ptr<Controller> make_zero_controller() { return std::make_unique<ZeroController>(); }

std::unique_ptr<Controller> make_lpv_controller(const Plant& plant, const MpcConfig& cfg) {
  return std::make_unique<LpvController>(plant, cfg);
}

std::unique_ptr<Controller> make_rl_controller(std::shared_ptr<const QTable> table,
                                               const InputBox& box) {
  return std::make_unique<RlController>(std::move(table), box);
}

std::unique_ptr<Controller> make_mpcrl_controller(std::unique_ptr<SafetyFilter> filter) {
  return std::make_unique<MpcRlController>(std::move(filter));
}

}  // namespace mpcrl
