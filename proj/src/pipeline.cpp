#include "mpcrl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "mpcrl/io.hpp"
#include "mpcrl/parallel.hpp"

namespace mpcrl {

namespace fs = std::filesystem;

nlohmann::json PairRecord::to_json() const {
  nlohmann::json j = bounds.to_json();
  j["pair_id"] = pair_id;
  j["state_id"] = state_id;
  j["realization"] = realization;
  j["x0"] = state_to_json(x0);
  j["gust_seed"] = gust_seed;
  return j;
}

double pair_gust_duration(const RunConfig& cfg) {
  const int steps = std::max(cfg.mpc.horizon * cfg.mpc.substeps, cfg.reward.rollout);
  return steps * cfg.plant.sample_time;
}

namespace {

std::vector<GustProfile> ensemble_at(const RunConfig& cfg, const State& x, std::uint64_t seed) {
  return training_ensemble(x, static_cast<std::size_t>(cfg.training.realizations), cfg.gust,
                           pair_gust_duration(cfg), cfg.plant.airspeed, cfg.plant.sample_time,
                           seed);
}

std::vector<double> action_grid(double lo, double hi, int n) {
  if (hi - lo <= 0.0 || n == 1) return {0.5 * (lo + hi)};
  std::vector<double> a(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return a;
}

LipschitzProbe probe_of(const RunConfig& cfg) {
  LipschitzProbe p;
  p.h_u = cfg.filter.h_u;
  p.h_x = cfg.filter.h_x;
  p.probe_scale = cfg.state_box.half_width();
  p.w_max = cfg.gust.w_max;
  return p;
}

}  // namespace

std::optional<Transition> make_transition(const Plant& plant, const RunConfig& cfg, const State& x,
                                          double u, std::span<const GustProfile> ensemble) {
  const StateBox& box = cfg.state_box;
  Transition t;
  t.x_bar = x;
  t.u_bar = u;
  try {
    t.x_plus = plant.step_euler(x, u, 0.0);
    State margin = (t.x_plus - box.lo).cwiseMin(box.hi - t.x_plus);
    for (const GustProfile& g : ensemble) {
      const double w = g.samples.empty() ? 0.0 : g.samples.front();
      const State xp = plant.step_euler(x, u, w);
      margin = margin.cwiseMin((xp - box.lo).cwiseMin(box.hi - xp));
    }
    if (!margin.allFinite() || (margin.array() <= 0.0).any()) return std::nullopt;
    t.margin_bar = margin;
  } catch (const DomainError&) {
    return std::nullopt;
  }
  if (!ensemble.empty()) t.gust_seed = ensemble.front().seed;
  return t;
}

TrainingArtifacts run_training(const Plant& plant, const RunConfig& cfg, int jobs) {
  TrainingArtifacts a;
  const StateBox envelope = cfg.state_box.scaled(cfg.training.envelope);
  a.states = sample_initial_states(envelope, cfg.training.samples_per_dim);
  const auto n_states = a.states.size();
  const auto n_real = static_cast<std::size_t>(cfg.training.realizations);

  a.ensembles.resize(n_states);
  for (std::size_t s = 0; s < n_states; ++s) a.ensembles[s] = ensemble_at(cfg, a.states[s], cfg.seed);

  a.pairs.resize(n_states * n_real);
  parallel_for(a.pairs.size(), jobs, [&](std::size_t i) {
    const std::size_t s = i / n_real;
    const std::size_t r = i % n_real;
    PairRecord& p = a.pairs[i];
    p.pair_id = static_cast<int>(i);
    p.state_id = static_cast<int>(s);
    p.realization = static_cast<int>(r);
    p.x0 = a.states[s];
    p.gust_seed = a.ensembles[s][r].seed;
    p.bounds = safe_bounds(plant, p.x0, a.ensembles[s][r], cfg.mpc, cfg.bounds);
  });

  std::vector<TrainingPair> certified;
  std::vector<TrainingPair> unrestricted;
  for (const PairRecord& p : a.pairs) {
    const GustProfile* g = &a.ensembles[static_cast<std::size_t>(p.state_id)]
                                       [static_cast<std::size_t>(p.realization)];
    unrestricted.push_back({p.pair_id, p.state_id, p.x0, g, cfg.input_box.lo, cfg.input_box.hi});
    if (!p.bounds.feasible) {
      ++a.infeasible_pairs;
      continue;
    }
    if (!p.bounds.verified) {
      ++a.certification_failures;
      continue;
    }
    certified.push_back({p.pair_id, p.state_id, p.x0, g, p.bounds.u_min, p.bounds.u_max});
  }

  const StateGrid grid = cfg.grid();
  a.mpcrl = train(plant, certified, grid, cfg.reward, cfg.training.q, cfg.state_box, jobs);
  a.rl = train(plant, unrestricted, grid, cfg.reward, cfg.training.q, cfg.state_box, jobs);

  // A state contributes a transition only when every one of its realizations was certified, so the
  // cell action lies inside all of its bounds.
  std::vector<int> verified_count(n_states, 0);
  for (const PairRecord& p : a.pairs) {
    if (p.bounds.verified) ++verified_count[static_cast<std::size_t>(p.state_id)];
  }
  std::vector<std::optional<Transition>> built(n_states);
  parallel_for(n_states, jobs, [&](std::size_t s) {
    if (verified_count[s] != static_cast<int>(n_real)) return;
    const auto u = policy(a.mpcrl.table, a.states[s]);
    if (!u) return;
    built[s] = make_transition(plant, cfg, a.states[s], *u, a.ensembles[s]);
    if (built[s]) built[s]->pair_id = static_cast<int>(s);
  });
  for (auto& t : built) {
    if (t) a.transitions.push_back(std::move(*t));
  }
  attach_sensitivities(plant, cfg, a.transitions);
  return a;
}

std::optional<Transition> local_transition(const Plant& plant, const RunConfig& cfg,
                                           const State& x, std::uint64_t seed) {
  if (!cfg.state_box.contains(x)) return std::nullopt;
  const std::vector<GustProfile> ensemble = ensemble_at(cfg, x, seed);
  double lo = cfg.input_box.lo;
  double hi = cfg.input_box.hi;
  for (const GustProfile& g : ensemble) {
    const SafeBounds b = safe_bounds(plant, x, g, cfg.mpc, cfg.bounds);
    if (!b.verified) return std::nullopt;
    lo = std::max(lo, b.u_min);
    hi = std::min(hi, b.u_max);
  }
  if (lo > hi) return std::nullopt;

  QCell cell;
  cell.actions = action_grid(lo, hi, cfg.training.q.n_actions);
  for (double u : cell.actions) {
    double sum = 0.0;
    for (const GustProfile& g : ensemble) {
      sum += evaluate_action(plant, x, g.samples, u, cfg.reward, cfg.state_box).reward;
    }
    cell.values.push_back(sum / static_cast<double>(ensemble.size()));
    cell.visits.push_back(static_cast<int>(ensemble.size()));
  }
  if (!std::isfinite(cell.best_value())) return std::nullopt;
  auto t = make_transition(plant, cfg, x, cell.best_action(), ensemble);
  if (t) {
    t->gust_seed = seed;
    t->pair_id = -1;
  }
  return t;
}

LocalTrainer make_local_trainer(const Plant& plant, const RunConfig& cfg, std::uint64_t run_seed) {
  return [&plant, &cfg, run_seed](const State& x, std::size_t k) {
    return local_transition(plant, cfg, x, mix64(run_seed ^ mix64(k + 1)));
  };
}

void attach_sensitivities(const Plant& plant, const RunConfig& cfg, std::vector<Transition>& ts) {
  const LipschitzProbe probe = probe_of(cfg);
  for (Transition& t : ts) t.sens = wing_sensitivity(plant, t.x_bar, t.u_bar, probe);
}

std::vector<NamedController> campaign_controllers(const Plant& plant, const RunConfig& cfg,
                                                  std::shared_ptr<const QTable> rl_table,
                                                  std::shared_ptr<const TransitionDb> db) {
  std::vector<NamedController> out;
  out.push_back({"lpv", [&plant, &cfg](const RunSpec&) {
                   return make_lpv_controller(plant, cfg.mpc);
                 }});
  out.push_back({"rl", [rl_table, &cfg](const RunSpec&) {
                   return make_rl_controller(rl_table, cfg.input_box);
                 }});
  out.push_back({"mpcrl", [&plant, &cfg, db](const RunSpec& run) {
                   LocalTrainer trainer;
                   if (cfg.filter.local_retraining) trainer = make_local_trainer(plant, cfg, run.seed);
                   auto filter = std::make_unique<SafetyFilter>(plant, *db, cfg.filter,
                                                                cfg.input_box, cfg.gust.w_max,
                                                                cfg.r_max(), std::move(trainer));
                   return make_mpcrl_controller(std::move(filter));
                 }});
  return out;
}

HarnessContext harness_context(const Plant& plant, const RunConfig& cfg) {
  return {&plant, cfg.state_box, cfg.input_box, cfg.eval.episode};
}

CampaignConfig campaign_config(const RunConfig& cfg) {
  CampaignConfig c;
  c.runs = cfg.eval.runs;
  c.seed = cfg.seed;
  c.jobs = cfg.jobs;
  c.init_fraction = cfg.eval.init_fraction;
  c.keep_series = cfg.eval.keep_series;
  return c;
}

namespace {

std::string hash_line(const std::string& h) { return "# config_hash=" + h + "\n"; }

void write_with_header(const fs::path& path, const std::string& hash, const std::string& body) {
  write_text_file(path.string(), hash_line(hash) + body);
}

// Drops '#' comment lines so the payload can go to the plain readers.
std::string strip_comments(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '#') continue;
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace

void write_training_outputs(const std::string& dir, const TrainingArtifacts& a,
                            const std::string& config_hash) {
  const fs::path root(dir);
  fs::create_directories(root);

  std::string bounds;
  for (const PairRecord& p : a.pairs) bounds += p.to_json().dump() + "\n";
  write_with_header(root / "bounds.jsonl", config_hash, bounds);

  std::ostringstream tr;
  TransitionDb(a.transitions, State::Ones()).write_jsonl(tr);
  write_with_header(root / "transitions.jsonl", config_hash, tr.str());

  auto write_table = [&](const char* name, const TrainResult& r) {
    nlohmann::json j = r.table.to_json();
    j["config_hash"] = config_hash;
    write_text_file((root / name).string(), j.dump(1) + "\n");
  };
  write_table("qtable.json", a.mpcrl);
  write_table("qtable_rl.json", a.rl);

  std::ostringstream log;
  write_train_log_csv(log, a.mpcrl);
  write_with_header(root / "train_log.csv", config_hash, log.str());

  nlohmann::json summary = {
      {"config_hash", config_hash},
      {"states", a.states.size()},
      {"pairs", a.pairs.size()},
      {"infeasible_pairs", a.infeasible_pairs},
      {"certification_failures", a.certification_failures},
      {"mpcrl_cells", a.mpcrl.table.cells.size()},
      {"mpcrl_sweeps", a.mpcrl.table.sweep_changes.size()},
      {"mpcrl_rollout_violations", a.mpcrl.violations},
      {"rl_cells", a.rl.table.cells.size()},
      {"rl_rollout_violations", a.rl.violations},
      {"transitions", a.transitions.size()},
  };
  write_text_file((root / "train_summary.json").string(), summary.dump(1) + "\n");
}

QTable load_qtable(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("missing Q-table " + path + " (run train first)");
  try {
    return QTable::from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed Q-table " + path + ": " + e.what());
  }
}

std::vector<Transition> load_transitions(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("missing transitions " + path + " (run train first)");
  std::istringstream in(strip_comments(read_text_file(path)));
  try {
    const TransitionDb db = TransitionDb::read_jsonl(in, State::Ones());
    std::vector<Transition> out;
    out.reserve(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) out.push_back(db.at(i));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed transitions " + path + ": " + e.what());
  }
}

void write_campaign_outputs(const std::string& dir, const CampaignResult& r, const Plant& plant,
                            const std::string& config_hash) {
  const fs::path root(dir);
  fs::create_directories(root / "timeseries");

  std::ostringstream summary;
  write_metrics_summary_csv(summary, r);
  write_with_header(root / "metrics_summary.csv", config_hash, summary.str());

  std::ostringstream runs;
  write_metrics_runs_csv(runs, r);
  write_with_header(root / "metrics_runs.csv", config_hash, runs.str());

  for (std::size_t c = 0; c < r.controllers.size(); ++c) {
    for (std::size_t i = 0; i < r.kept[c].size(); ++i) {
      const EpisodeResult& e = r.kept[c][i];
      const std::string stem = r.controllers[c] + "_run" + std::to_string(i);
      std::ostringstream ts;
      write_timeseries_csv(ts, e.series, plant.params().sample_time);
      write_with_header(root / "timeseries" / (stem + ".csv"), config_hash, ts.str());
      if (!e.decisions.empty()) {
        std::ostringstream fl;
        write_filter_log_csv(fl, e.decisions);
        write_with_header(root / "timeseries" / (stem + "_filter.csv"), config_hash, fl.str());
      }
    }
  }
}

}  // namespace mpcrl
