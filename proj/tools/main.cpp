#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mpcrl/io.hpp"
#include "mpcrl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mpcrl;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kConfigError = 2;

struct Common {
  std::string config = "config/default.toml";
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (TOML)");
  cmd->add_option("--seed", c.seed, "override the base seed");
  cmd->add_option("--jobs", c.jobs, "worker threads");
  cmd->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.jobs = *c.jobs;
  if (c.out) cfg.out_dir = *c.out;
  cfg.validate();
  return cfg;
}

int cmd_train(const Common& c) {
  const RunConfig cfg = resolve(c);
  const Plant plant = make_plant(cfg);
  const std::string hash = cfg.hash();
  const TrainingArtifacts a = run_training(plant, cfg, cfg.jobs);
  write_training_outputs(cfg.out_dir, a, hash);
  std::cout << "config_hash " << hash << "\n"
            << "pairs " << a.pairs.size() << "  infeasible " << a.infeasible_pairs
            << "  certification_failures " << a.certification_failures << "\n"
            << "mpcrl cells " << a.mpcrl.table.cells.size() << "  rl cells "
            << a.rl.table.cells.size() << "  transitions " << a.transitions.size() << "\n"
            << "wrote " << cfg.out_dir << "\n";
  return a.certification_failures == 0 ? kOk : kFailed;
}

struct Deployment {
  std::shared_ptr<const QTable> rl;
  std::shared_ptr<const TransitionDb> db;
};

Deployment load_deployment(const Plant& plant, const RunConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  Deployment d;
  d.rl = std::make_shared<const QTable>(load_qtable((dir / "qtable_rl.json").string()));
  load_qtable((dir / "qtable.json").string());
  std::vector<Transition> ts = load_transitions((dir / "transitions.jsonl").string());
  attach_sensitivities(plant, cfg, ts);
  d.db = std::make_shared<const TransitionDb>(std::move(ts), cfg.state_box.half_width());
  return d;
}

struct OrderingCheck {
  bool overshoot_vs_lpv = false;
  bool overshoot_vs_rl = false;
  bool rl_du = false;
  bool mpcrl_du = false;
  bool zero_violations = false;
  bool sound = false;

  [[nodiscard]] bool pass() const {
    return overshoot_vs_lpv && overshoot_vs_rl && rl_du && mpcrl_du && zero_violations && sound;
  }
};

OrderingCheck check_ordering(const CampaignResult& r) {
  auto idx = [&](const std::string& name) {
    for (std::size_t i = 0; i < r.controllers.size(); ++i) {
      if (r.controllers[i] == name) return i;
    }
    throw std::runtime_error("controller missing from campaign: " + name);
  };
  const EpisodeMetrics lpv = r.mean(idx("lpv"));
  const EpisodeMetrics rl = r.mean(idx("rl"));
  const EpisodeMetrics mr = r.mean(idx("mpcrl"));
  OrderingCheck o;
  o.overshoot_vs_lpv = mr.max_overshoot_h <= lpv.max_overshoot_h;
  o.overshoot_vs_rl = mr.max_overshoot_h <= rl.max_overshoot_h;
  o.rl_du = rl.median_du_pct >= 90.0;
  o.mpcrl_du = mr.median_du_pct <= 20.0;
  o.zero_violations = mr.violation_count == 0;
  o.sound = mr.bound_violations == 0;
  return o;
}

int cmd_evaluate(const Common& c, bool assert_ordering) {
  const RunConfig cfg = resolve(c);
  const Plant plant = make_plant(cfg);
  const std::string hash = cfg.hash();
  const Deployment d = load_deployment(plant, cfg);
  const auto controllers = campaign_controllers(plant, cfg, d.rl, d.db);
  const CampaignResult r =
      monte_carlo(harness_context(plant, cfg), controllers, cfg.gust, campaign_config(cfg));
  write_campaign_outputs(cfg.out_dir, r, plant, hash);

  std::cout << "config_hash " << hash << "\n";
  write_metrics_summary_csv(std::cout, r);
  if (!assert_ordering) return kOk;
  const OrderingCheck o = check_ordering(r);
  std::cout << "ordering overshoot<=lpv " << o.overshoot_vs_lpv << " overshoot<=rl "
            << o.overshoot_vs_rl << " rl_du>=90 " << o.rl_du << " mpcrl_du<=20 " << o.mpcrl_du
            << " zero_violations " << o.zero_violations << " sound " << o.sound << "\n";
  return o.pass() ? kOk : kFailed;
}

int cmd_validate_model(const Common& c) {
  const RunConfig cfg = resolve(c);
  const Plant plant = make_plant(cfg);
  const ModelValidation v =
      validate_model(plant, cfg.state_box, cfg.input_box, cfg.gust.w_max, cfg.validation, cfg.seed);
  nlohmann::json j = v.to_json(cfg.validation);
  j["config_hash"] = cfg.hash();
  fs::create_directories(cfg.out_dir);
  write_text_file((fs::path(cfg.out_dir) / "validation.json").string(), j.dump(1) + "\n");
  std::cout << j.dump(1) << "\n";
  return v.pass() ? kOk : kFailed;
}

int cmd_replay(const Common& c, int run, const std::string& controller) {
  const RunConfig cfg = resolve(c);
  if (run < 0 || run >= cfg.eval.runs) {
    throw ConfigError("unknown run id " + std::to_string(run) + " (campaign has " +
                      std::to_string(cfg.eval.runs) + " runs)");
  }
  const Plant plant = make_plant(cfg);
  const std::string hash = cfg.hash();
  const HarnessContext ctx = harness_context(plant, cfg);
  const RunSpec spec = make_run(run, cfg.seed, ctx, cfg.gust, cfg.eval.init_fraction);

  std::unique_ptr<Controller> ctrl;
  if (controller == "open_loop") {
    ctrl = make_zero_controller();
  } else {
    const Deployment d = load_deployment(plant, cfg);
    for (const NamedController& nc : campaign_controllers(plant, cfg, d.rl, d.db)) {
      if (nc.name == controller) ctrl = nc.make(spec);
    }
  }
  if (!ctrl) throw ConfigError("unknown controller " + controller);

  const EpisodeResult e = run_episode(ctx, *ctrl, spec, open_loop_peak(ctx, spec));
  const fs::path dir = fs::path(cfg.out_dir) / "replay";
  fs::create_directories(dir);
  const std::string stem = controller + "_run" + std::to_string(run);
  std::ostringstream ts;
  ts << "# config_hash=" << hash << "\n";
  write_timeseries_csv(ts, e.series, plant.sample_time());
  write_text_file((dir / (stem + ".csv")).string(), ts.str());
  std::ostringstream gust;
  gust << "# config_hash=" << hash << "\n";
  write_gust_csv(gust, spec.gust);
  write_text_file((dir / (stem + "_gust.csv")).string(), gust.str());
  if (!e.decisions.empty()) {
    std::ostringstream fl;
    fl << "# config_hash=" << hash << "\n";
    write_filter_log_csv(fl, e.decisions);
    write_text_file((dir / (stem + "_filter.csv")).string(), fl.str());
  }
  std::cout << "config_hash " << hash << "\nrun " << run << " controller " << controller
            << " steps " << e.series.steps() << " violations " << e.metrics.violation_count
            << " fallbacks " << e.metrics.fallback_count << "\nwrote " << dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe MPC-guided Q-learning with a Lipschitz safety filter for an aeroelastic wing"};
  app.require_subcommand(1);

  Common train_opts;
  auto* train = app.add_subcommand("train", "compute certified bounds, Q-tables and transitions");
  add_common(train, train_opts);

  Common eval_opts;
  bool assert_ordering = false;
  auto* evaluate = app.add_subcommand("evaluate", "paired Monte Carlo campaign of the controllers");
  add_common(evaluate, eval_opts);
  evaluate->add_flag("--assert-ordering", assert_ordering,
                     "exit 1 unless the expected controller ordering holds");

  Common val_opts;
  auto* validate = app.add_subcommand("validate-model", "Taylor and LPV model checks");
  add_common(validate, val_opts);

  Common replay_opts;
  int run = 0;
  std::string controller = "mpcrl";
  auto* replay = app.add_subcommand("replay", "re-run one campaign episode and log it");
  add_common(replay, replay_opts);
  replay->add_option("--run", run, "campaign run id")->required();
  replay->add_option("--controller", controller, "open_loop, lpv, rl or mpcrl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(train_opts);
    if (*evaluate) return cmd_evaluate(eval_opts, assert_ordering);
    if (*validate) return cmd_validate_model(val_opts);
    if (*replay) return cmd_replay(replay_opts, run, controller);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kConfigError;
}
