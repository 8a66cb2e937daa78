#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mpcrl/filter.hpp"
#include "mpcrl/gust.hpp"
#include "mpcrl/mpc.hpp"
#include "mpcrl/plant.hpp"
#include "mpcrl/qlearn.hpp"

namespace mpcrl {

struct EpisodeConfig {
  double duration = 10.0;          // s
  double gust_phase = 5.0;         // s of turbulence, then recovery
  double rate_limit = 0.05;        // max commanded change per step (rad)
  double settle_band = 0.05;       // fraction of the admissible half-width
  double excursion_fraction = 0.2; // of the open-loop peak response

  void validate(double sample_time) const;
  [[nodiscard]] std::size_t steps(double sample_time) const;
  [[nodiscard]] std::size_t gust_steps(double sample_time) const;
};

struct EpisodeMetrics {
  double max_overshoot_h = 0.0;  // m
  double settle_h = 0.0;         // s after the gust phase
  double max_alpha_eff = 0.0;    // deg
  double settle_alpha = 0.0;     // s after the gust phase
  double rms_vh_full = 0.0;
  double rms_vh_post = 0.0;
  double rms_vtheta_full = 0.0;
  double rms_vtheta_post = 0.0;
  int excursions_h = 0;
  int excursions_alpha = 0;
  double median_du_pct = 0.0;
  int fallback_count = 0;
  int violation_count = 0;  // steps with the state outside the admissible box
  // Filter bookkeeping (zero for controllers without a filter).
  int certified_steps = 0;
  int bound_violations = 0;  // certified steps whose successor broke the deviation bound
  int envelope_exits = 0;
  int infeasible_steps = 0;  // receding-horizon solves that failed
  bool aborted = false;

  static const std::vector<std::string>& column_names();
  [[nodiscard]] std::vector<double> values() const;
};

// Peak open-loop response used for the excursion thresholds.
struct OpenLoopPeak {
  double h = 0.0;
  double alpha = 0.0;  // rad
};

class Controller {
 public:
  virtual ~Controller() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  // Commanded input at step k; u_prev is the input applied at k-1.
  virtual double command(std::size_t k, const State& x, double u_prev, double rate) = 0;
  // Filter decision behind the most recent command, if the controller has one.
  [[nodiscard]] virtual const FilterDecision* last_decision() const { return nullptr; }
  [[nodiscard]] virtual int infeasible_count() const { return 0; }
};

struct RunSpec {
  int run = 0;
  std::uint64_t seed = 0;
  State x0 = State::Zero();
  GustProfile gust;  // padded with zeros to the episode length
};

using ControllerFactory = std::function<std::unique_ptr<Controller>(const RunSpec&)>;

struct NamedController {
  std::string name;
  ControllerFactory make;
};

struct EpisodeResult {
  EpisodeMetrics metrics;
  TimeSeries series;
  std::vector<FilterDecision> decisions;
};

struct HarnessContext {
  const Plant* plant = nullptr;
  StateBox admissible;
  InputBox input_box;
  EpisodeConfig episode;
};

// Metrics of a recorded trajectory. `gust_end` is the first step after the turbulence phase.
EpisodeMetrics compute_metrics(const Plant& plant, const TimeSeries& ts, std::size_t gust_end,
                               const StateBox& admissible, const EpisodeConfig& cfg,
                               const OpenLoopPeak& peak);

// First time (s, relative to step `from`) after which |signal| stays within `band`.
double settling_time(std::span<const double> signal, std::size_t from, double band,
                     double sample_time);
int count_excursions(std::span<const double> signal, double threshold);
double median_du_pct(std::span<const double> u, double rate_limit);

OpenLoopPeak open_loop_peak(const HarnessContext& ctx, const RunSpec& run);

// Closed loop with the harness rate limit applied to every command.
EpisodeResult run_episode(const HarnessContext& ctx, Controller& controller, const RunSpec& run,
                          const OpenLoopPeak& peak);

// Seeded run: gust over the turbulence phase and an initial state uniform over the inner
// `init_fraction` of the admissible box.
RunSpec make_run(int run, std::uint64_t seed0, const HarnessContext& ctx, const GustConfig& gust,
                 double init_fraction);

struct CampaignConfig {
  int runs = 100;
  std::uint64_t seed = 1;
  int jobs = 1;
  double init_fraction = 0.5;
  int keep_series = 0;  // time series retained for the first keep_series runs
};

struct CampaignResult {
  std::vector<std::string> controllers;
  std::vector<std::vector<EpisodeMetrics>> runs;            // [controller][run]
  std::vector<std::vector<EpisodeResult>> kept;             // [controller][run < keep_series]
  std::vector<RunSpec> specs;

  [[nodiscard]] EpisodeMetrics mean(std::size_t controller) const;
};

// Every controller sees the same gust and initial state in each run.
CampaignResult monte_carlo(const HarnessContext& ctx, const std::vector<NamedController>& controllers,
                           const GustConfig& gust, const CampaignConfig& cfg);

void write_metrics_summary_csv(std::ostream& os, const CampaignResult& r);
void write_metrics_runs_csv(std::ostream& os, const CampaignResult& r);

// Baseline controllers.
std::unique_ptr<Controller> make_zero_controller();
// Receding-horizon MPC on the re-scheduled model with no gust preview; holds the previous input
// when a solve fails.
std::unique_ptr<Controller> make_lpv_controller(const Plant& plant, const MpcConfig& cfg);
// Greedy lookup in a table trained over the whole actuator box; unvisited cells use the nearest
// visited cell.
std::unique_ptr<Controller> make_rl_controller(std::shared_ptr<const QTable> table,
                                               const InputBox& box);
std::unique_ptr<Controller> make_mpcrl_controller(std::unique_ptr<SafetyFilter> filter);

}  // namespace mpcrl
