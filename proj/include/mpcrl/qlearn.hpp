#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mpcrl/gust.hpp"
#include "mpcrl/plant.hpp"

namespace mpcrl {

// Uniform bins over a state box; cells are numbered row-major with plunge slowest.
struct StateGrid {
  StateBox box;
  std::array<int, kStateDim> bins{7, 7, 7, 7, 7};

  [[nodiscard]] std::int64_t cell_count() const;
  // Out-of-box states are clamped into the boundary cells.
  [[nodiscard]] std::int64_t cell_index(const State& x) const;
  [[nodiscard]] std::array<int, kStateDim> cell_coords(std::int64_t cell) const;
  [[nodiscard]] State cell_center(std::int64_t cell) const;
  // Half of the cell diagonal measured in units of the box half-widths, over the dimensions that
  // have more than one bin.
  [[nodiscard]] double normalized_half_diagonal() const;

  void validate() const;
};

// Tensor-product grid over (h, theta, v_h, v_theta) with beta_f = 0, plunge varying slowest.
std::vector<State> sample_initial_states(const StateBox& box, int n_per_dim);

struct RewardConfig {
  State q = State::Ones();  // diagonal state weight
  double r = 0.1;           // input weight
  int rollout = 200;        // steps

  void validate() const;
};

// Normalised defaults: Q_r = diag(1/c_i^2), R_r = r_scale / c_u^2.
RewardConfig normalized_reward(const StateBox& x_box, const InputBox& u_box, double r_scale,
                               int rollout);

struct ActionOutcome {
  double reward = 0.0;  // -inf when the rollout left the admissible box
  State x_end = State::Zero();
  bool violated = false;
};

// Holds commanded u for `rollout` steps with the gust applied, accumulating -(x'Qx + R u^2).
ActionOutcome evaluate_action(const Plant& plant, const State& x0, std::span<const double> gust,
                              double u, const RewardConfig& reward, const StateBox& admissible);

struct QCell {
  std::vector<double> actions;
  std::vector<double> values;
  std::vector<int> visits;

  // Greedy index; ties go to the smallest |u|, then to the lower index.
  [[nodiscard]] std::size_t best_index() const;
  [[nodiscard]] double best_action() const { return actions[best_index()]; }
  [[nodiscard]] double best_value() const { return values[best_index()]; }
};

struct QTable {
  StateGrid grid;
  double gamma = 0.0;
  std::map<std::int64_t, QCell> cells;
  std::vector<double> sweep_changes;  // max |dQ| per sweep

  [[nodiscard]] const QCell* find(std::int64_t cell) const;
  // Visited cell whose centre is nearest to the centre of `cell` in normalised units.
  [[nodiscard]] std::int64_t nearest_visited(std::int64_t cell) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static QTable from_json(const nlohmann::json& j);
};

struct QLearnConfig {
  int n_actions = 15;
  double gamma = 0.5;
  int max_sweeps = 1000;
  double tolerance = 1e-9;

  void validate() const;
};

// One (initial state, gust realization) micro-environment. `u_lo..u_hi` is the certified input
// interval; pairs without one must not be passed to train().
struct TrainingPair {
  int id = 0;
  int state_id = 0;
  State x0 = State::Zero();
  const GustProfile* gust = nullptr;
  double u_lo = 0.0;
  double u_hi = 0.0;
};

struct PairEvaluation {
  int pair_id = 0;
  std::int64_t cell = 0;
  std::vector<double> actions;
  std::vector<ActionOutcome> outcomes;
};

struct TrainResult {
  QTable table;
  std::vector<PairEvaluation> evaluations;
  int violations = 0;  // evaluated actions whose rollout left the admissible box
};

// Pairs sharing a cell are evaluated on one action grid spanning the intersection of their
// intervals, so every action written for that cell is inside the bounds of each pair. Values are
// the mean over the cell's pairs of reward + gamma * V(cell of the rollout end state), swept
// until the largest change drops below the tolerance. The end state maps to the nearest cell that
// has an action safe for all of its pairs. Cells whose intervals do not intersect are skipped.
// `jobs` threads evaluate actions.
TrainResult train(const Plant& plant, std::span<const TrainingPair> pairs, const StateGrid& grid,
                  const RewardConfig& reward, const QLearnConfig& cfg, const StateBox& admissible,
                  int jobs = 1);

// Greedy action of the cell containing x; nullopt for an unvisited cell.
std::optional<double> policy(const QTable& table, const State& x);

// Greedy action of the cell containing x, or of the nearest visited cell.
double policy_nearest(const QTable& table, const State& x);

void write_train_log_csv(std::ostream& os, const TrainResult& result);

}  // namespace mpcrl
