#include "mpcrl/qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mpcrl/io.hpp"
#include "mpcrl/parallel.hpp"

namespace mpcrl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

std::int64_t StateGrid::cell_count() const {
  std::int64_t n = 1;
  for (int b : bins) n *= b;
  return n;
}

std::int64_t StateGrid::cell_index(const State& x) const {
  std::int64_t idx = 0;
  for (int i = 0; i < kStateDim; ++i) {
    const double frac = (x[i] - box.lo[i]) / (box.hi[i] - box.lo[i]);
    int c = static_cast<int>(std::floor(frac * bins[static_cast<std::size_t>(i)]));
    c = std::clamp(c, 0, bins[static_cast<std::size_t>(i)] - 1);
    idx = idx * bins[static_cast<std::size_t>(i)] + c;
  }
  return idx;
}

std::array<int, kStateDim> StateGrid::cell_coords(std::int64_t cell) const {
  std::array<int, kStateDim> c{};
  for (int i = kStateDim - 1; i >= 0; --i) {
    const auto b = static_cast<std::int64_t>(bins[static_cast<std::size_t>(i)]);
    c[static_cast<std::size_t>(i)] = static_cast<int>(cell % b);
    cell /= b;
  }
  return c;
}

State StateGrid::cell_center(std::int64_t cell) const {
  const auto c = cell_coords(cell);
  State x;
  for (int i = 0; i < kStateDim; ++i) {
    const double w = (box.hi[i] - box.lo[i]) / bins[static_cast<std::size_t>(i)];
    x[i] = box.lo[i] + (c[static_cast<std::size_t>(i)] + 0.5) * w;
  }
  return x;
}

double StateGrid::normalized_half_diagonal() const {
  double s = 0.0;
  for (int i = 0; i < kStateDim; ++i) {
    const int n = bins[static_cast<std::size_t>(i)];
    if (n == 1) continue;
    const double w = 2.0 / n;
    s += w * w;
  }
  return 0.5 * std::sqrt(s);
}

void StateGrid::validate() const {
  box.validate();
  for (int b : bins) {
    if (b < 1) throw ConfigError("grid needs at least one bin per dimension");
  }
}

std::vector<State> sample_initial_states(const StateBox& box, int n_per_dim) {
  if (n_per_dim < 2) throw ConfigError("sample_initial_states needs n_per_dim >= 2");
  std::vector<State> out;
  const int n = n_per_dim;
  out.reserve(static_cast<std::size_t>(n * n * n * n));
  auto level = [&](int dim, int j) {
    return box.lo[dim] + (box.hi[dim] - box.lo[dim]) * static_cast<double>(j) / (n - 1);
  };
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          State x;
          x << level(kPlunge, a), level(kPitch, b), level(kPlungeRate, c), level(kPitchRate, d),
              0.0;
          out.push_back(x);
        }
  return out;
}

void RewardConfig::validate() const {
  if (!q.allFinite() || (q.array() < 0.0).any()) throw ConfigError("reward q must be >= 0");
  if (!(r >= 0.0)) throw ConfigError("reward r must be >= 0");
  if (rollout < 1) throw ConfigError("reward rollout must be >= 1 step");
}

RewardConfig normalized_reward(const StateBox& x_box, const InputBox& u_box, double r_scale,
                               int rollout) {
  RewardConfig rc;
  rc.q = x_box.half_width().array().square().inverse();
  const double cu = u_box.half_width();
  rc.r = r_scale / (cu * cu);
  rc.rollout = rollout;
  return rc;
}

ActionOutcome evaluate_action(const Plant& plant, const State& x0, std::span<const double> gust,
                              double u, const RewardConfig& reward, const StateBox& admissible) {
  ActionOutcome out;
  State x = x0;
  double total = 0.0;
  for (int k = 0; k < reward.rollout; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const double w = idx < gust.size() ? gust[idx] : 0.0;
    x = plant.step_euler(x, u, w);
    if (!x.allFinite() || !admissible.contains(x)) {
      out.violated = true;
      out.reward = kNegInf;
      out.x_end = x;
      return out;
    }
    total -= x.dot(reward.q.cwiseProduct(x)) + reward.r * u * u;
  }
  out.reward = total;
  out.x_end = x;
  return out;
}

std::size_t QCell::best_index() const {
  std::size_t best = 0;
  for (std::size_t a = 1; a < values.size(); ++a) {
    if (values[a] > values[best] ||
        (values[a] == values[best] && std::abs(actions[a]) < std::abs(actions[best]))) {
      best = a;
    }
  }
  return best;
}

const QCell* QTable::find(std::int64_t cell) const {
  const auto it = cells.find(cell);
  return it == cells.end() ? nullptr : &it->second;
}

std::int64_t QTable::nearest_visited(std::int64_t cell) const {
  if (cells.empty()) throw DomainError("q-table has no visited cells");
  if (cells.count(cell) != 0) return cell;
  const State inv = grid.box.half_width().cwiseInverse();
  const State c = grid.cell_center(cell);
  std::int64_t best = cells.begin()->first;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& [id, qc] : cells) {
    const double d = (grid.cell_center(id) - c).cwiseProduct(inv).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  return best;
}

namespace {

// Non-finite entries (unreachable values) are stored as null.
nlohmann::json nullable(std::span<const double> v) {
  nlohmann::json out = nlohmann::json::array();
  for (double x : v) {
    if (std::isfinite(x)) out.push_back(x);
    else out.push_back(nullptr);
  }
  return out;
}

std::vector<double> from_nullable(const nlohmann::json& j, double null_value) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.is_null() ? null_value : v.get<double>());
  return out;
}

}  // namespace

nlohmann::json QTable::to_json() const {
  nlohmann::json j;
  j["gamma"] = gamma;
  j["grid"]["lo"] = state_to_json(grid.box.lo);
  j["grid"]["hi"] = state_to_json(grid.box.hi);
  j["grid"]["bins"] = grid.bins;
  j["sweep_changes"] = nullable(sweep_changes);
  j["cells"] = nlohmann::json::array();
  for (const auto& [id, qc] : cells) {
    nlohmann::json c;
    c["cell"] = id;
    c["actions"] = qc.actions;
    c["values"] = nullable(qc.values);
    c["visits"] = qc.visits;
    j["cells"].push_back(c);
  }
  return j;
}

QTable QTable::from_json(const nlohmann::json& j) {
  QTable t;
  t.gamma = j.at("gamma").get<double>();
  t.grid.box.lo = state_from_json(j.at("grid").at("lo"));
  t.grid.box.hi = state_from_json(j.at("grid").at("hi"));
  t.grid.bins = j.at("grid").at("bins").get<std::array<int, kStateDim>>();
  t.grid.validate();
  if (j.contains("sweep_changes")) {
    t.sweep_changes = from_nullable(j["sweep_changes"], std::numeric_limits<double>::infinity());
  }
  for (const auto& c : j.at("cells")) {
    QCell qc;
    qc.actions = c.at("actions").get<std::vector<double>>();
    qc.values = from_nullable(c.at("values"), kNegInf);
    qc.visits = c.at("visits").get<std::vector<int>>();
    if (qc.actions.empty() || qc.actions.size() != qc.values.size() ||
        qc.actions.size() != qc.visits.size()) {
      throw ConfigError("q-table cell has inconsistent action/value/visit rows");
    }
    t.cells.emplace(c.at("cell").get<std::int64_t>(), std::move(qc));
  }
  return t;
}

void QLearnConfig::validate() const {
  if (n_actions < 1) throw ConfigError("n_actions must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (max_sweeps < 1) throw ConfigError("max_sweeps must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("q tolerance must be > 0");
}

namespace {

std::vector<double> action_grid(double lo, double hi, int n) {
  if (n == 1) return {0.5 * (lo + hi)};
  std::vector<double> a(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  a.back() = hi;
  return a;
}

}  // namespace

TrainResult train(const Plant& plant, std::span<const TrainingPair> pairs, const StateGrid& grid,
                  const RewardConfig& reward, const QLearnConfig& cfg, const StateBox& admissible,
                  int jobs) {
  grid.validate();
  reward.validate();
  cfg.validate();

  TrainResult res;
  res.table.grid = grid;
  res.table.gamma = cfg.gamma;

  std::map<std::int64_t, std::vector<std::size_t>> by_cell;
  for (std::size_t p = 0; p < pairs.size(); ++p) by_cell[grid.cell_index(pairs[p].x0)].push_back(p);

  for (const auto& [cell, members] : by_cell) {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t p : members) {
      lo = std::max(lo, pairs[p].u_lo);
      hi = std::min(hi, pairs[p].u_hi);
    }
    if (lo > hi) continue;
    const std::vector<double> actions = action_grid(lo, hi, cfg.n_actions);
    for (std::size_t p : members) {
      PairEvaluation ev;
      ev.pair_id = pairs[p].id;
      ev.cell = cell;
      ev.actions = actions;
      res.evaluations.push_back(std::move(ev));
    }
    QCell qc;
    qc.actions = actions;
    qc.values.assign(actions.size(), 0.0);
    qc.visits.assign(actions.size(), static_cast<int>(members.size()));
    res.table.cells.emplace(cell, std::move(qc));
  }

  std::map<int, std::size_t> pair_index;
  for (std::size_t p = 0; p < pairs.size(); ++p) pair_index[pairs[p].id] = p;

  parallel_for(res.evaluations.size(), jobs, [&](std::size_t e) {
    PairEvaluation& ev = res.evaluations[e];
    const TrainingPair& pr = pairs[pair_index.at(ev.pair_id)];
    const std::span<const double> g =
        pr.gust ? std::span<const double>(pr.gust->samples) : std::span<const double>();
    ev.outcomes.reserve(ev.actions.size());
    for (double u : ev.actions) ev.outcomes.push_back(evaluate_action(plant, pr.x0, g, u, reward, admissible));
  });
  for (const auto& ev : res.evaluations) {
    for (const auto& o : ev.outcomes) res.violations += o.violated ? 1 : 0;
  }
  if (res.table.cells.empty()) return res;

  std::map<std::int64_t, std::vector<std::size_t>> evals_of_cell;
  for (std::size_t e = 0; e < res.evaluations.size(); ++e) evals_of_cell[res.evaluations[e].cell].push_back(e);

  // Cells with at least one action that is safe for every pair in the cell. Only these carry a
  // value estimate; bootstrapping from a cell without one would spread the violation sentinel to
  // states whose rollouts ended safely.
  QTable valued;
  valued.grid = grid;
  for (const auto& [cell, qc] : res.table.cells) {
    for (std::size_t a = 0; a < qc.actions.size(); ++a) {
      bool safe = true;
      for (std::size_t e : evals_of_cell[cell]) safe = safe && !res.evaluations[e].outcomes[a].violated;
      if (safe) {
        valued.cells.emplace(cell, QCell{});
        break;
      }
    }
  }

  // Successor cell of every (evaluation, action), resolved to a valued cell once.
  std::vector<std::vector<std::int64_t>> next_cell(res.evaluations.size());
  std::map<std::int64_t, std::int64_t> resolved;
  for (std::size_t e = 0; e < res.evaluations.size(); ++e) {
    for (const auto& o : res.evaluations[e].outcomes) {
      std::int64_t next = -1;
      if (!o.violated && !valued.cells.empty()) {
        const std::int64_t raw = grid.cell_index(o.x_end);
        auto it = resolved.find(raw);
        if (it == resolved.end()) it = resolved.emplace(raw, valued.nearest_visited(raw)).first;
        next = it->second;
      }
      next_cell[e].push_back(next);
    }
  }

  for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    std::map<std::int64_t, double> v_old;
    for (const auto& [cell, qc] : res.table.cells) v_old[cell] = qc.best_value();
    double change = 0.0;
    for (auto& [cell, qc] : res.table.cells) {
      const auto& evs = evals_of_cell[cell];
      for (std::size_t a = 0; a < qc.actions.size(); ++a) {
        double sum = 0.0;
        for (std::size_t e : evs) {
          const ActionOutcome& o = res.evaluations[e].outcomes[a];
          double q = o.reward;
          if (cfg.gamma > 0.0 && std::isfinite(q) && next_cell[e][a] >= 0) {
            q += cfg.gamma * v_old[next_cell[e][a]];
          }
          sum += q;
        }
        const double q_new = sum / static_cast<double>(evs.size());
        const double q_old = qc.values[a];
        if (std::isfinite(q_new) || std::isfinite(q_old)) {
          const double d = std::abs(q_new - q_old);
          change = std::max(change, std::isnan(d) ? std::numeric_limits<double>::infinity() : d);
        }
        qc.values[a] = q_new;
      }
    }
    res.table.sweep_changes.push_back(change);
    if (change < cfg.tolerance) break;
  }
  return res;
}

std::optional<double> policy(const QTable& table, const State& x) {
  const QCell* qc = table.find(table.grid.cell_index(x));
  if (!qc) return std::nullopt;
  return qc->best_action();
}

double policy_nearest(const QTable& table, const State& x) {
  return table.cells.at(table.nearest_visited(table.grid.cell_index(x))).best_action();
}

void write_train_log_csv(std::ostream& os, const TrainResult& result) {
  os << "pair_id,cell,best_action,best_reward\n";
  for (const auto& ev : result.evaluations) {
    QCell row;
    row.actions = ev.actions;
    for (const auto& o : ev.outcomes) row.values.push_back(o.reward);
    const std::size_t b = row.best_index();
    os << ev.pair_id << ',' << ev.cell << ',' << fmt_num(row.actions[b]) << ','
       << fmt_num(row.values[b]) << '\n';
  }
}

}  // namespace mpcrl
