#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "mpcrl/qlearn.hpp"

namespace mpcrl::test {

// Reward of holding u over the rollout, written out with plain Euler steps.
inline double rollout_reward(const Plant& plant, const State& x0, std::span<const double> gust,
                             double u, const RewardConfig& rc, const StateBox& box) {
  State x = x0;
  double total = 0.0;
  for (int k = 0; k < rc.rollout; ++k) {
    const auto i = static_cast<std::size_t>(k);
    x = plant.step_euler(x, u, i < gust.size() ? gust[i] : 0.0);
    if (!box.contains(x)) return -std::numeric_limits<double>::infinity();
    for (int d = 0; d < kStateDim; ++d) total -= rc.q[d] * x[d] * x[d];
    total -= rc.r * u * u;
  }
  return total;
}

struct CellOptimum {
  std::vector<double> actions;
  std::size_t best = 0;
};

// Exhaustive one-step optimum per grid cell: evenly spaced actions over the intersection of the
// member pairs' intervals, scored by the mean rollout reward, ties to the smallest |u|.
inline std::map<std::int64_t, CellOptimum> exhaustive_cell_optimum(
    const Plant& plant, std::span<const TrainingPair> pairs, const StateGrid& grid,
    const RewardConfig& rc, int n_actions, const StateBox& box) {
  std::map<std::int64_t, std::vector<const TrainingPair*>> members;
  for (const auto& p : pairs) members[grid.cell_index(p.x0)].push_back(&p);
  std::map<std::int64_t, CellOptimum> out;
  for (const auto& [cell, ps] : members) {
    double lo = -1e300;
    double hi = 1e300;
    for (const auto* p : ps) {
      lo = std::max(lo, p->u_lo);
      hi = std::min(hi, p->u_hi);
    }
    if (lo > hi) continue;
    CellOptimum opt;
    for (int a = 0; a < n_actions; ++a) {
      opt.actions.push_back(n_actions == 1 ? 0.5 * (lo + hi)
                                           : (a == n_actions - 1 ? hi : lo + (hi - lo) * a / (n_actions - 1)));
    }
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < opt.actions.size(); ++a) {
      double sum = 0.0;
      for (const auto* p : ps) {
        sum += rollout_reward(plant, p->x0, p->gust->samples, opt.actions[a], rc, box);
      }
      const double v = sum / static_cast<double>(ps.size());
      const bool better = a == 0 || v > best_v ||
                          (v == best_v && std::abs(opt.actions[a]) < std::abs(opt.actions[opt.best]));
      if (better) {
        best_v = v;
        opt.best = a;
      }
    }
    out.emplace(cell, std::move(opt));
  }
  return out;
}

}  // namespace mpcrl::test
