#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mpcrl/plant.hpp"

namespace mpcrl {

// Component-wise finite-difference sensitivities |df_i / dz| of the continuous dynamics.
struct Sensitivity {
  StateMatrix x = StateMatrix::Zero();  // (i, j): per unit of x_j
  State u = State::Zero();
  State w = State::Zero();
};

struct Transition {
  State x_bar = State::Zero();
  double u_bar = 0.0;
  State x_plus = State::Zero();       // successor of (x_bar, u_bar) with no gust
  State margin_bar = State::Zero();   // distance of the successors to the admissible boundary
  std::uint64_t gust_seed = 0;
  int pair_id = -1;                   // training state id, -1 for online insertions
  Sensitivity sens;                   // at x_bar, not persisted

  [[nodiscard]] nlohmann::json to_json() const;
  static Transition from_json(const nlohmann::json& j);
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// Verified transitions. The trained set is shared read-only between copies; insertions made by
// one copy go to its private overlay and are invisible to the others.
class TransitionDb {
 public:
  TransitionDb() = default;
  TransitionDb(std::vector<Transition> base, const State& scale);

  [[nodiscard]] std::size_t size() const { return base_->size() + overlay_.size(); }
  [[nodiscard]] bool empty() const { return size() == 0; }
  [[nodiscard]] std::size_t overlay_size() const { return overlay_.size(); }
  [[nodiscard]] const Transition& at(std::size_t i) const;
  [[nodiscard]] const State& scale() const { return scale_; }

  void insert(Transition t);

  // ||a - b||_W with W = diag(1/c_i^2).
  [[nodiscard]] double distance(const State& a, const State& b) const;

  // The k nearest transitions by weighted distance (ties by index), dropping any beyond r_max.
  [[nodiscard]] std::vector<Neighbor> query(const State& x, int k, double r_max) const;

  void write_jsonl(std::ostream& os) const;
  static TransitionDb read_jsonl(std::istream& is, const State& scale);

 private:
  std::shared_ptr<const std::vector<Transition>> base_ =
      std::make_shared<const std::vector<Transition>>();
  std::deque<Transition> overlay_;
  State scale_ = State::Ones();
  State inv_scale_ = State::Ones();
};

struct LipschitzEstimates {
  double L_u = 0.0;
  State L_x = State::Zero();
  State weights = State::Ones();  // diagonal of W
  Sensitivity sens;
};

using Dynamics = std::function<State(const State& x, double u, double w)>;

struct LipschitzProbe {
  double h_u = 1e-4;             // input perturbation (rad)
  double h_x = 1e-4;             // state perturbation, times probe_scale_i
  State probe_scale = State::Ones();
  double w_max = 0.0;            // disturbances swept over {-w_max, 0, w_max}
};

// Finite-difference Lipschitz estimates of f around (x, u) under the weighted norm, maximised over
// the disturbance sweep. Throws DomainError if f is not finite at a probe.
LipschitzEstimates estimate_lipschitz(const Dynamics& f, const State& x, double u,
                                      const State& weights, const LipschitzProbe& probe);

// Normalised inverse-distance interpolation of the neighbours' inputs, clipped to `box`.
double interpolate(const TransitionDb& db, const State& x, std::span<const Neighbor> nbrs,
                   double epsilon, const InputBox& box);
std::vector<double> interpolation_weights(std::span<const Neighbor> nbrs, double epsilon);

// delta_i = (1 + t L_x_i) |x_i - xbar_i| + t L_u |u - ubar|, with t the sample time or, in the
// delay-adjusted form, the delay horizon.
State deviation_bound(const State& x, double u, const Transition& n, const LipschitzEstimates& L,
                      double t);

// Cross-component and disturbance terms that the per-component bound leaves out:
//   T * (sum_j S_ij |x_j - xbar_j| + S_iu |u - ubar| + S_iw w_max)
// with S the larger of the sensitivities at x and at xbar. Added to deviation_bound in certify().
State coupling_remainder(const State& x, double u, const Transition& n, const Sensitivity& at_x,
                         double sample_time, double w_max);

struct CertifyContext {
  double sample_time = 1e-3;
  int delay_steps = 1;   // > 1 selects the delay-adjusted bound
  double w_max = 0.0;
  bool remainder = true;
};

struct Certificate {
  bool safe = false;
  double max_ratio = 0.0;       // max over neighbours and components of delta_i / margin_i
  std::vector<State> deltas;    // one per neighbour
};

// Safe iff delta_i <= margin_i for every component of every neighbour. deviation_bound is applied in
// the coordinates x_i / c_i of the database scale, where the W-norm constants are dimensionless.
Certificate certify(const TransitionDb& db, const State& x, double u,
                    std::span<const Neighbor> nbrs, const LipschitzEstimates& L,
                    const CertifyContext& ctx);

struct FilterConfig {
  int k = 4;
  double r_max = 0.0;      // weighted radius; <= 0 means derived from the state grid
  double epsilon = 1e-9;
  double h_u = 1e-4;
  double h_x = 1e-4;
  int delay_steps = 1;
  bool remainder = true;
  bool local_retraining = true;

  void validate() const;
};

// Builds a verified transition at x on demand (tier-2 fallback). Returns nullopt when no certified
// input exists there.
using LocalTrainer = std::function<std::optional<Transition>(const State& x, std::size_t k)>;

struct FilterDecision {
  std::size_t k = 0;
  bool certified = false;
  int n_neighbors = 0;
  double max_ratio = 0.0;
  int fallback_tier = 0;  // 0 none, 1 hold actuator, 2 local retraining
  bool envelope_exit = false;  // tier 2 found no certified input
  double u = 0.0;
  // Successor predictions that the realised next state must respect when certified.
  std::vector<State> x_plus;
  std::vector<State> deltas;
};

Sensitivity wing_sensitivity(const Plant& plant, const State& x, double u,
                             const LipschitzProbe& probe);

class SafetyFilter {
 public:
  SafetyFilter(const Plant& plant, TransitionDb db, FilterConfig cfg, const InputBox& input_box,
               double w_max, double r_max, LocalTrainer trainer = {});

  // Input to apply at step k from state x, restricted to [u_prev - rate, u_prev + rate].
  FilterDecision step(std::size_t k, const State& x, double u_prev, double rate);

  [[nodiscard]] const TransitionDb& db() const { return db_; }

 private:
  FilterDecision try_certify(std::size_t k, const State& x, double lo, double hi);

  const Plant& plant_;
  TransitionDb db_;
  FilterConfig cfg_;
  InputBox input_box_;
  double w_max_;
  double r_max_;
  LocalTrainer trainer_;
  LipschitzProbe probe_;
};

void write_filter_log_csv(std::ostream& os, std::span<const FilterDecision> log);

}  // namespace mpcrl
