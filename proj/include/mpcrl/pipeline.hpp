#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mpcrl/config.hpp"

namespace mpcrl {

struct PairRecord {
  int pair_id = 0;
  int state_id = 0;
  int realization = 0;
  State x0 = State::Zero();
  std::uint64_t gust_seed = 0;
  SafeBounds bounds;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct TrainingArtifacts {
  std::vector<State> states;
  std::vector<std::vector<GustProfile>> ensembles;  // per state
  std::vector<PairRecord> pairs;
  TrainResult mpcrl;  // actions inside the certified bounds
  TrainResult rl;     // actions over the whole actuator box, no certification
  std::vector<Transition> transitions;
  int certification_failures = 0;  // feasible pairs whose bounds could not be certified
  int infeasible_pairs = 0;        // pairs the MPC could not keep inside the box
};

// Gust horizon each micro-environment needs: the MPC prediction or the reward rollout.
double pair_gust_duration(const RunConfig& cfg);

TrainingArtifacts run_training(const Plant& plant, const RunConfig& cfg, int jobs);

// Transition (x, u) with margins measured from the successors under the nominal and each
// realization's leading disturbance to the admissible boundary. nullopt if any margin is <= 0.
std::optional<Transition> make_transition(const Plant& plant, const RunConfig& cfg, const State& x,
                                          double u, std::span<const GustProfile> ensemble);

// Certified bounds and exhaustive action search at an arbitrary state, with a fresh ensemble.
std::optional<Transition> local_transition(const Plant& plant, const RunConfig& cfg,
                                           const State& x, std::uint64_t seed);

LocalTrainer make_local_trainer(const Plant& plant, const RunConfig& cfg, std::uint64_t run_seed);

// The three compared controllers, in the order lpv, rl, mpcrl.
std::vector<NamedController> campaign_controllers(const Plant& plant, const RunConfig& cfg,
                                                  std::shared_ptr<const QTable> rl_table,
                                                  std::shared_ptr<const TransitionDb> db);

// Fills the cached sensitivities of every transition.
void attach_sensitivities(const Plant& plant, const RunConfig& cfg, std::vector<Transition>& ts);

HarnessContext harness_context(const Plant& plant, const RunConfig& cfg);
CampaignConfig campaign_config(const RunConfig& cfg);

// Artifact files. CSV and JSONL outputs start with a "# config_hash=..." line; JSON outputs carry
// a config_hash field.
void write_training_outputs(const std::string& dir, const TrainingArtifacts& a,
                            const std::string& config_hash);
QTable load_qtable(const std::string& path);
std::vector<Transition> load_transitions(const std::string& path);

void write_campaign_outputs(const std::string& dir, const CampaignResult& r, const Plant& plant,
                            const std::string& config_hash);

}  // namespace mpcrl
