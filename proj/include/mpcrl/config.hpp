#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "mpcrl/bounds.hpp"
#include "mpcrl/filter.hpp"
#include "mpcrl/gust.hpp"
#include "mpcrl/harness.hpp"
#include "mpcrl/mpc.hpp"
#include "mpcrl/plant.hpp"
#include "mpcrl/qlearn.hpp"
#include "mpcrl/validation.hpp"

namespace mpcrl {

struct TrainingConfig {
  int samples_per_dim = 7;
  double envelope = 0.9;  // fraction of the admissible box spanned by the initial states
  int realizations = 3;   // gust realizations per initial state
  int grid_bins = 7;
  QLearnConfig q;
};

struct EvaluationConfig {
  int runs = 100;
  double init_fraction = 0.5;
  int keep_series = 3;
  EpisodeConfig episode;
};

struct RunConfig {
  std::string plant_path;
  PlantParams plant;
  StateBox state_box;
  InputBox input_box;
  GustConfig gust;
  MpcConfig mpc;  // weights already scaled by the box half-widths
  BoundSearchConfig bounds;
  TrainingConfig training;
  RewardConfig reward;  // weights already scaled by the box half-widths
  FilterConfig filter;
  double r_max_factor = 0.5;  // r_max = factor * grid half-diagonal when filter.r_max <= 0
  EvaluationConfig eval;
  ValidationConfig validation;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out_dir = "out";

  void validate() const;
  [[nodiscard]] StateGrid grid() const;
  [[nodiscard]] double r_max() const;
  // Every resolved setting that influences results (jobs and out_dir excluded).
  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string hash() const;
};

// Relative paths inside the config resolve against `base_dir`.
RunConfig parse_run_config(const std::string& toml_text, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

// Plant with finite-difference steps scaled by the admissible half-widths.
Plant make_plant(const RunConfig& cfg);

nlohmann::json plant_params_to_json(const PlantParams& p);

}  // namespace mpcrl
