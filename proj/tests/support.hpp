#pragma once

#include <string>

#include "mpcrl/config.hpp"

namespace mpcrl::test {

inline std::string config_path(const std::string& name) {
  return std::string(MPCRL_CONFIG_DIR) + "/" + name;
}

inline RunConfig default_config() { return load_run_config(config_path("default.toml")); }

inline Plant default_plant() { return make_plant(default_config()); }

}  // namespace mpcrl::test
