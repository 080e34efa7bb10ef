#pragma once

#include "homoscale/system.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace homoscale {

// Builds and validates a system from a structured config with keys
// dims {d, vartheta, m}, preset, coefficients {...}, flags {...}.
// Unknown keys raise ConfigError naming the key.
MultiscaleSystem build_system(const nlohmann::json& spec);

// Named preset with parameters (the `coefficients` object when a preset is
// named). Throws ConfigError on unknown names or parameters.
MultiscaleSystem make_preset(const std::string& name, const nlohmann::json& params = nlohmann::json::object());

const std::vector<std::string>& preset_names();

// Default parameter values of a preset, used for config echoes.
nlohmann::json preset_defaults(const std::string& name);

// Observables by name: const, y1, y_sq, tanh_y1, cos2pi_y1, x1, x1_sq,
// energy, entropy_production. Closed-form conditional means are attached
// where the system admits them.
TestObservable make_observable(const std::string& name, const MultiscaleSystem& sys);

}  // namespace homoscale
