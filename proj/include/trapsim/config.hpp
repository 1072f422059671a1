/**
 * @file config.hpp
 * @brief Flat dotted-key run configuration.
 *
 * A configuration file is a JSON object such as
 *
 *   { "primary.power_mw": 10, "ancillary.power_mw": 0.1, "run.seed": 7 }
 *
 * A provenance sidecar written by any command is also accepted: its
 * "config" member is used. Unknown keys are rejected.
 */

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "trapsim/atom_dynamics.hpp"
#include "trapsim/sweep_runner.hpp"
#include "trapsim/trap_potential.hpp"

namespace trapsim {

class RunConfig {
 public:
  RunConfig();  // built-in defaults

  /// Merge a configuration document. Throws ConfigError on unknown keys or
  /// mistyped values.
  void merge(const nlohmann::json& doc);
  void merge_file(const std::string& path);

  /// Set one key from its command-line text.
  void set(const std::string& key, const std::string& text);
  void set_value(const std::string& key, nlohmann::json value);

  bool has(const std::string& key) const;
  const nlohmann::json& values() const { return values_; }

  /// Builders validate through the owning module. `require_primary_power`
  /// turns a missing primary.power_mw into a ConfigError.
  TrapConfig trap_config(bool require_primary_power = true) const;
  DynamicsParams dynamics() const;
  CycleTiming timing() const;
  SweepSpec sweep_spec() const;

  std::uint64_t seed() const;
  int n_cycles() const;
  double number(const std::string& key) const;
  std::string text(const std::string& key) const;

  static const std::vector<std::string>& keys();

 private:
  nlohmann::json values_;
};

}  // namespace trapsim
