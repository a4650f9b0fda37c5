#pragma once

// Run configuration: defaults double as the schema. A TOML file and then
// command-line flags are merged on top; unknown keys and wrong types are
// rejected with the offending field named.

#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

namespace skillworld::cli {

/// Bad user input: exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline nlohmann::json default_config() {
  using J = nlohmann::json;
  return {
      {"global", {{"seed", 0}, {"out", ""}, {"obs_mode", "state"}}},
      {"verify", {{"instances", 50}, {"horizon", 4}, {"perturb_scale", 0.05}, {"policies", 20}}},
      {"collect", {{"samples", 50000}, {"episode_cap", 100}, {"csv", false}}},
      {"train-model",
       {{"data", ""},
        {"samples", 50000},
        {"steps", 70000},
        {"batch_size", 16},
        {"lr", 1e-4},
        {"d_z", 4},
        {"log_every", 100}}},
      {"plan",
       {{"goal", J::array({0.9, 0.2})},
        {"goal_radius", 0.05},
        {"start", J::array({0.2, 0.9})},
        {"model", ""},
        {"pretrain_samples", 50000},
        {"pretrain_steps", 70000},
        {"real_steps", 100000},
        {"refresh_every", 1000},
        {"imagination_steps", 20000},
        {"episode_cap", 100},
        {"eval_episodes", 10},
        {"target_update", 10000},
        {"lr", 1e-4},
        {"r_task", 100.0},
        {"reward_scale", 0.01},
        {"record_wallclock", false}}},
      {"eval-mi", {{"model", ""}, {"samples", 5000}, {"k", 3}}},
      {"mds", {{"model", ""}, {"points", 1000}}},
  };
}

namespace detail {

inline std::string kind(const nlohmann::json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "table";
}

/// Coerces value to the type of the default, or throws.
inline nlohmann::json coerce(const std::string& field, const nlohmann::json& def, const nlohmann::json& value) {
  auto bad = [&] {
    return ConfigError("config field '" + field + "': expected " + kind(def) + ", got " + kind(value));
  };
  if (def.is_boolean()) {
    if (!value.is_boolean()) throw bad();
    return value;
  }
  if (def.is_number_integer()) {
    if (!value.is_number_integer()) throw bad();
    if (value.get<long long>() < 0) throw ConfigError("config field '" + field + "': must be non-negative");
    return value.get<long long>();
  }
  if (def.is_number()) {
    if (!value.is_number()) throw bad();
    return value.get<double>();
  }
  if (def.is_string()) {
    if (!value.is_string()) throw bad();
    return value;
  }
  if (def.is_array()) {
    if (!value.is_array() || value.size() != def.size()) throw bad();
    nlohmann::json out = nlohmann::json::array();
    for (const auto& x : value) {
      if (!x.is_number()) throw ConfigError("config field '" + field + "': array entries must be numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  throw bad();
}

inline nlohmann::json from_toml_node(const toml::node& n) {
  if (auto v = n.as_boolean()) return v->get();
  if (auto v = n.as_integer()) return v->get();
  if (auto v = n.as_floating_point()) return v->get();
  if (auto v = n.as_string()) return v->get();
  if (auto a = n.as_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& x : *a) out.push_back(from_toml_node(x));
    return out;
  }
  if (auto t = n.as_table()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = from_toml_node(v);
    return out;
  }
  throw ConfigError("unsupported TOML value type");
}

}  // namespace detail

/// Sets section.key after validation against the defaults.
inline void set_field(nlohmann::json& cfg, const std::string& section, const std::string& key,
                      const nlohmann::json& value) {
  static const auto defaults = default_config();
  if (!defaults.contains(section)) throw ConfigError("unknown config section '" + section + "'");
  const auto& sec = defaults.at(section);
  if (!sec.contains(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
  cfg[section][key] = detail::coerce(section + "." + key, sec.at(key), value);
}

/// Merges a parsed document of {section: {key: value}} into cfg.
inline void merge(nlohmann::json& cfg, const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a table of sections");
  for (const auto& [section, table] : doc.items()) {
    if (!table.is_object()) throw ConfigError("config entry '" + section + "' must be a table");
    for (const auto& [key, value] : table.items()) set_field(cfg, section, key, value);
  }
}

inline void merge_toml_file(nlohmann::json& cfg, const std::filesystem::path& path) {
  toml::table t;
  try {
    t = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + std::string(e.description()) + " at line " +
                      std::to_string(e.source().begin.line));
  }
  merge(cfg, detail::from_toml_node(t));
}

/// Run directory: out as given, relative paths placed under SKILLWORLD_OUT
/// when it is set. Empty out defaults to runs/<command>.
inline std::filesystem::path output_dir(const std::string& out, const std::string& command) {
  std::filesystem::path p = out.empty() ? std::filesystem::path("runs") / command : std::filesystem::path(out);
  if (p.is_relative())
    if (const char* root = std::getenv("SKILLWORLD_OUT"); root && *root) p = std::filesystem::path(root) / p;
  return p;
}

}  // namespace skillworld::cli
