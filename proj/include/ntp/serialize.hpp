#pragma once

// JSON conversions for configuration and statistics records. Reading a
// config object only overrides the keys present; unknown keys raise
// ConfigError so typos are not silently ignored.

#include "json.hpp"
#include "ntp/env.hpp"
#include "ntp/model.hpp"
#include "ntp/trajdata.hpp"
#include "ntp/training.hpp"

namespace ntp::data {
void to_json(nlohmann::json& j, const Normalization& n);
void from_json(const nlohmann::json& j, Normalization& n);
} // namespace ntp::data

namespace ntp::model {
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
} // namespace ntp::model

namespace ntp::env {
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);
void to_json(nlohmann::json& j, const Command& c);
} // namespace ntp::env

namespace ntp::training {
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
} // namespace ntp::training

namespace ntp {
/// Throws ConfigError naming the first key of `j` not in `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* what);

/// Overwrites `out` with j[key] when present; type errors become ConfigError.
template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const char* what) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(what) + "." + key + ": " + e.what());
    }
}
} // namespace ntp
