#include <algorithm>

#include "ntp/serialize.hpp"

namespace ntp {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!ok) throw ConfigError("unknown " + std::string(what) + " config key '" + key + "'");
    }
}

namespace data {

void to_json(json& j, const Normalization& n) {
    j = {{"obs_mean", n.obs_mean}, {"obs_std", n.obs_std}, {"act_mean", n.act_mean}, {"act_std", n.act_std}};
}

void from_json(const json& j, Normalization& n) {
    n.obs_mean = j.at("obs_mean").get<std::vector<double>>();
    n.obs_std = j.at("obs_std").get<std::vector<double>>();
    n.act_mean = j.at("act_mean").get<std::vector<double>>();
    n.act_std = j.at("act_std").get<std::vector<double>>();
}

} // namespace data

namespace model {

void to_json(json& j, const ModelConfig& c) {
    j = {{"d", c.d},
         {"layers", c.layers},
         {"heads", c.heads},
         {"context", c.context},
         {"mode", data::to_string(c.mode)},
         {"aligned", c.aligned},
         {"m", c.m},
         {"n", c.n},
         {"conventional_block", c.conventional_block}};
}

void from_json(const json& j, ModelConfig& c) {
    check_keys(j, {"d", "layers", "heads", "context", "mode", "aligned", "m", "n", "conventional_block"}, "model");
    read_opt(j, "d", c.d, "model");
    read_opt(j, "layers", c.layers, "model");
    read_opt(j, "heads", c.heads, "model");
    read_opt(j, "context", c.context, "model");
    if (j.contains("mode")) c.mode = data::token_mode_from_string(j.at("mode").get<std::string>());
    read_opt(j, "aligned", c.aligned, "model");
    read_opt(j, "m", c.m, "model");
    read_opt(j, "n", c.n, "model");
    read_opt(j, "conventional_block", c.conventional_block, "model");
}

} // namespace model

namespace env {

void to_json(json& j, const EnvConfig& c) {
    j = {{"dt", c.dt},
         {"drag", c.drag},
         {"accel_limit", c.accel_limit},
         {"joint_tau", c.joint_tau},
         {"gait_amplitude", c.gait_amplitude},
         {"gait_base_freq", c.gait_base_freq},
         {"gait_freq_gain", c.gait_freq_gain},
         {"expert_gain", c.expert_gain}};
}

void from_json(const json& j, EnvConfig& c) {
    check_keys(j,
               {"dt", "drag", "accel_limit", "joint_tau", "gait_amplitude", "gait_base_freq", "gait_freq_gain",
                "expert_gain"},
               "env");
    read_opt(j, "dt", c.dt, "env");
    read_opt(j, "drag", c.drag, "env");
    read_opt(j, "accel_limit", c.accel_limit, "env");
    read_opt(j, "joint_tau", c.joint_tau, "env");
    read_opt(j, "gait_amplitude", c.gait_amplitude, "env");
    read_opt(j, "gait_base_freq", c.gait_base_freq, "env");
    read_opt(j, "gait_freq_gain", c.gait_freq_gain, "env");
    read_opt(j, "expert_gain", c.expert_gain, "env");
}

void to_json(json& j, const Command& c) { j = {c.vx, c.vy, c.omega}; }

} // namespace env

namespace training {

void to_json(json& j, const TrainConfig& c) {
    json weights = json::object();
    for (const auto& [src, w] : c.source_weights) weights[data::to_string(src)] = w;
    j = {{"batch", c.batch},
         {"window", c.window},
         {"steps", c.steps},
         {"lr", c.lr},
         {"warmup", c.warmup},
         {"lr_floor", c.lr_floor},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"eps", c.eps},
         {"weight_decay", c.weight_decay},
         {"clip_norm", c.clip_norm},
         {"seed", c.seed},
         {"regime", to_string(c.regime)},
         {"source_weights", weights},
         {"checkpoint_every", c.checkpoint_every},
         {"checkpoint_path", c.checkpoint_path.string()}};
}

void from_json(const json& j, TrainConfig& c) {
    check_keys(j,
               {"batch", "window", "steps", "lr", "warmup", "lr_floor", "beta1", "beta2", "eps", "weight_decay",
                "clip_norm", "seed", "regime", "source_weights", "checkpoint_every", "checkpoint_path"},
               "train");
    read_opt(j, "batch", c.batch, "train");
    read_opt(j, "window", c.window, "train");
    read_opt(j, "steps", c.steps, "train");
    read_opt(j, "lr", c.lr, "train");
    read_opt(j, "warmup", c.warmup, "train");
    read_opt(j, "lr_floor", c.lr_floor, "train");
    read_opt(j, "beta1", c.beta1, "train");
    read_opt(j, "beta2", c.beta2, "train");
    read_opt(j, "eps", c.eps, "train");
    read_opt(j, "weight_decay", c.weight_decay, "train");
    read_opt(j, "clip_norm", c.clip_norm, "train");
    read_opt(j, "seed", c.seed, "train");
    if (j.contains("regime")) c.regime = regime_from_string(j.at("regime").get<std::string>());
    if (j.contains("source_weights")) {
        c.source_weights.clear();
        for (const auto& [k, v] : j.at("source_weights").items()) c.source_weights[data::source_from_string(k)] = v.get<double>();
    }
    read_opt(j, "checkpoint_every", c.checkpoint_every, "train");
    if (j.contains("checkpoint_path")) c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
}

} // namespace training

} // namespace ntp
