#include <cmath>
#include <cstdlib>

#include "ntp/harness.hpp"
#include "ntp/serialize.hpp"

namespace ntp::harness {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    // splitmix64 over a combined state
    std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (index * 0xD1B54A32D192ED03ULL);
    for (int round = 0; round < 2; ++round) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
    }
    return z;
}

namespace {

enum Stream : std::uint64_t { kCommand = 1, kRollout = 2, kKeypoint = 3 };

env::Command command_for(const DataGenConfig& cfg, std::uint64_t seed, std::size_t i) {
    return env::sample_commands(1, cfg.commands, derive_seed(seed, kCommand, i)).front();
}

json range_json(const env::Range& r) { return {r.lo, r.hi}; }

env::Range range_from(const json& j, const char* key) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(std::string("data.commands.") + key + ": expected [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

} // namespace

void DataGenConfig::validate() const {
    env.validate();
    env::steps_for(duration, env.dt);
    if (!(action_noise >= 0)) throw ConfigError("action_noise must be non-negative");
    if (!(keypoint_noise >= 0)) throw ConfigError("keypoint_noise must be non-negative");
    if (!(residual_threshold >= 0)) throw ConfigError("residual_threshold must be non-negative");
    for (const auto* r : {&commands.vx, &commands.vy, &commands.omega})
        if (!(r->lo <= r->hi)) throw ConfigError("command range with lo > hi");
}

void to_json(json& j, const DataGenConfig& c) {
    j = {{"env", c.env},
         {"duration", c.duration},
         {"action_noise", c.action_noise},
         {"commands", {{"vx", range_json(c.commands.vx)}, {"vy", range_json(c.commands.vy)}, {"omega", range_json(c.commands.omega)}}},
         {"variant",
          {{"gain", c.variant.gain},
           {"amplitude", c.variant.amplitude},
           {"phase", c.variant.phase},
           {"drag_lo", c.variant.drag_lo},
           {"drag_hi", c.variant.drag_hi}}},
         {"keypoint_noise", c.keypoint_noise},
         {"residual_threshold", c.residual_threshold}};
}

void from_json(const json& j, DataGenConfig& c) {
    check_keys(j, {"env", "duration", "action_noise", "commands", "variant", "keypoint_noise", "residual_threshold"}, "data");
    if (j.contains("env")) from_json(j.at("env"), c.env);
    read_opt(j, "duration", c.duration, "data");
    read_opt(j, "action_noise", c.action_noise, "data");
    if (j.contains("commands")) {
        const auto& r = j.at("commands");
        check_keys(r, {"vx", "vy", "omega"}, "data.commands");
        try {
            if (r.contains("vx")) c.commands.vx = range_from(r.at("vx"), "vx");
            if (r.contains("vy")) c.commands.vy = range_from(r.at("vy"), "vy");
            if (r.contains("omega")) c.commands.omega = range_from(r.at("omega"), "omega");
        } catch (const json::exception& e) {
            throw ConfigError(std::string("data.commands: ") + e.what());
        }
    }
    if (j.contains("variant")) {
        const auto& v = j.at("variant");
        check_keys(v, {"gain", "amplitude", "phase", "drag_lo", "drag_hi"}, "data.variant");
        read_opt(v, "gain", c.variant.gain, "data.variant");
        read_opt(v, "amplitude", c.variant.amplitude, "data.variant");
        read_opt(v, "phase", c.variant.phase, "data.variant");
        read_opt(v, "drag_lo", c.variant.drag_lo, "data.variant");
        read_opt(v, "drag_hi", c.variant.drag_hi, "data.variant");
    }
    read_opt(j, "keypoint_noise", c.keypoint_noise, "data");
    read_opt(j, "residual_threshold", c.residual_threshold, "data");
}

namespace {

std::vector<data::Trajectory> generate(env::Controller controller, std::size_t count, const DataGenConfig& cfg,
                                       std::uint64_t seed) {
    cfg.validate();
    env::RolloutOptions opts;
    opts.action_noise = cfg.action_noise;
    std::vector<data::Trajectory> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(env::rollout(controller, command_for(cfg, seed, i), cfg.duration, cfg.env,
                                   derive_seed(seed, kRollout, i), cfg.variant, opts));
    return out;
}

} // namespace

std::vector<data::Trajectory> generate_expert(std::size_t count, const DataGenConfig& cfg, std::uint64_t seed) {
    return generate(env::Controller::expert, count, cfg, seed);
}

std::vector<data::Trajectory> generate_actionfree(std::size_t count, const DataGenConfig& cfg, std::uint64_t seed) {
    return generate(env::Controller::variant, count, cfg, seed);
}

std::vector<ik::KeypointTrajectory> generate_keypoints(std::size_t count, const DataGenConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto human = ik::human_chain();
    const double ratio = ik::robot_chain().total_length() / human.total_length();
    std::vector<ik::KeypointTrajectory> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto c = command_for(cfg, seed, i);
        ik::SyntheticMotion m;
        m.frames = env::steps_for(cfg.duration, cfg.env.dt);
        m.dt = cfg.env.dt;
        m.frequency = cfg.env.gait_base_freq + cfg.env.gait_freq_gain * std::hypot(c.vx, c.vy);
        m.root_velocity = {c.vx / ratio, c.vy / ratio, c.omega};
        m.noise = cfg.keypoint_noise;
        out.push_back(ik::synthesize_keypoints(human, m, derive_seed(seed, kKeypoint, i)).keypoints);
    }
    return out;
}

RetargetBatch retarget_batch(const std::vector<ik::KeypointTrajectory>& keypoints, double threshold,
                             const ik::RetargetConfig& cfg) {
    if (!(threshold >= 0)) throw ConfigError("residual threshold must be non-negative");
    const auto human = ik::human_chain(), robot = ik::robot_chain();
    RetargetBatch out;
    for (const auto& k : keypoints) {
        auto r = ik::retarget(human, robot, k, cfg);
        out.residuals.push_back(r.ik.residual);
        if (r.ik.residual <= threshold)
            out.kept.push_back(std::move(r.traj));
        else
            ++out.filtered;
    }
    return out;
}

std::filesystem::path output_root() {
    if (const char* root = std::getenv("NTP_OUTPUT_ROOT"); root && *root) return root;
    return "runs";
}

} // namespace ntp::harness
