#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ntp/env.hpp"

namespace ntp::env {

void EnvConfig::validate() const {
    const bool positive = dt > 0 && drag > 0 && accel_limit[0] > 0 && accel_limit[1] > 0 && accel_limit[2] > 0 &&
                          joint_tau > 0 && gait_amplitude > 0 && gait_base_freq > 0 && gait_freq_gain > 0 &&
                          expert_gain > 0;
    if (!positive) throw ConfigError("environment constants must all be positive");
    if (!(dt < joint_tau)) throw ConfigError("environment dt must be smaller than the joint time constant");
}

double wrap_angle(double a) {
    a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
    if (a <= 0.0) a += 2.0 * std::numbers::pi;
    return a - std::numbers::pi;
}

EnvState step(const EnvState& s, const Action& a, const EnvConfig& cfg) {
    for (double v : a)
        if (std::isnan(v)) throw NumericError("NaN in action passed to env::step");
    EnvState n = s;
    for (std::size_t i = 0; i < 3; ++i) {
        const double acc = std::clamp(a[i], -cfg.accel_limit[i], cfg.accel_limit[i]);
        n.u[i] = (1.0 - cfg.drag * cfg.dt) * s.u[i] + acc * cfg.dt;
    }
    const double c = std::cos(s.pose.theta), sn = std::sin(s.pose.theta);
    n.pose.theta = wrap_angle(s.pose.theta + n.u[2] * cfg.dt);
    n.pose.x = s.pose.x + (c * n.u[0] - sn * n.u[1]) * cfg.dt;
    n.pose.y = s.pose.y + (sn * n.u[0] + c * n.u[1]) * cfg.dt;
    for (std::size_t j = 0; j < 2; ++j) {
        n.q_prev[j] = s.q[j];
        n.q[j] = s.q[j] + (a[3 + j] - s.q[j]) * cfg.dt / cfg.joint_tau;
    }
    n.t = s.t + cfg.dt;
    return n;
}

Observation observe(const EnvState& s, const Command& c, const EnvConfig& cfg) {
    return {s.u[0],
            s.u[1],
            s.u[2],
            s.q[0],
            s.q[1],
            (s.q[0] - s.q_prev[0]) / cfg.dt,
            (s.q[1] - s.q_prev[1]) / cfg.dt,
            c.vx,
            c.vy,
            c.omega};
}

bool diverged(const EnvState& s) {
    return !(std::hypot(s.u[0], s.u[1], s.u[2]) <= kDivergenceSpeed);
}

namespace {

// Proportional velocity law with drag feedforward: at u = command the net
// acceleration is zero, so the commanded velocity is a fixed point.
Action velocity_law(const EnvState& s, const Command& c, const EnvConfig& cfg, double gain, double amplitude,
                    double phase) {
    const auto target = c.as_array();
    Action a{};
    for (std::size_t i = 0; i < 3; ++i) {
        const double raw = gain * (target[i] - s.u[i]) + cfg.drag * s.u[i];
        a[i] = std::clamp(raw, -cfg.accel_limit[i], cfg.accel_limit[i]);
    }
    const double f = cfg.gait_base_freq + cfg.gait_freq_gain * std::abs(s.u[0]);
    const double arg = 2.0 * std::numbers::pi * f * s.t + phase;
    a[3] = amplitude * std::sin(arg);
    a[4] = amplitude * std::sin(arg + std::numbers::pi);
    return a;
}

} // namespace

Action expert_action(const EnvState& s, const Command& c, const EnvConfig& cfg) {
    return velocity_law(s, c, cfg, cfg.expert_gain, cfg.gait_amplitude, 0.0);
}

Action variant_action(const EnvState& s, const Command& c, const EnvConfig& cfg, const VariantConfig& v) {
    return velocity_law(s, c, cfg, v.gain, v.amplitude, v.phase);
}

std::size_t steps_for(double duration, double dt) {
    const double r = duration / dt;
    const double n = std::round(r);
    if (!(duration > 0) || std::abs(r - n) > 1e-9 * std::max(1.0, r))
        throw ConfigError("duration " + std::to_string(duration) + " s is not a whole number of " +
                          std::to_string(dt) + " s steps");
    return static_cast<std::size_t>(n);
}

Episode rollout_episode(Controller controller, const Command& c, double duration, const EnvConfig& cfg,
                        std::uint64_t seed, const VariantConfig& v, const RolloutOptions& opts) {
    cfg.validate();
    const std::size_t T = steps_for(duration, cfg.dt);

    EnvConfig plant = cfg;
    std::mt19937_64 rng(seed);
    if (controller == Controller::variant)
        plant.drag = std::uniform_real_distribution<double>(v.drag_lo, v.drag_hi)(rng);
    EnvState s;
    if (!opts.from_rest) {
        auto draw = [&rng](const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };
        s.u = {draw(opts.start_velocity.vx), draw(opts.start_velocity.vy), draw(opts.start_velocity.omega)};
    }
    if (opts.action_noise < 0) throw ConfigError("action noise must be non-negative");
    std::normal_distribution<double> noise(0.0, opts.action_noise > 0 ? opts.action_noise : 1.0);

    Episode ep;
    auto& tr = ep.traj;
    tr.dt = cfg.dt;
    tr.command = c.as_array();
    tr.obs = Array({T, kObsDim});
    tr.act = Array({T, kActDim});
    tr.source = controller == Controller::expert ? data::Source::expert : data::Source::actionfree;
    tr.act_present.assign(T, controller == Controller::expert);
    ep.poses.reserve(T + 1);

    ep.poses.push_back(s.pose);
    for (std::size_t i = 0; i < T; ++i) {
        const auto o = observe(s, c, cfg);
        auto a = controller == Controller::expert ? expert_action(s, c, cfg) : variant_action(s, c, cfg, v);
        if (opts.action_noise > 0)
            for (std::size_t k = 0; k < 3; ++k) a[k] += noise(rng);
        std::copy(o.begin(), o.end(), tr.obs.data().begin() + static_cast<std::ptrdiff_t>(i * kObsDim));
        if (controller == Controller::expert)
            std::copy(a.begin(), a.end(), tr.act.data().begin() + static_cast<std::ptrdiff_t>(i * kActDim));
        s = step(s, a, plant);
        if (diverged(s))
            throw NumericError("rollout diverged at step " + std::to_string(i) + " (|u| > " +
                               std::to_string(kDivergenceSpeed) + ")");
        ep.poses.push_back(s.pose);
    }
    return ep;
}

data::Trajectory rollout(Controller controller, const Command& c, double duration, const EnvConfig& cfg,
                         std::uint64_t seed, const VariantConfig& v, const RolloutOptions& opts) {
    return rollout_episode(controller, c, duration, cfg, seed, v, opts).traj;
}

std::vector<Command> sample_commands(std::size_t k, const CommandRanges& ranges, std::uint64_t seed) {
    if (k == 0) throw ContractError("sample_commands needs k >= 1");
    std::mt19937_64 rng(seed);
    auto draw = [&rng](const Range& r) {
        const double mid = 0.5 * (r.lo + r.hi);
        const double sigma = (r.hi - r.lo) / 4.0;
        if (sigma <= 0.0) return mid;
        std::normal_distribution<double> nd(mid, sigma);
        return std::clamp(nd(rng), r.lo, r.hi);
    };
    std::vector<Command> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        Command c;
        c.vx = draw(ranges.vx);
        c.vy = draw(ranges.vy);
        c.omega = draw(ranges.omega);
        out.push_back(c);
    }
    return out;
}

} // namespace ntp::env
