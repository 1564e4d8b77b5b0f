#pragma once

// Deterministic planar surrogate: an omnidirectional base with first-order
// velocity dynamics plus two gait joints that track position targets.

#include <array>
#include <cstdint>
#include <vector>

#include "ntp/trajdata.hpp"

namespace ntp::env {

inline constexpr std::size_t kObsDim = 10;
inline constexpr std::size_t kActDim = 5;

using Observation = std::array<double, kObsDim>;
/// (a_x, a_y, a_omega, q1_target, q2_target)
using Action = std::array<double, kActDim>;

struct Pose {
    double x = 0.0, y = 0.0, theta = 0.0;
};

struct EnvState {
    Pose pose;
    std::array<double, 3> u{};  // body-frame (u_x, u_y, omega)
    std::array<double, 2> q{};
    std::array<double, 2> q_prev{};
    double t = 0.0;

    friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct Command {
    double vx = 0.0, vy = 0.0, omega = 0.0;

    std::array<double, 3> as_array() const { return {vx, vy, omega}; }
    static Command from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
};

struct EnvConfig {
    double dt = 0.05;
    double drag = 0.2;
    std::array<double, 3> accel_limit{1.0, 1.0, 2.0};
    double joint_tau = 0.1;
    double gait_amplitude = 0.3;
    double gait_base_freq = 0.5;
    double gait_freq_gain = 0.5;
    double expert_gain = 5.0;

    void validate() const;
};

/// Gains of the second scripted controller, whose rollouts are stored
/// without actions.
struct VariantConfig {
    double gain = 3.0;
    double amplitude = 0.4;
    double phase = 0.7853981633974483;  // π/4
    double drag_lo = 0.15;
    double drag_hi = 0.25;
};

/// |u| above this counts as divergence.
inline constexpr double kDivergenceSpeed = 10.0;

double wrap_angle(double a);

EnvState step(const EnvState& s, const Action& a, const EnvConfig& cfg);
Observation observe(const EnvState& s, const Command& c, const EnvConfig& cfg);
bool diverged(const EnvState& s);

Action expert_action(const EnvState& s, const Command& c, const EnvConfig& cfg);
Action variant_action(const EnvState& s, const Command& c, const EnvConfig& cfg, const VariantConfig& v = {});

enum class Controller { expert, variant };

struct Episode {
    data::Trajectory traj;
    std::vector<Pose> poses;  // T + 1 poses, poses[i] at time i·dt
};

struct Range {
    double lo = 0.0, hi = 0.0;
};

struct CommandRanges {
    Range vx{0.0, 1.0};
    Range vy{-0.5, 0.5};
    Range omega{-0.5, 0.5};
};

/// Rollout variations, all drawn from the rollout seed. The start state is
/// the origin pose with joints at zero and a body velocity drawn uniformly
/// from `start_velocity` unless `from_rest`. With `action_noise` > 0,
/// zero-mean Gaussian noise of that standard deviation is added to the
/// controller's acceleration commands, and the executed action is recorded.
struct RolloutOptions {
    bool from_rest = false;
    CommandRanges start_velocity;
    double action_noise = 0.0;
};

/// Runs `controller` under a constant command. Variant rollouts also draw
/// their drag from `seed` and are recorded action-free. Throws NumericError
/// on divergence.
Episode rollout_episode(Controller controller, const Command& c, double duration, const EnvConfig& cfg,
                        std::uint64_t seed, const VariantConfig& v = {}, const RolloutOptions& opts = {});
data::Trajectory rollout(Controller controller, const Command& c, double duration, const EnvConfig& cfg,
                         std::uint64_t seed, const VariantConfig& v = {}, const RolloutOptions& opts = {});

/// Clipped normal per component: mean mid-range, sigma range/4.
std::vector<Command> sample_commands(std::size_t k, const CommandRanges& ranges, std::uint64_t seed);

/// Number of steps for `duration` seconds; throws ConfigError if not integral.
std::size_t steps_for(double duration, double dt);

} // namespace ntp::env
