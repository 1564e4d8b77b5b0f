#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ntp/env.hpp"
#include "ntp/model.hpp"

namespace ntp::eval {

/// Poses at t = 0, dt, …, duration of a base that follows the command
/// exactly from the origin (T+1 entries).
std::vector<env::Pose> ideal_trajectory(const env::Command& c, double duration, double dt);

/// Mean Euclidean distance between matching positions.
double tracking_error(const std::vector<env::Pose>& actual, const std::vector<env::Pose>& ideal);

/// A trained policy with everything needed to run it.
struct Policy {
    const model::ModelParams* params = nullptr;
    model::ModelConfig config;
    data::Normalization normalization;
};

struct DeployResult {
    data::Trajectory traj;          // steps actually executed, actions present
    std::vector<env::Pose> poses;   // T+1, padded with the last pose after a fall
    bool fell = false;
    std::size_t steps_run = 0;
    double tracking_error = 0.0;
    /// Every observation in the policy context came from the environment.
    bool context_observed_only = true;
};

/// Closed-loop rollout from rest: observe, ask the policy for the action
/// of this step, execute it. Aborts and flags a fall if |u| > 10.
DeployResult deploy(const Policy& policy, const env::Command& c, double duration, const env::EnvConfig& env_cfg);

/// Same protocol with the scripted expert in place of the model.
DeployResult deploy_expert(const env::Command& c, double duration, const env::EnvConfig& env_cfg);

struct CommandResult {
    env::Command command;
    double tracking_error = 0.0;
    bool fell = false;
    double final_x = 0.0, final_y = 0.0;
};

struct EvalReport {
    double tracking_error = 0.0;  // mean over episodes
    std::vector<CommandResult> per_command;
    std::size_t fall_count = 0;
    std::optional<double> prediction_error, prediction_error_obs, prediction_error_act;
    std::vector<std::pair<double, double>> phase_series;
};

inline constexpr double kEpisodeSeconds = 10.0;

/// Heading {0.35, 0.5, 0.7} m/s × yaw {0, ±0.1, ±0.2, ±0.4} rad/s, no lateral.
std::vector<env::Command> benchmark_grid();

EvalReport tracking_benchmark(const Policy& policy, const std::vector<env::Command>& commands, double duration,
                              const env::EnvConfig& env_cfg);
EvalReport expert_benchmark(const std::vector<env::Command>& commands, double duration,
                            const env::EnvConfig& env_cfg);

struct PredictionError {
    double obs = 0.0, act = 0.0;
    double total() const { return obs + act; }
};

/// Next-token MSE on normalized data over consecutive full windows of
/// the model context (a shorter tail window covers the remainder). State
/// and action parts are averaged separately and summed.
PredictionError prediction_error(const Policy& policy, const std::vector<data::Trajectory>& heldout);

struct Correlation {
    double r = 0.0;
    bool degenerate = false;  // a coordinate has zero variance
};

/// Pearson coefficient. Throws ContractError for fewer than two points.
Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

/// (prediction_error, tracking_error) points, one per variant.
Correlation correlation_study(const std::vector<std::pair<double, double>>& points);

/// Pairs (q[t], (q[t] − q[t−1]) / dt) of one gait joint for t ≥ 1.
std::vector<std::pair<double, double>> phase_portrait(const data::Trajectory& traj, std::size_t joint = 0);

struct UnseenReport {
    std::vector<CommandResult> backward, forward;
    double ratio = 0.0;  // mean backward error / mean forward error
};

/// Deploys with v_x ∈ {−0.3, −0.5} and the mirrored forward commands.
UnseenReport unseen_command_test(const Policy& policy, const env::EnvConfig& env_cfg);

// ---- report files ----

void write_report_json(const std::filesystem::path& path, const EvalReport& r);
void write_per_command_csv(const std::filesystem::path& path, const std::vector<CommandResult>& rows);
void write_series_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<std::pair<double, double>>& series);

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

/// Minimal standalone SVG line plot.
void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<PlotSeries>& series);

} // namespace ntp::eval
