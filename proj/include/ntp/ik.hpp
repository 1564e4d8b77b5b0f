#pragma once

// Planar kinematic chains and trajectory-level inverse kinematics that turn
// keypoint tracks into action-free robot trajectories.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ntp/numcore.hpp"
#include "ntp/trajdata.hpp"

namespace ntp::ik {

struct Point {
    double x = 0.0, y = 0.0;
};

struct KinematicChain {
    std::vector<double> link_lengths;
    std::vector<double> joint_lower, joint_upper;  // rad
    double vel_limit = 5.0;                        // rad/s, every joint
    Point base;

    std::size_t joints() const { return link_lengths.size(); }
    double total_length() const;
    /// Throws ConfigError for empty or non-positive links, mismatched limit
    /// vectors, lower ≥ upper or a non-positive velocity limit.
    void validate() const;
};

/// The surrogate robot's two gait joints.
KinematicChain robot_chain();
/// A differently proportioned two-link "human" leg.
KinematicChain human_chain();

/// Link-end positions; joint angles accumulate along the chain.
std::vector<Point> fk(const KinematicChain& chain, const std::vector<double>& q);

/// N frames of K keypoints in the chain's base frame, with per-keypoint
/// confidences and an optional root track (x, y, heading) per frame.
struct KeypointTrajectory {
    double dt = 0.05;
    Array points;      // N × 2K, (x1, y1, x2, y2, …)
    Array confidence;  // N × K, in [0, 1]
    std::optional<Array> root;  // N × 3

    std::size_t frames() const { return points.rank() == 2 ? points.dim(0) : 0; }
    std::size_t keypoints() const { return points.rank() == 2 ? points.dim(1) / 2 : 0; }
    Point at(std::size_t frame, std::size_t k) const { return {points.at(frame, 2 * k), points.at(frame, 2 * k + 1)}; }
    /// Throws DataError on non-finite values, N < 2, bad shapes or
    /// confidences outside [0, 1].
    void validate() const;
};

struct IKWeights {
    double velocity = 0.01;    // λ_v
    double smoothness = 0.1;   // λ_s
    double posture = 100.0;    // joint-box penalty
};

struct SolverConfig {
    double initial_step = 0.1;
    double step_growth = 2.0;  // after each accepted step; halved on any increase
    std::size_t max_iterations = 2000;
    double rel_tol = 1e-8;
};

struct IKResult {
    Array q;     // N × d_q
    Array qdot;  // N × d_q
    double cost = 0.0;
    double residual = 0.0;  // mean keypoint distance, m
    bool converged = false;
    std::size_t iterations = 0;
    /// Objective after every accepted iteration, starting with the initial guess.
    std::vector<double> cost_history;
};

/// Minimizes the confidence-weighted keypoint error plus velocity and
/// smoothness regularizers over q[0] and q̇[0..N-1]. The regularizers are
/// λ_v‖q̇[t]·dt‖² and λ_s‖(q̇[t+1] − q̇[t])·dt‖². Later postures follow
/// from the trapezoidal rule, so q[t+1] − q[t] = (q̇[t+1] + q̇[t])·dt/2
/// holds by construction. Velocities are projected onto the box after each
/// step; joint limits enter as a quadratic penalty.
IKResult solve_ik(const KinematicChain& chain, const KeypointTrajectory& keypts, const IKWeights& weights = {},
                  const SolverConfig& solver = {});

/// Postures from (q[0], q̇) by the trapezoidal rule.
Array integrate_trapezoid(const std::vector<double>& q0, const Array& qdot, double dt);

struct RetargetConfig {
    IKWeights weights;
    SolverConfig solver;
};

struct RetargetResult {
    data::Trajectory traj;
    IKResult ik;
};

/// Scales keypoints (and root translation) by the ratio of total limb
/// lengths, solves IK on the robot chain and assembles an action-free
/// trajectory in the surrogate's observation layout: base velocity from
/// root finite differences (zero without a root track), joint angles and
/// their backward differences, and the mean base velocity as the command.
RetargetResult retarget(const KinematicChain& source, const KinematicChain& robot, const KeypointTrajectory& keypts,
                        const RetargetConfig& cfg = {});

/// Results whose IK residual is ≤ threshold, in order. Throws ConfigError
/// for a negative threshold.
std::vector<RetargetResult> filter_by_residual(const std::vector<RetargetResult>& results, double threshold);

/// Synthetic keypoints from `chain` walking a gait-like joint pattern with a
/// root moving at `root_velocity` (body frame). Gaussian noise of `noise`
/// metres is added to every coordinate.
struct SyntheticMotion {
    std::size_t frames = 200;
    double dt = 0.05;
    double frequency = 0.75;  // Hz
    std::array<double, 2> amplitude{0.3, 0.25};
    std::array<double, 3> root_velocity{0.5, 0.0, 0.0};
    double noise = 0.0;
};

struct SyntheticKeypoints {
    KeypointTrajectory keypoints;
    Array q_true;  // N × d_q
};

SyntheticKeypoints synthesize_keypoints(const KinematicChain& chain, const SyntheticMotion& motion, std::uint64_t seed);

// ---- keypoint CSV ----
// Header `t,p1x,p1y,…,pKx,pKy`, optionally followed by `c1,…,cK` and by
// `rx,ry,rtheta`; one row per frame at a uniform time step.

void write_keypoint_csv(const std::filesystem::path& path, const KeypointTrajectory& k);
KeypointTrajectory read_keypoint_csv(const std::filesystem::path& path);

} // namespace ntp::ik
