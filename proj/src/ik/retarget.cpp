#include <cmath>

#include "ntp/env.hpp"
#include "ntp/ik.hpp"

namespace ntp::ik {

RetargetResult retarget(const KinematicChain& source, const KinematicChain& robot, const KeypointTrajectory& keypts,
                        const RetargetConfig& cfg) {
    source.validate();
    robot.validate();
    keypts.validate();
    if (robot.joints() != 2)
        throw ConfigError("retarget: the robot chain must have the surrogate's 2 gait joints, got " +
                          std::to_string(robot.joints()));
    if (keypts.keypoints() != source.joints())
        throw DimensionError("retarget: " + std::to_string(keypts.keypoints()) + " keypoints for a " +
                             std::to_string(source.joints()) + "-link source chain");
    if (source.joints() != robot.joints())
        throw ConfigError("retarget: source and robot chains differ in joint count");

    const double scale = robot.total_length() / source.total_length();
    KeypointTrajectory scaled = keypts;
    for (std::size_t t = 0; t < keypts.frames(); ++t)
        for (std::size_t j = 0; j < keypts.keypoints(); ++j) {
            const auto p = keypts.at(t, j);
            scaled.points.at(t, 2 * j) = robot.base.x + scale * (p.x - source.base.x);
            scaled.points.at(t, 2 * j + 1) = robot.base.y + scale * (p.y - source.base.y);
        }
    if (scaled.root)
        for (std::size_t t = 0; t < keypts.frames(); ++t) {
            scaled.root->at(t, 0) *= scale;
            scaled.root->at(t, 1) *= scale;
        }

    RetargetResult out;
    out.ik = solve_ik(robot, scaled, cfg.weights, cfg.solver);

    const std::size_t N = keypts.frames();
    const double dt = keypts.dt;
    // Body-frame base velocity in the surrogate's convention: the move from
    // frame t−1 to t is u_t rotated by the heading at t−1.
    Array vel({N, 3}, 0.0);
    if (scaled.root && N > 1) {
        const Array& r = *scaled.root;
        for (std::size_t t = 1; t < N; ++t) {
            const double dx = r.at(t, 0) - r.at(t - 1, 0), dy = r.at(t, 1) - r.at(t - 1, 1);
            const double th = r.at(t - 1, 2);
            const double c = std::cos(th), s = std::sin(th);
            vel.at(t, 0) = (c * dx + s * dy) / dt;
            vel.at(t, 1) = (-s * dx + c * dy) / dt;
            vel.at(t, 2) = env::wrap_angle(r.at(t, 2) - r.at(t - 1, 2)) / dt;
        }
        for (std::size_t i = 0; i < 3; ++i) vel.at(0, i) = vel.at(1, i);
    }
    std::array<double, 3> cmd{};
    for (std::size_t t = 0; t < N; ++t)
        for (std::size_t i = 0; i < 3; ++i) cmd[i] += vel.at(t, i) / static_cast<double>(N);

    Array obs({N, env::kObsDim});
    const auto& q = out.ik.q;
    for (std::size_t t = 0; t < N; ++t) {
        const std::size_t prev = t == 0 ? 0 : t - 1;
        for (std::size_t i = 0; i < 3; ++i) obs.at(t, i) = vel.at(t, i);
        for (std::size_t j = 0; j < 2; ++j) {
            obs.at(t, 3 + j) = q.at(t, j);
            obs.at(t, 5 + j) = (q.at(t, j) - q.at(prev, j)) / dt;
        }
        for (std::size_t i = 0; i < 3; ++i) obs.at(t, 7 + i) = cmd[i];
    }
    out.traj = data::make_action_free(dt, cmd, std::move(obs), env::kActDim, data::Source::retargeted);
    return out;
}

std::vector<RetargetResult> filter_by_residual(const std::vector<RetargetResult>& results, double threshold) {
    if (!(threshold >= 0)) throw ConfigError("residual threshold must be non-negative");
    std::vector<RetargetResult> out;
    for (const auto& r : results)
        if (r.ik.residual <= threshold) out.push_back(r);
    return out;
}

} // namespace ntp::ik
