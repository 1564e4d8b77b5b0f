#include <algorithm>
#include <cmath>

#include "ntp/ik.hpp"

namespace ntp::ik {

namespace {

struct Problem {
    std::size_t N = 0, J = 0;
    double dt = 0.0;
    Array trap;       // N × N: q = trap · q̇ + q[0]
    Array diff;       // (N−1) × N
    Array cum;        // J × J: φ = q · cum
    Array arm;        // J × K: x = cos(φ) · arm
    Array tx, ty;     // N × K, relative to the base
    Array conf;       // N × K
    Array neg_upper;  // J
    Array lower;      // J
    IKWeights w;
};

Problem setup(const KinematicChain& chain, const KeypointTrajectory& k, const IKWeights& w) {
    Problem p;
    p.N = k.frames();
    p.J = chain.joints();
    p.dt = k.dt;
    p.w = w;
    const std::size_t N = p.N, J = p.J;
    p.trap = Array({N, N});
    for (std::size_t t = 1; t < N; ++t) {
        p.trap.at(t, 0) = k.dt / 2;
        for (std::size_t s = 1; s < t; ++s) p.trap.at(t, s) = k.dt;
        p.trap.at(t, t) = k.dt / 2;
    }
    p.diff = Array({N > 1 ? N - 1 : 1, N});
    for (std::size_t t = 0; t + 1 < N; ++t) {
        p.diff.at(t, t) = -1.0;
        p.diff.at(t, t + 1) = 1.0;
    }
    p.cum = Array({J, J});
    p.arm = Array({J, J});
    for (std::size_t i = 0; i < J; ++i)
        for (std::size_t kk = i; kk < J; ++kk) {
            p.cum.at(i, kk) = 1.0;
            p.arm.at(i, kk) = chain.link_lengths[i];
        }
    p.tx = Array({N, J});
    p.ty = Array({N, J});
    for (std::size_t t = 0; t < N; ++t)
        for (std::size_t j = 0; j < J; ++j) {
            p.tx.at(t, j) = k.points.at(t, 2 * j) - chain.base.x;
            p.ty.at(t, j) = k.points.at(t, 2 * j + 1) - chain.base.y;
        }
    p.conf = k.confidence;
    p.neg_upper = Array({J});
    p.lower = Array({J});
    for (std::size_t j = 0; j < J; ++j) {
        p.neg_upper[j] = -chain.joint_upper[j];
        p.lower[j] = chain.joint_lower[j];
    }
    return p;
}

Var squared(const Var& x) { return mul(x, x); }

Var objective(const Problem& p, const Var& q0, const Var& qdot) {
    const Var q = add_rowwise(matmul(constant(p.trap), qdot), q0);
    const Var phi = matmul(q, constant(p.cum));
    const Var dx = sub(matmul(cos(phi), constant(p.arm)), constant(p.tx));
    const Var dy = sub(matmul(sin(phi), constant(p.arm)), constant(p.ty));
    Var cost = sum(mul(constant(p.conf), add(squared(dx), squared(dy))));
    // Regularizers see per-frame increments q̇·dt.
    const double dt2 = p.dt * p.dt;
    if (p.w.velocity > 0) cost = add(cost, scale(sum(squared(qdot)), p.w.velocity * dt2));
    if (p.w.smoothness > 0 && p.N > 1)
        cost = add(cost, scale(sum(squared(matmul(constant(p.diff), qdot))), p.w.smoothness * dt2));
    if (p.w.posture > 0) {
        const Var over = relu(add_rowwise(q, constant(p.neg_upper)));
        const Var under = relu(add_rowwise(scale(q, -1.0), constant(p.lower)));
        cost = add(cost, scale(add(sum(squared(over)), sum(squared(under))), p.w.posture));
    }
    return cost;
}

double value(const Problem& p, const Array& q0, const Array& qdot) {
    return objective(p, constant(q0), constant(qdot))->value.item();
}

void project(Array& qdot, double limit) {
    for (auto& v : qdot.data()) v = std::clamp(v, -limit, limit);
}

// Per-frame least squares for a starting posture; each frame warm-starts
// from the previous one.
Array initial_postures(const KinematicChain& chain, const KeypointTrajectory& k) {
    const std::size_t N = k.frames(), J = chain.joints();
    Array q({N, J});
    std::vector<double> cur(J, 0.0);
    for (std::size_t t = 0; t < N; ++t) {
        auto err = [&](const std::vector<double>& x) {
            const auto pts = fk(chain, x);
            double e = 0.0;
            for (std::size_t j = 0; j < J; ++j) {
                const auto target = k.at(t, j);
                const double c = k.confidence.at(t, j);
                e += c * (std::pow(pts[j].x - target.x, 2) + std::pow(pts[j].y - target.y, 2));
            }
            return e;
        };
        double e = err(cur), step = 0.5;
        for (int it = 0; it < 200 && step > 1e-12; ++it) {
            // Analytic gradient of the planar chain.
            const auto pts = fk(chain, cur);
            std::vector<double> g(J, 0.0);
            for (std::size_t j = 0; j < J; ++j) {
                const auto target = k.at(t, j);
                const double c = k.confidence.at(t, j);
                const double rx = pts[j].x - target.x, ry = pts[j].y - target.y;
                for (std::size_t i = 0; i <= j; ++i) {
                    const Point pivot = i == 0 ? chain.base : pts[i - 1];
                    // ∂p_j/∂q_i = perp(p_j − pivot_i)
                    g[i] += 2 * c * (rx * -(pts[j].y - pivot.y) + ry * (pts[j].x - pivot.x));
                }
            }
            std::vector<double> next(J);
            for (std::size_t i = 0; i < J; ++i)
                next[i] = std::clamp(cur[i] - step * g[i], chain.joint_lower[i], chain.joint_upper[i]);
            const double en = err(next);
            if (en < e) {
                cur = next;
                e = en;
                step *= 1.5;
            } else {
                step /= 2;
            }
        }
        for (std::size_t j = 0; j < J; ++j) q.at(t, j) = cur[j];
    }
    return q;
}

} // namespace

IKResult solve_ik(const KinematicChain& chain, const KeypointTrajectory& keypts, const IKWeights& weights,
                  const SolverConfig& solver) {
    chain.validate();
    keypts.validate();
    if (keypts.keypoints() != chain.joints())
        throw DimensionError("solve_ik: " + std::to_string(keypts.keypoints()) + " keypoints for a " +
                             std::to_string(chain.joints()) + "-link chain");
    if (weights.velocity < 0 || weights.smoothness < 0 || weights.posture < 0)
        throw ConfigError("IK weights must be non-negative");
    if (!(solver.initial_step > 0) || !(solver.rel_tol >= 0) || !(solver.step_growth >= 1)) throw ConfigError("invalid IK solver settings");

    const Problem prob = setup(chain, keypts, weights);
    const std::size_t N = prob.N, J = prob.J;

    // Start from per-frame postures and their central-difference velocities.
    const Array init = initial_postures(chain, keypts);
    Array q0({J});
    Array qdot({N, J});
    for (std::size_t j = 0; j < J; ++j) {
        q0[j] = init.at(0, j);
        for (std::size_t t = 0; t < N; ++t) {
            const std::size_t a = t == 0 ? 0 : t - 1, b = std::min(N - 1, t + 1);
            qdot.at(t, j) = (init.at(b, j) - init.at(a, j)) / (static_cast<double>(b - a) * prob.dt);
        }
    }
    project(qdot, chain.vel_limit);

    IKResult res;
    double cost = value(prob, q0, qdot);
    res.cost_history.push_back(cost);
    double step = solver.initial_step;
    for (std::size_t it = 0; it < solver.max_iterations; ++it) {
        const Var vq0 = param(q0), vqd = param(qdot);
        const Var c = objective(prob, vq0, vqd);
        backward(c);
        ++res.iterations;
        bool accepted = false;
        Array nq0, nqd;
        double ncost = cost;
        while (step > 1e-20) {
            nq0 = q0;
            nqd = qdot;
            for (std::size_t i = 0; i < nq0.size(); ++i) nq0[i] -= step * vq0->grad[i];
            for (std::size_t i = 0; i < nqd.size(); ++i) nqd[i] -= step * vqd->grad[i];
            project(nqd, chain.vel_limit);
            ncost = value(prob, nq0, nqd);
            if (std::isfinite(ncost) && ncost <= cost) {
                accepted = true;
                break;
            }
            step /= 2;
        }
        if (!accepted) {
            res.converged = true;  // no descent at any representable step
            break;
        }
        step *= solver.step_growth;
        const double rel = (cost - ncost) / std::max(std::abs(cost), 1e-300);
        q0 = std::move(nq0);
        qdot = std::move(nqd);
        cost = ncost;
        res.cost_history.push_back(cost);
        if (rel < solver.rel_tol) {
            res.converged = true;
            break;
        }
    }

    res.qdot = qdot;
    res.q = integrate_trapezoid(std::vector<double>(q0.data().begin(), q0.data().end()), qdot, prob.dt);
    res.cost = cost;
    double dist = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
        std::vector<double> qt(J);
        for (std::size_t j = 0; j < J; ++j) qt[j] = res.q.at(t, j);
        const auto pts = fk(chain, qt);
        for (std::size_t j = 0; j < J; ++j) {
            const auto target = keypts.at(t, j);
            dist += std::hypot(pts[j].x - target.x, pts[j].y - target.y);
        }
    }
    res.residual = dist / static_cast<double>(N * J);
    return res;
}

} // namespace ntp::ik
