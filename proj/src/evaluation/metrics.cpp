#include <cmath>

#include "ntp/evaluation.hpp"

namespace ntp::eval {

std::vector<env::Pose> ideal_trajectory(const env::Command& c, double duration, double dt) {
    const std::size_t T = env::steps_for(duration, dt);
    std::vector<env::Pose> out;
    out.reserve(T + 1);
    for (std::size_t i = 0; i <= T; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double th = c.omega * t;
        double s, one_minus_c;  // ∫₀ᵗ cos, ∫₀ᵗ sin
        if (c.omega == 0.0) {
            s = t;
            one_minus_c = 0.0;
        } else {
            const double h = std::sin(0.5 * th);
            s = std::sin(th) / c.omega;
            one_minus_c = 2.0 * h * h / c.omega;
        }
        out.push_back({c.vx * s - c.vy * one_minus_c, c.vx * one_minus_c + c.vy * s, th});
    }
    return out;
}

double tracking_error(const std::vector<env::Pose>& actual, const std::vector<env::Pose>& ideal) {
    if (actual.size() != ideal.size())
        throw DimensionError("tracking_error: " + std::to_string(actual.size()) + " actual poses vs " +
                             std::to_string(ideal.size()) + " ideal");
    if (actual.empty()) throw ContractError("tracking_error on empty trajectories");
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i)
        s += std::hypot(actual[i].x - ideal[i].x, actual[i].y - ideal[i].y);
    return s / static_cast<double>(actual.size());
}

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("pearson: unequal sample sizes");
    if (x.size() < 2) throw ContractError("pearson needs at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return {0.0, true};
    return {sxy / std::sqrt(sxx * syy), false};
}

Correlation correlation_study(const std::vector<std::pair<double, double>>& points) {
    std::vector<double> x, y;
    for (const auto& [p, t] : points) {
        x.push_back(p);
        y.push_back(t);
    }
    return pearson(x, y);
}

std::vector<std::pair<double, double>> phase_portrait(const data::Trajectory& traj, std::size_t joint) {
    if (traj.length() < 2) throw ContractError("phase_portrait needs at least two steps");
    const std::size_t col = 3 + joint;
    if (col >= traj.obs_dim()) throw DimensionError("phase_portrait: no joint " + std::to_string(joint));
    std::vector<std::pair<double, double>> out;
    for (std::size_t t = 1; t < traj.length(); ++t) {
        const double q = traj.obs.at(t, col);
        out.emplace_back(q, (q - traj.obs.at(t - 1, col)) / traj.dt);
    }
    return out;
}

PredictionError prediction_error(const Policy& policy, const std::vector<data::Trajectory>& heldout) {
    if (!policy.params) throw ContractError("prediction_error without parameters");
    const auto& cfg = policy.config;
    double so = 0, no = 0, sa = 0, na = 0;
    for (const auto& raw : heldout) {
        const auto t = data::normalize(raw, policy.normalization);
        const std::size_t T = t.length();
        for (std::size_t start = 0; start + 1 < T; start += cfg.context) {
            const std::size_t len = std::min(cfg.context, T - start);
            if (len < 2) break;
            const auto seq = data::tokenize(t, {start, len}, cfg.mode, cfg.aligned);
            const auto out = model::forward(*policy.params, cfg, seq);
            const auto& po = out.obs->value;
            const auto& pa = out.act->value;
            for (std::size_t i = 0; i < po.size(); ++i) {
                if (seq.loss_mask_obs[i] == 0.0) continue;
                const double d = po[i] - seq.target_obs[i];
                so += d * d;
                no += 1;
            }
            for (std::size_t i = 0; i < pa.size(); ++i) {
                if (seq.loss_mask_act[i] == 0.0) continue;
                const double d = pa[i] - seq.target_act[i];
                sa += d * d;
                na += 1;
            }
        }
    }
    if (no == 0 && na == 0) throw ContractError("prediction_error: held-out set has no scorable steps");
    return {no > 0 ? so / no : 0.0, na > 0 ? sa / na : 0.0};
}

} // namespace ntp::eval
