#include <cmath>

#include "ntp/trajdata.hpp"

namespace ntp::data {

std::string to_string(Source s) {
    switch (s) {
    case Source::expert: return "expert";
    case Source::actionfree: return "actionfree";
    case Source::retargeted: return "retargeted";
    }
    return "?";
}

Source source_from_string(const std::string& s) {
    for (auto src : kAllSources)
        if (to_string(src) == s) return src;
    throw DataError("unknown trajectory source '" + s + "'");
}

void Trajectory::validate() const {
    const std::size_t T = length();
    if (obs.rank() != 2 || act.rank() != 2) throw DataError("trajectory obs/act must be matrices");
    if (T < 2) throw DataError("trajectory has " + std::to_string(T) + " steps, need at least 2");
    if (act.dim(0) != T || act_present.size() != T)
        throw DataError("trajectory rows disagree: obs " + std::to_string(T) + ", act " + std::to_string(act.dim(0)) +
                        ", flags " + std::to_string(act_present.size()));
    if (!(dt > 0.0)) throw DataError("trajectory dt must be positive");
    if (!obs.all_finite()) throw DataError("trajectory observations contain non-finite values");
    if (!act.all_finite()) throw DataError("trajectory actions contain non-finite values");
    const std::size_t n = act_dim();
    for (std::size_t i = 0; i < T; ++i) {
        const bool want = source == Source::expert;
        if (act_present[i] != want)
            throw DataError("step " + std::to_string(i) + " of a " + to_string(source) +
                            " trajectory has act_present=" + (act_present[i] ? "true" : "false"));
        if (!act_present[i])
            for (std::size_t j = 0; j < n; ++j)
                if (act.at(i, j) != 0.0)
                    throw DataError("masked action row " + std::to_string(i) + " is not a zero placeholder");
    }
}

Trajectory make_action_free(double dt, std::array<double, 3> command, Array obs, std::size_t act_dim, Source source) {
    Trajectory t;
    t.dt = dt;
    t.command = command;
    const std::size_t T = obs.dim(0);
    t.obs = std::move(obs);
    t.act = Array({T, act_dim}, 0.0);
    t.act_present.assign(T, false);
    t.source = source;
    return t;
}

namespace {

void accumulate_stats(const Array& rows, const std::vector<bool>* keep, std::vector<double>& sum,
                      std::vector<double>& sq, std::size_t& count) {
    const std::size_t c = rows.dim(1);
    for (std::size_t i = 0; i < rows.dim(0); ++i) {
        if (keep && !(*keep)[i]) continue;
        for (std::size_t j = 0; j < c; ++j) {
            sum[j] += rows.at(i, j);
            sq[j] += rows.at(i, j) * rows.at(i, j);
        }
        ++count;
    }
}

void finish_stats(const std::vector<double>& sum, const std::vector<double>& sq, std::size_t count,
                  std::vector<double>& mean, std::vector<double>& std) {
    const std::size_t c = sum.size();
    mean.assign(c, 0.0);
    std.assign(c, 1.0);
    if (count == 0) return;
    for (std::size_t j = 0; j < c; ++j) {
        mean[j] = sum[j] / static_cast<double>(count);
        const double var = std::max(0.0, sq[j] / static_cast<double>(count) - mean[j] * mean[j]);
        std[j] = std::max(kMinStd, std::sqrt(var));
    }
}

std::vector<double> affine(std::span<const double> x, const std::vector<double>& mean, const std::vector<double>& std,
                           bool forward) {
    if (x.size() != mean.size())
        throw DimensionError("normalization expects " + std::to_string(mean.size()) + " features, got " +
                             std::to_string(x.size()));
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
        out[j] = forward ? (x[j] - mean[j]) / std[j] : x[j] * std[j] + mean[j];
    return out;
}

} // namespace

Normalization compute_normalization(const std::vector<Trajectory>& trajs) {
    if (trajs.empty()) throw ContractError("normalization over an empty trajectory set");
    const std::size_t m = trajs.front().obs_dim(), n = trajs.front().act_dim();
    std::vector<double> os(m), oq(m), as(n), aq(n);
    std::size_t oc = 0, ac = 0;
    for (const auto& t : trajs) {
        accumulate_stats(t.obs, nullptr, os, oq, oc);
        accumulate_stats(t.act, &t.act_present, as, aq, ac);
    }
    Normalization norm;
    finish_stats(os, oq, oc, norm.obs_mean, norm.obs_std);
    finish_stats(as, aq, ac, norm.act_mean, norm.act_std);
    return norm;
}

std::vector<double> normalize_obs(std::span<const double> obs, const Normalization& norm) {
    return affine(obs, norm.obs_mean, norm.obs_std, true);
}
std::vector<double> denormalize_obs(std::span<const double> obs, const Normalization& norm) {
    return affine(obs, norm.obs_mean, norm.obs_std, false);
}
std::vector<double> normalize_act(std::span<const double> act, const Normalization& norm) {
    return affine(act, norm.act_mean, norm.act_std, true);
}
std::vector<double> denormalize_act(std::span<const double> act, const Normalization& norm) {
    return affine(act, norm.act_mean, norm.act_std, false);
}

Trajectory normalize(const Trajectory& traj, const Normalization& norm) {
    if (traj.obs_dim() != norm.obs_mean.size() || traj.act_dim() != norm.act_mean.size())
        throw DimensionError("trajectory dims (" + std::to_string(traj.obs_dim()) + ", " +
                             std::to_string(traj.act_dim()) + ") do not match normalization (" +
                             std::to_string(norm.obs_mean.size()) + ", " + std::to_string(norm.act_mean.size()) + ")");
    Trajectory out = traj;
    const std::size_t m = traj.obs_dim(), n = traj.act_dim();
    for (std::size_t i = 0; i < traj.length(); ++i) {
        auto o = normalize_obs(traj.obs.data().subspan(i * m, m), norm);
        std::copy(o.begin(), o.end(), out.obs.data().begin() + static_cast<std::ptrdiff_t>(i * m));
        if (!traj.act_present[i]) continue;
        auto a = normalize_act(traj.act.data().subspan(i * n, n), norm);
        std::copy(a.begin(), a.end(), out.act.data().begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return out;
}

} // namespace ntp::data
