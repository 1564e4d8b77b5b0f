#include <algorithm>

#include "ntp/evaluation.hpp"

namespace ntp::eval {

namespace {

template <typename ActionFn>
DeployResult run_loop(const env::Command& c, double duration, const env::EnvConfig& env_cfg, ActionFn&& choose) {
    env_cfg.validate();
    const std::size_t T = env::steps_for(duration, env_cfg.dt);
    DeployResult r;
    auto& tr = r.traj;
    tr.dt = env_cfg.dt;
    tr.command = c.as_array();
    tr.source = data::Source::expert;
    std::vector<double> obs_rows, act_rows;
    r.poses.reserve(T + 1);

    env::EnvState s;
    r.poses.push_back(s.pose);
    for (std::size_t i = 0; i < T; ++i) {
        const auto o = env::observe(s, c, env_cfg);
        const env::Action a = choose(s, o);
        obs_rows.insert(obs_rows.end(), o.begin(), o.end());
        act_rows.insert(act_rows.end(), a.begin(), a.end());
        ++r.steps_run;
        try {
            s = env::step(s, a, env_cfg);
        } catch (const NumericError&) {
            r.fell = true;
            break;
        }
        if (env::diverged(s)) {
            r.fell = true;
            break;
        }
        r.poses.push_back(s.pose);
    }
    while (r.poses.size() < T + 1) r.poses.push_back(r.poses.back());

    tr.obs = Array({r.steps_run, env::kObsDim}, std::move(obs_rows));
    tr.act = Array({r.steps_run, env::kActDim}, std::move(act_rows));
    tr.act_present.assign(r.steps_run, true);
    r.tracking_error = tracking_error(r.poses, ideal_trajectory(c, duration, env_cfg.dt));
    return r;
}

void check_policy(const Policy& p) {
    if (!p.params) throw ContractError("deploy without parameters");
    p.config.validate();
    if (p.config.m != env::kObsDim || p.config.n != env::kActDim)
        throw ConfigError("model dims (" + std::to_string(p.config.m) + ", " + std::to_string(p.config.n) +
                          ") do not match the environment (" + std::to_string(env::kObsDim) + ", " +
                          std::to_string(env::kActDim) + ")");
    if (p.normalization.obs_mean.size() != p.config.m || p.normalization.act_mean.size() != p.config.n)
        throw ConfigError("normalization dims do not match the model config");
    const auto expected = model::init_params(p.config, 0).named();
    const auto got = p.params->named();
    if (expected.size() != got.size()) throw ConfigError("parameters do not match the model config");
    for (std::size_t i = 0; i < got.size(); ++i)
        if (expected[i].first != got[i].first || expected[i].second->value.shape() != got[i].second->value.shape())
            throw ConfigError("parameter " + got[i].first + " does not match the model config");
}

} // namespace

DeployResult deploy(const Policy& policy, const env::Command& c, double duration, const env::EnvConfig& env_cfg) {
    check_policy(policy);
    model::PolicyContext ctx(policy.config.context);
    bool observed_only = true;
    auto r = run_loop(c, duration, env_cfg, [&](const env::EnvState&, const env::Observation& o) {
        ctx.push(std::vector<double>(o.begin(), o.end()));
        const auto a = model::predict_next_action(*policy.params, policy.config, policy.normalization, ctx);
        ctx.set_last_action(a);
        observed_only = observed_only && std::equal(o.begin(), o.end(), ctx.entries().back().obs.begin());
        env::Action out{};
        std::copy(a.begin(), a.end(), out.begin());
        return out;
    });
    r.context_observed_only = observed_only;
    return r;
}

DeployResult deploy_expert(const env::Command& c, double duration, const env::EnvConfig& env_cfg) {
    return run_loop(c, duration, env_cfg,
                    [&](const env::EnvState& s, const env::Observation&) { return env::expert_action(s, c, env_cfg); });
}

std::vector<env::Command> benchmark_grid() {
    std::vector<env::Command> out;
    for (double v : {0.35, 0.5, 0.7})
        for (double w : {0.0, 0.1, -0.1, 0.2, -0.2, 0.4, -0.4}) out.push_back({v, 0.0, w});
    return out;
}

namespace {

EvalReport summarize(const std::vector<env::Command>& commands, const std::vector<DeployResult>& runs) {
    EvalReport rep;
    double s = 0.0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        rep.per_command.push_back({commands[i], r.tracking_error, r.fell, r.poses.back().x, r.poses.back().y});
        s += r.tracking_error;
        rep.fall_count += r.fell ? 1 : 0;
    }
    rep.tracking_error = runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
    return rep;
}

} // namespace

EvalReport tracking_benchmark(const Policy& policy, const std::vector<env::Command>& commands, double duration,
                              const env::EnvConfig& env_cfg) {
    std::vector<DeployResult> runs;
    for (const auto& c : commands) runs.push_back(deploy(policy, c, duration, env_cfg));
    return summarize(commands, runs);
}

EvalReport expert_benchmark(const std::vector<env::Command>& commands, double duration,
                            const env::EnvConfig& env_cfg) {
    std::vector<DeployResult> runs;
    for (const auto& c : commands) runs.push_back(deploy_expert(c, duration, env_cfg));
    return summarize(commands, runs);
}

UnseenReport unseen_command_test(const Policy& policy, const env::EnvConfig& env_cfg) {
    UnseenReport rep;
    double b = 0.0, f = 0.0;
    for (double v : {-0.3, -0.5}) {
        const env::Command bc{v, 0.0, 0.0}, fc{-v, 0.0, 0.0};
        const auto rb = deploy(policy, bc, kEpisodeSeconds, env_cfg);
        const auto rf = deploy(policy, fc, kEpisodeSeconds, env_cfg);
        rep.backward.push_back({bc, rb.tracking_error, rb.fell, rb.poses.back().x, rb.poses.back().y});
        rep.forward.push_back({fc, rf.tracking_error, rf.fell, rf.poses.back().x, rf.poses.back().y});
        b += rb.tracking_error;
        f += rf.tracking_error;
    }
    rep.ratio = f > 0 ? b / f : 0.0;
    return rep;
}

} // namespace ntp::eval
