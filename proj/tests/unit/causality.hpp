#pragma once

// Token-level causality probe: perturbs one input token at a time and
// reports whether any prediction read at an earlier token changed.

#include <random>
#include <string>

#include "ntp/model.hpp"

namespace causality {

/// Prediction values read at token k, in the model's interleaved order.
inline std::vector<double> read_at(const ntp::model::Predictions& p, const ntp::model::ModelConfig& cfg,
                                   std::size_t k) {
    auto take = [](const ntp::Var& v, std::size_t r) {
        const auto c = v->value.cols();
        auto s = v->value.data().subspan(r * c, c);
        return std::vector<double>(s.begin(), s.end());
    };
    if (cfg.mode == ntp::data::TokenMode::concat) {
        auto o = take(p.obs, k);
        auto a = take(p.act, k);
        o.insert(o.end(), a.begin(), a.end());
        return o;
    }
    const std::size_t i = k / 2;
    const bool obs_token = k % 2 == 0;
    // Aligned heads read the same-modality token; non-aligned swap.
    const bool read_obs_head = cfg.aligned ? obs_token : !obs_token;
    return take(read_obs_head ? p.obs : p.act, i);
}

/// Perturbs every token of `seq` in turn; returns the number of
/// (perturbed token, earlier token) pairs whose predictions changed.
inline std::size_t violations(const ntp::model::ModelParams& params, const ntp::model::ModelConfig& cfg,
                              const ntp::data::TokenSequence& seq, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    const auto base = ntp::model::forward(params, cfg, seq);
    const std::size_t tokens = seq.token_count();
    std::size_t bad = 0;
    for (std::size_t j = 0; j < tokens; ++j) {
        auto pert = seq;
        const std::size_t step = cfg.mode == ntp::data::TokenMode::concat ? j : j / 2;
        const bool obs_part = cfg.mode == ntp::data::TokenMode::concat || j % 2 == 0;
        const bool act_part = cfg.mode == ntp::data::TokenMode::concat || j % 2 == 1;
        if (obs_part)
            for (std::size_t c = 0; c < cfg.m; ++c) pert.obs.at(step, c) += nd(rng);
        if (act_part) {
            for (std::size_t c = 0; c < cfg.n; ++c) pert.act.at(step, c) += nd(rng);
            pert.act_masked[step] = false;
        }
        const auto out = ntp::model::forward(params, cfg, pert);
        for (std::size_t k = 0; k < j; ++k)
            if (read_at(out, cfg, k) != read_at(base, cfg, k)) ++bad;
    }
    return bad;
}

} // namespace causality
