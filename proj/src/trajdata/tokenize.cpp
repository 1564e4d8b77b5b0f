#include "ntp/trajdata.hpp"

namespace ntp::data {

std::string to_string(TokenMode m) { return m == TokenMode::concat ? "concat" : "separate"; }

TokenMode token_mode_from_string(const std::string& s) {
    if (s == "concat") return TokenMode::concat;
    if (s == "separate") return TokenMode::separate;
    throw ConfigError("unknown token mode '" + s + "'");
}

Array TokenSequence::concat_tokens() const {
    const std::size_t len = length(), m = obs.dim(1), n = act.dim(1);
    Array out({len, m + n});
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < m; ++j) out.at(i, j) = obs.at(i, j);
        for (std::size_t j = 0; j < n; ++j) out.at(i, m + j) = act.at(i, j);
    }
    return out;
}

TokenSequence tokenize(const Trajectory& traj, Window window, TokenMode mode, bool aligned) {
    if (window.len < 2) throw RangeError("token window needs at least 2 steps, got " + std::to_string(window.len));
    if (window.start + window.len > traj.length())
        throw RangeError("window [" + std::to_string(window.start) + ", " + std::to_string(window.start + window.len) +
                         ") exceeds trajectory of " + std::to_string(traj.length()) + " steps");
    if (mode == TokenMode::concat && !aligned)
        throw ConfigError("non-aligned prediction is only defined for separate tokens");

    const std::size_t len = window.len, m = traj.obs_dim(), n = traj.act_dim();
    TokenSequence seq;
    seq.mode = mode;
    seq.aligned = aligned;
    seq.obs = Array({len, m});
    seq.act = Array({len, n});
    seq.act_masked.resize(len);
    seq.target_obs = Array({len, m});
    seq.target_act = Array({len, n});
    seq.loss_mask_obs = Array({len, m});
    seq.loss_mask_act = Array({len, n});

    auto copy_row = [](const Array& src, std::size_t r, Array& dst, std::size_t d) {
        const std::size_t c = src.dim(1);
        for (std::size_t j = 0; j < c; ++j) dst.at(d, j) = src.at(r, j);
    };
    auto fill_row = [](Array& dst, std::size_t r, double v) {
        for (std::size_t j = 0; j < dst.dim(1); ++j) dst.at(r, j) = v;
    };

    for (std::size_t i = 0; i < len; ++i) {
        const std::size_t t = window.start + i;
        copy_row(traj.obs, t, seq.obs, i);
        copy_row(traj.act, t, seq.act, i);
        seq.act_masked[i] = !traj.act_present[t];

        const bool has_next = i + 1 < len;
        if (has_next) {
            copy_row(traj.obs, t + 1, seq.target_obs, i);
            fill_row(seq.loss_mask_obs, i, 1.0);
        }
        // Aligned: the action output at step i regresses a_{i+1}; non-aligned
        // reads it off the observation token o_i, so it regresses a_i.
        const std::size_t act_src = aligned ? t + 1 : t;
        if (aligned ? has_next : true) {
            copy_row(traj.act, act_src, seq.target_act, i);
            if (traj.act_present[act_src]) fill_row(seq.loss_mask_act, i, 1.0);
        }
    }
    return seq;
}

Window sample_window(const Trajectory& traj, std::size_t len, std::mt19937_64& rng) {
    if (len > traj.length())
        throw RangeError("window of " + std::to_string(len) + " steps does not fit trajectory of " +
                         std::to_string(traj.length()));
    std::uniform_int_distribution<std::size_t> pick(0, traj.length() - len);
    return {pick(rng), len};
}

} // namespace ntp::data
