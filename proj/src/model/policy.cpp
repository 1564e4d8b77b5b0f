#include "ntp/model.hpp"

namespace ntp::model {

using data::TokenSequence;

PolicyContext::PolicyContext(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractError("policy context capacity must be positive");
}

void PolicyContext::push(std::vector<double> obs, std::optional<std::vector<double>> act) {
    entries_.push_back({std::move(obs), std::move(act)});
    while (entries_.size() > capacity_) entries_.pop_front();
}

void PolicyContext::set_last_action(std::vector<double> act) {
    if (entries_.empty()) throw ContractError("set_last_action on an empty policy context");
    entries_.back().act = std::move(act);
}

namespace {

struct Step {
    std::vector<double> obs;  // normalized
    std::optional<std::vector<double>> act;
};

TokenSequence build_sequence(const ModelConfig& cfg, const std::vector<Step>& steps) {
    TokenSequence s;
    s.mode = cfg.mode;
    s.aligned = cfg.aligned;
    const std::size_t len = steps.size();
    s.obs = Array({len, cfg.m});
    s.act = Array({len, cfg.n}, 0.0);
    s.act_masked.assign(len, false);
    for (std::size_t i = 0; i < len; ++i) {
        if (steps[i].obs.size() != cfg.m)
            throw DimensionError("observation of size " + std::to_string(steps[i].obs.size()) + ", model expects " +
                                 std::to_string(cfg.m));
        std::copy(steps[i].obs.begin(), steps[i].obs.end(), s.obs.data().begin() + static_cast<std::ptrdiff_t>(i * cfg.m));
        if (steps[i].act) {
            if (steps[i].act->size() != cfg.n)
                throw DimensionError("action of size " + std::to_string(steps[i].act->size()) + ", model expects " +
                                     std::to_string(cfg.n));
            std::copy(steps[i].act->begin(), steps[i].act->end(),
                      s.act.data().begin() + static_cast<std::ptrdiff_t>(i * cfg.n));
        } else {
            s.act_masked[i] = true;
        }
    }
    return s;
}

std::vector<double> row(const Var& v, std::size_t r) {
    const auto cols = v->value.cols();
    auto d = v->value.data().subspan(r * cols, cols);
    return {d.begin(), d.end()};
}

} // namespace

std::vector<double> predict_next_action(const ModelParams& p, const ModelConfig& cfg, const data::Normalization& norm,
                                        const PolicyContext& ctx) {
    if (ctx.empty()) throw ContractError("predict_next_action needs a nonempty history");
    std::vector<Step> steps;
    const std::size_t keep = std::min(ctx.size(), cfg.context);
    for (std::size_t i = ctx.size() - keep; i < ctx.size(); ++i) {
        const auto& e = ctx.entries()[i];
        Step s{data::normalize_obs(e.obs, norm), std::nullopt};
        if (e.act) s.act = data::normalize_act(*e.act, norm);
        steps.push_back(std::move(s));
    }

    std::vector<double> z;
    if (!steps.back().act) {
        if (steps.size() == 1) {
            const auto out = forward(p, cfg, build_sequence(cfg, steps));
            return data::denormalize_act(row(out.act, 0), norm);
        }
        steps.pop_back();
    }
    if (cfg.aligned) {
        const auto out = forward(p, cfg, build_sequence(cfg, steps));
        z = row(out.act, steps.size() - 1);
    } else {
        // Predict the next observation, then read the action head at it.
        const auto first = forward(p, cfg, build_sequence(cfg, steps));
        steps.push_back({row(first.obs, steps.size() - 1), std::nullopt});
        if (steps.size() > cfg.context) steps.erase(steps.begin());
        const auto second = forward(p, cfg, build_sequence(cfg, steps));
        z = row(second.act, steps.size() - 1);
    }
    return data::denormalize_act(z, norm);
}

} // namespace ntp::model
