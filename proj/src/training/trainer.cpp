#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ntp/training.hpp"

namespace ntp::training {

using data::Source;
using data::TokenSequence;
using data::Trajectory;
using model::ModelConfig;
using model::ModelParams;

std::string to_string(Regime r) {
    switch (r) {
    case Regime::joint: return "joint";
    case Regime::staged: return "staged";
    case Regime::complete_only: return "complete-only";
    case Regime::action_only_loss: return "action-only-loss";
    }
    return "?";
}

Regime regime_from_string(const std::string& s) {
    for (auto r : {Regime::joint, Regime::staged, Regime::complete_only, Regime::action_only_loss})
        if (to_string(r) == s) return r;
    throw ConfigError("unknown training regime '" + s + "'");
}

void TrainConfig::validate(const ModelConfig& mcfg) const {
    if (batch == 0 || steps == 0) throw ConfigError("batch size and step count must be positive");
    if (window < 2) throw ConfigError("training window must be at least 2 steps");
    if (window > mcfg.context)
        throw ConfigError("training window " + std::to_string(window) + " exceeds model context " +
                          std::to_string(mcfg.context));
    if (!(lr > 0) || !(lr_floor >= 0 && lr_floor <= 1)) throw ConfigError("invalid learning-rate schedule");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0))
        throw ConfigError("invalid Adam moments");
    if (weight_decay < 0 || clip_norm < 0) throw ConfigError("weight decay and clip norm must be non-negative");
    for (const auto& [src, w] : source_weights)
        if (!(w >= 0)) throw ConfigError("source weight for " + data::to_string(src) + " must be non-negative");
    if (checkpoint_every > 0 && checkpoint_path.empty())
        throw ConfigError("checkpoint_every set without a checkpoint path");
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
    if (step < cfg.warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup);
    const std::size_t decay_steps = cfg.steps > cfg.warmup ? cfg.steps - cfg.warmup : 1;
    const double progress =
        std::min(1.0, static_cast<double>(step - cfg.warmup) / static_cast<double>(std::max<std::size_t>(1, decay_steps - 1)));
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return cfg.lr * (cfg.lr_floor + (1.0 - cfg.lr_floor) * cosine);
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write training log " + path.string());
    out.precision(17);
    out << "step,loss,loss_obs,loss_act,lr,empty_mask,stage\n";
    for (const auto& r : records) {
        const int stage = stage_boundary ? (r.step < *stage_boundary ? 1 : 2) : 1;
        out << r.step << ',' << r.loss << ',' << r.loss_obs << ',' << r.loss_act << ',' << r.lr << ','
            << (r.empty_mask ? 1 : 0) << ',' << stage << '\n';
    }
}

// ---- loss ----

namespace {

double masked_mean(const Array& pred, const Array& target, const Array& mask, double& count) {
    double s = 0.0;
    count = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask[i] == 0.0) continue;
        const double d = pred[i] - target[i];
        s += d * d;
        count += 1.0;
    }
    return count > 0 ? s / count : 0.0;
}

Array stack_rows(const std::vector<const TokenSequence*>& batch, Array TokenSequence::*field) {
    const auto& first = (*batch.front()).*field;
    Array out({first.dim(0) * batch.size(), first.dim(1)});
    std::size_t off = 0;
    for (const auto* s : batch) {
        const auto& a = (*s).*field;
        std::copy(a.data().begin(), a.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += a.size();
    }
    return out;
}

Array hconcat(const Array& a, const Array& b) {
    Array out({a.dim(0), a.dim(1) + b.dim(1)});
    for (std::size_t r = 0; r < a.dim(0); ++r) {
        for (std::size_t c = 0; c < a.dim(1); ++c) out.at(r, c) = a.at(r, c);
        for (std::size_t c = 0; c < b.dim(1); ++c) out.at(r, a.dim(1) + c) = b.at(r, c);
    }
    return out;
}

} // namespace

LossParts batch_loss(const model::Predictions& pred, const std::vector<const TokenSequence*>& batch) {
    if (batch.empty()) throw ContractError("batch_loss on an empty batch");
    const Array t_obs = stack_rows(batch, &TokenSequence::target_obs);
    const Array t_act = stack_rows(batch, &TokenSequence::target_act);
    const Array m_obs = stack_rows(batch, &TokenSequence::loss_mask_obs);
    const Array m_act = stack_rows(batch, &TokenSequence::loss_mask_act);
    if (pred.obs->value.shape() != t_obs.shape() || pred.act->value.shape() != t_act.shape())
        throw DimensionError("predictions " + shape_str(pred.obs->value.shape()) + "/" +
                             shape_str(pred.act->value.shape()) + " do not match targets " + shape_str(t_obs.shape()) +
                             "/" + shape_str(t_act.shape()));
    LossParts out;
    out.total = masked_mse(concat_cols(pred.obs, pred.act), hconcat(t_obs, t_act), hconcat(m_obs, m_act));
    double n_obs = 0.0, n_act = 0.0;
    out.obs = masked_mean(pred.obs->value, t_obs, m_obs, n_obs);
    out.act = masked_mean(pred.act->value, t_act, m_act, n_act);
    out.empty = n_obs + n_act == 0.0;
    return out;
}

void mask_out(TokenSequence& seq, bool obs, bool act) {
    if (obs)
        for (auto& v : seq.loss_mask_obs.data()) v = 0.0;
    if (act)
        for (auto& v : seq.loss_mask_act.data()) v = 0.0;
}

// ---- optimizer ----

Adam::Adam(const TrainConfig& cfg, const std::vector<Var>& params) : cfg_(cfg), params_(params) {
    for (const auto& p : params_) {
        m1_.emplace_back(p->value.shape());
        m2_.emplace_back(p->value.shape());
    }
}

void Adam::load(const model::OptimizerState& st) {
    if (st.m1.size() != params_.size() || st.m2.size() != params_.size())
        throw ContractError("optimizer state has " + std::to_string(st.m1.size()) + " tensors, expected " +
                            std::to_string(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (st.m1[i].shape() != params_[i]->value.shape() || st.m2[i].shape() != params_[i]->value.shape())
            throw DimensionError("optimizer moment shape mismatch at tensor " + std::to_string(i));
    m1_ = st.m1;
    m2_ = st.m2;
    t_ = st.step;
}

void Adam::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k]->value;
        const auto& g = params_[k]->grad;
        const bool has_grad = g.size() == p.size();
        auto& m = m1_[k];
        auto& v = m2_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = has_grad ? g[i] : 0.0;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double upd = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps) + cfg_.weight_decay * p[i];
            p[i] -= lr * upd;
        }
    }
}

model::OptimizerState Adam::state() const {
    model::OptimizerState st;
    st.step = t_;
    st.m1 = m1_;
    st.m2 = m2_;
    return st;
}

double clip_gradients(const std::vector<Var>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p->grad.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (const auto& p : params)
            for (auto& g : p->grad.data()) g *= s;
    }
    return norm;
}

// ---- loop ----

namespace {

struct Phase {
    std::vector<Source> sources;
    bool mask_obs = false, mask_act = false;
};

Phase phase_for(Regime r, std::size_t step, std::size_t total) {
    const std::vector<Source> all(data::kAllSources.begin(), data::kAllSources.end());
    switch (r) {
    case Regime::joint: return {all, false, false};
    case Regime::complete_only: return {{Source::expert}, false, false};
    case Regime::action_only_loss: return {all, true, false};
    case Regime::staged:
        if (step < total / 2) return {all, false, true};
        return {{Source::expert}, false, false};
    }
    return {};
}

class Sampler {
public:
    Sampler(const std::vector<Trajectory>& normalized, const TrainConfig& cfg) : cfg_(cfg) {
        for (const auto& t : normalized) pools_[t.source].push_back(&t);
    }

    bool has(Source s) const { return pools_.count(s) && !pools_.at(s).empty(); }

    const Trajectory& draw(const std::vector<Source>& sources, std::mt19937_64& rng) const {
        std::vector<double> w;
        for (auto s : sources) {
            double weight = 0.0;
            if (has(s)) {
                auto it = cfg_.source_weights.find(s);
                weight = cfg_.source_weights.empty() ? static_cast<double>(pools_.at(s).size())
                                                     : (it == cfg_.source_weights.end() ? 0.0 : it->second);
            }
            w.push_back(weight);
        }
        double total = 0.0;
        for (double x : w) total += x;
        if (!(total > 0)) throw DataError("no trajectories available for the requested training sources");
        const std::size_t pick = std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
        const auto& pool = pools_.at(sources[pick]);
        return *pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    }

private:
    const TrainConfig& cfg_;
    std::map<Source, std::vector<const Trajectory*>> pools_;
};

void check_data(const ModelConfig& mcfg, const std::vector<Trajectory>& trajs, const data::Normalization& norm,
                const TrainConfig& cfg) {
    if (trajs.empty()) throw ContractError("training needs at least one trajectory");
    if (norm.obs_mean.size() != mcfg.m || norm.act_mean.size() != mcfg.n)
        throw DimensionError("normalization dims (" + std::to_string(norm.obs_mean.size()) + ", " +
                             std::to_string(norm.act_mean.size()) + ") do not match model (" + std::to_string(mcfg.m) +
                             ", " + std::to_string(mcfg.n) + ")");
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& t = trajs[i];
        if (t.obs_dim() != mcfg.m || t.act_dim() != mcfg.n)
            throw DimensionError("trajectory " + std::to_string(i) + " has dims (" + std::to_string(t.obs_dim()) +
                                 ", " + std::to_string(t.act_dim()) + "), model expects (" + std::to_string(mcfg.m) +
                                 ", " + std::to_string(mcfg.n) + ")");
        if (t.length() < cfg.window)
            throw DataError("trajectory " + std::to_string(i) + " has " + std::to_string(t.length()) +
                            " steps, shorter than the training window " + std::to_string(cfg.window));
    }
}

} // namespace

TrainResult train(const ModelConfig& mcfg, const std::vector<Trajectory>& trajs, const data::Normalization& norm,
                  const TrainConfig& cfg, const TrainOptions& opts) {
    mcfg.validate();
    cfg.validate(mcfg);
    check_data(mcfg, trajs, norm, cfg);

    std::vector<Trajectory> normalized;
    normalized.reserve(trajs.size());
    for (const auto& t : trajs) normalized.push_back(data::normalize(t, norm));
    const Sampler sampler(normalized, cfg);
    if (cfg.regime == Regime::staged || cfg.regime == Regime::complete_only)
        if (!sampler.has(Source::expert)) throw DataError("regime " + to_string(cfg.regime) + " needs complete trajectories");

    TrainResult res;
    std::mt19937_64 rng(cfg.seed);
    std::size_t start = 0;
    if (opts.resume) {
        if (!(opts.resume->config == mcfg)) throw ConfigError("resume checkpoint has a different model config");
        if (!opts.resume->optimizer) throw ContractError("resume checkpoint carries no optimizer state");
        res.params = opts.resume->params.clone();
        std::istringstream(opts.resume->optimizer->rng_state) >> rng;
        start = opts.resume->optimizer->step;
    } else {
        res.params = model::init_params(mcfg, cfg.seed);
    }
    const auto params = res.params.list();
    Adam adam(cfg, params);
    if (opts.resume) adam.load(*opts.resume->optimizer);
    if (cfg.regime == Regime::staged) res.log.stage_boundary = cfg.steps / 2;

    std::vector<TokenSequence> seqs(cfg.batch);
    std::vector<const TokenSequence*> ptrs(cfg.batch);
    for (std::size_t step = start; step < cfg.steps; ++step) {
        const Phase ph = phase_for(cfg.regime, step, cfg.steps);
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            const auto& t = sampler.draw(ph.sources, rng);
            const auto w = data::sample_window(t, cfg.window, rng);
            seqs[b] = data::tokenize(t, w, mcfg.mode, mcfg.aligned);
            mask_out(seqs[b], ph.mask_obs, ph.mask_act);
            ptrs[b] = &seqs[b];
        }
        zero_grad(params);
        const auto pred = model::forward(res.params, mcfg, ptrs);
        const auto loss = batch_loss(pred, ptrs);
        const double value = loss.total->value.item();
        if (!std::isfinite(value))
            throw NumericError("non-finite training loss at step " + std::to_string(step));
        backward(loss.total);
        clip_gradients(params, cfg.clip_norm);
        const double lr = learning_rate(cfg, step);
        adam.step(lr);
        res.log.records.push_back({step, value, loss.obs, loss.act, lr, loss.empty});

        const std::size_t done = step + 1;
        if (opts.snapshot && opts.snapshot_every > 0 && done % opts.snapshot_every == 0)
            res.log.snapshots.emplace_back(done, opts.snapshot(done, res.params));
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
            model::Checkpoint ck{mcfg, norm, res.params, adam.state()};
            std::ostringstream rs;
            rs << rng;
            ck.optimizer->rng_state = rs.str();
            auto path = cfg.checkpoint_path;
            path += "." + std::to_string(done);
            model::save_checkpoint(path, ck);
        }
    }
    res.optimizer = adam.state();
    std::ostringstream rs;
    rs << rng;
    res.optimizer.rng_state = rs.str();
    return res;
}

TrainResult train_staged(const ModelConfig& mcfg, const std::vector<Trajectory>& trajs,
                         const data::Normalization& norm, TrainConfig cfg, const TrainOptions& opts) {
    bool complete = false, incomplete = false;
    for (const auto& t : trajs) (t.source == Source::expert ? complete : incomplete) = true;
    if (!complete || !incomplete)
        throw DataError("staged training needs both complete and action-free trajectories");
    cfg.regime = Regime::staged;
    return train(mcfg, trajs, norm, cfg, opts);
}

} // namespace ntp::training
