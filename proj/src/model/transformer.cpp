#include <cmath>
#include <random>

#include "ntp/model.hpp"

namespace ntp::model {

using data::TokenMode;
using data::TokenSequence;

void ModelConfig::validate() const {
    if (d == 0 || layers == 0 || heads == 0) throw ConfigError("model width, depth and heads must be positive");
    if (d % heads != 0)
        throw ConfigError("embedding width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                          " heads");
    if (context < 2) throw ConfigError("model context must be at least 2 steps");
    if (m == 0 || n == 0) throw ConfigError("modality dimensions must be positive");
    if (mode == TokenMode::concat && !aligned)
        throw ConfigError("non-aligned prediction requires separate tokens");
}

std::vector<std::pair<std::string, Var>> ModelParams::named() const {
    std::vector<std::pair<std::string, Var>> out;
    auto add = [&out](std::string name, const Var& v) {
        if (v) out.emplace_back(std::move(name), v);
    };
    add("embed", embed);
    add("embed_obs", embed_obs);
    add("embed_act", embed_act);
    add("mask_token", mask_token);
    add("pos", pos);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        add(p + "ln_gain", L.ln_gain);
        add(p + "ln_bias", L.ln_bias);
        add(p + "wq", L.wq);
        add(p + "bq", L.bq);
        add(p + "wk", L.wk);
        add(p + "bk", L.bk);
        add(p + "wv", L.wv);
        add(p + "bv", L.bv);
        add(p + "wo", L.wo);
        add(p + "bo", L.bo);
        add(p + "w1", L.w1);
        add(p + "b1", L.b1);
        add(p + "w2", L.w2);
        add(p + "b2", L.b2);
        add(p + "ln2_gain", L.ln2_gain);
        add(p + "ln2_bias", L.ln2_bias);
    }
    add("head", head);
    add("head_obs", head_obs);
    add("head_act", head_act);
    return out;
}

std::vector<Var> ModelParams::list() const {
    std::vector<Var> out;
    for (auto& [name, v] : named()) out.push_back(v);
    return out;
}

std::size_t ModelParams::count() const {
    std::size_t c = 0;
    for (const auto& v : list()) c += v->value.size();
    return c;
}

ModelParams ModelParams::clone() const {
    ModelParams c = *this;
    auto copy = [](Var& v) {
        if (v) v = param(v->value);
    };
    copy(c.embed);
    copy(c.embed_obs);
    copy(c.embed_act);
    copy(c.mask_token);
    copy(c.pos);
    for (auto& L : c.layers) {
        for (Var* v : {&L.ln_gain, &L.ln_bias, &L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo, &L.w1, &L.b1,
                       &L.w2, &L.b2, &L.ln2_gain, &L.ln2_bias})
            copy(*v);
    }
    copy(c.head);
    copy(c.head_obs);
    copy(c.head_act);
    return c;
}

namespace {

constexpr double kInitStd = 0.02;

} // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, kInitStd);
    auto gauss = [&](Shape s) {
        Array a(std::move(s));
        for (auto& v : a.data()) v = nd(rng);
        return param(std::move(a));
    };
    auto zeros = [](std::size_t k) { return param(Array({k}, 0.0)); };
    auto ones = [](std::size_t k) { return param(Array({k}, 1.0)); };

    const std::size_t d = cfg.d, m = cfg.m, n = cfg.n;
    ModelParams p;
    if (cfg.mode == TokenMode::concat) {
        p.embed = gauss({d, m + n});
    } else {
        p.embed_obs = gauss({d, m});
        p.embed_act = gauss({d, n});
    }
    p.mask_token = gauss({n});
    p.pos = gauss({cfg.tokens_for(cfg.context), d});
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        LayerParams L;
        L.ln_gain = ones(d);
        L.ln_bias = zeros(d);
        L.wq = gauss({d, d});
        L.bq = zeros(d);
        L.wk = gauss({d, d});
        L.bk = zeros(d);
        L.wv = gauss({d, d});
        L.bv = zeros(d);
        L.wo = gauss({d, d});
        L.bo = zeros(d);
        L.w1 = gauss({4 * d, d});
        L.b1 = zeros(4 * d);
        L.w2 = gauss({d, 4 * d});
        L.b2 = zeros(d);
        if (cfg.conventional_block) {
            L.ln2_gain = ones(d);
            L.ln2_bias = zeros(d);
        }
        p.layers.push_back(std::move(L));
    }
    if (cfg.mode == TokenMode::concat) {
        p.head = gauss({m + n, d});
    } else {
        p.head_obs = gauss({m, d});
        p.head_act = gauss({n, d});
    }
    return p;
}

std::size_t param_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d, m = cfg.m, n = cfg.n;
    const std::size_t per_layer = 2 * d                 // layer norm
                                  + 4 * (d * d + d)     // q, k, v, out
                                  + (4 * d * d + 4 * d) // mlp in
                                  + (4 * d * d + d)     // mlp out
                                  + (cfg.conventional_block ? 2 * d : 0);
    const std::size_t embed = d * (m + n);
    const std::size_t head = (m + n) * d;
    return embed + n + cfg.tokens_for(cfg.context) * d + cfg.layers * per_layer + head;
}

namespace {

struct BatchArrays {
    std::size_t batch = 0, len = 0;
    Array obs, act;
    std::vector<bool> masked;
};

BatchArrays stack_batch(const ModelConfig& cfg, const std::vector<const TokenSequence*>& batch) {
    if (batch.empty()) throw ContractError("forward() on an empty batch");
    BatchArrays b;
    b.batch = batch.size();
    b.len = batch.front()->length();
    if (b.len == 0) throw ContractError("forward() on an empty sequence");
    if (b.len > cfg.context)
        throw RangeError("sequence of " + std::to_string(b.len) + " steps exceeds model context " +
                         std::to_string(cfg.context));
    const std::size_t rows = b.batch * b.len;
    b.obs = Array({rows, cfg.m});
    b.act = Array({rows, cfg.n});
    b.masked.reserve(rows);
    std::size_t r = 0;
    for (const auto* s : batch) {
        if (s->length() != b.len) throw DimensionError("batch sequences differ in length");
        if (s->obs.dim(1) != cfg.m || s->act.dim(1) != cfg.n)
            throw DimensionError("sequence dims (" + std::to_string(s->obs.dim(1)) + ", " +
                                 std::to_string(s->act.dim(1)) + ") do not match model (" + std::to_string(cfg.m) +
                                 ", " + std::to_string(cfg.n) + ")");
        std::copy(s->obs.data().begin(), s->obs.data().end(),
                  b.obs.data().begin() + static_cast<std::ptrdiff_t>(r * cfg.m));
        std::copy(s->act.data().begin(), s->act.data().end(),
                  b.act.data().begin() + static_cast<std::ptrdiff_t>(r * cfg.n));
        b.masked.insert(b.masked.end(), s->act_masked.begin(), s->act_masked.end());
        r += b.len;
    }
    return b;
}

Var linear(const Var& x, const Var& w, const Var& b) {
    return b ? add_rowwise(matmul_nt(x, w), b) : matmul_nt(x, w);
}

Var attention(const Var& x, const LayerParams& L, std::size_t batch, std::size_t seq, std::size_t heads) {
    const std::size_t d = x->value.dim(1);
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(d / heads));
    auto q = split_heads(linear(x, L.wq, L.bq), batch, seq, heads);
    auto k = split_heads(linear(x, L.wk, L.bk), batch, seq, heads);
    auto v = split_heads(linear(x, L.wv, L.bv), batch, seq, heads);
    auto probs = causal_softmax(scale(bmm_nt(q, k), scale_factor));
    auto mixed = merge_heads(bmm(probs, v), batch, seq, heads);
    return linear(mixed, L.wo, L.bo);
}

Var mlp(const Var& x, const LayerParams& L) {
    return linear(relu(linear(x, L.w1, L.b1)), L.w2, L.b2);
}

} // namespace

Var embed_tokens(const ModelParams& p, const ModelConfig& cfg, const std::vector<const TokenSequence*>& batch) {
    const auto b = stack_batch(cfg, batch);
    auto obs = constant(b.obs);
    auto act = substitute_rows(constant(b.act), p.mask_token, b.masked);
    Var h;
    if (cfg.mode == TokenMode::concat) {
        h = matmul_nt(concat_cols(obs, act), p.embed);
    } else {
        h = interleave_rows(matmul_nt(obs, p.embed_obs), matmul_nt(act, p.embed_act));
    }
    return add_periodic_rows(h, p.pos, cfg.tokens_for(b.len));
}

Predictions forward(const ModelParams& p, const ModelConfig& cfg, const std::vector<const TokenSequence*>& batch) {
    const std::size_t len = batch.empty() ? 0 : batch.front()->length();
    auto h = embed_tokens(p, cfg, batch);
    const std::size_t seq = cfg.tokens_for(len);
    const std::size_t bs = batch.size();

    for (const auto& L : p.layers) {
        if (cfg.conventional_block) {
            h = add(h, attention(layer_norm(h, L.ln_gain, L.ln_bias), L, bs, seq, cfg.heads));
            h = add(h, mlp(layer_norm(h, L.ln2_gain, L.ln2_bias), L));
        } else {
            auto t = layer_norm(h, L.ln_gain, L.ln_bias);
            t = add(t, attention(t, L, bs, seq, cfg.heads));
            h = add(t, mlp(t, L));
        }
    }

    Predictions out;
    if (cfg.mode == TokenMode::concat) {
        auto y = matmul_nt(h, p.head);
        out.obs = slice_cols(y, 0, cfg.m);
        out.act = slice_cols(y, cfg.m, cfg.n);
    } else {
        auto at_obs = strided_rows(h, 0, 2);
        auto at_act = strided_rows(h, 1, 2);
        if (cfg.aligned) {
            out.obs = matmul_nt(at_obs, p.head_obs);
            out.act = matmul_nt(at_act, p.head_act);
        } else {
            out.act = matmul_nt(at_obs, p.head_act);
            out.obs = matmul_nt(at_act, p.head_obs);
        }
    }
    return out;
}

Predictions forward(const ModelParams& p, const ModelConfig& cfg, const TokenSequence& seq) {
    return forward(p, cfg, std::vector<const TokenSequence*>{&seq});
}

} // namespace ntp::model
