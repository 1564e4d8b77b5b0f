#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "unit/causality.hpp"
#include "unit/gradcheck.hpp"
#include "ntp/model.hpp"

using namespace ntp;
using namespace ntp::model;
using data::Source;
using data::TokenMode;
using data::TokenSequence;
using data::Trajectory;

namespace {

Trajectory random_traj(std::mt19937_64& rng, Source src, std::size_t T, std::size_t m, std::size_t n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Trajectory t;
    t.obs = Array({T, m});
    for (auto& v : t.obs.data()) v = nd(rng);
    t.act = Array({T, n}, 0.0);
    t.act_present.assign(T, src != Source::actionfree);
    if (src != Source::actionfree)
        for (auto& v : t.act.data()) v = nd(rng);
    t.source = src;
    return t;
}

ModelConfig small(TokenMode mode, bool aligned = true) {
    ModelConfig c;
    c.d = 16;
    c.layers = 2;
    c.heads = 2;
    c.context = 16;
    c.mode = mode;
    c.aligned = aligned;
    c.m = 4;
    c.n = 3;
    return c;
}

std::vector<ModelConfig> all_layouts() {
    return {small(TokenMode::concat), small(TokenMode::separate, true), small(TokenMode::separate, false)};
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("ntp_test_" + name);
}

} // namespace

TEST_CASE("init is seeded and reproducible") {
    const auto cfg = small(TokenMode::concat);
    auto a = init_params(cfg, 3), b = init_params(cfg, 3), c = init_params(cfg, 4);
    const auto la = a.list(), lb = b.list(), lc = c.list();
    REQUIRE(la.size() == lb.size());
    bool differs = false;
    for (std::size_t i = 0; i < la.size(); ++i) {
        CHECK(la[i]->value == lb[i]->value);
        differs = differs || !(la[i]->value == lc[i]->value);
    }
    CHECK(differs);
    CHECK(a.layers[0].ln_gain->value[0] == 1.0);
    CHECK(a.layers[0].bq->value[0] == 0.0);
}

TEST_CASE("parameter count matches the closed form") {
    ModelConfig base;  // d=192, 4 layers, 4 heads, m=10, n=5, 16 steps
    // Hand count: per layer 2·192 + 4·(192²+192) + (4·192²+4·192) + (4·192²+192) = 444480;
    // plus embed 192·15, head 15·192, positions 16·192 and a 5-vector mask token.
    CHECK(param_count(base) == 1786757);
    CHECK(init_params(base, 0).count() == 1786757);
    for (auto cfg : all_layouts()) {
        CHECK(init_params(cfg, 0).count() == param_count(cfg));
        cfg.conventional_block = true;
        CHECK(init_params(cfg, 0).count() == param_count(cfg));
    }
}

TEST_CASE("model sizes span about 1M, 2M and 8M parameters") {
    struct Size {
        std::size_t d, heads, layers;
        double target;
    };
    for (auto s : {Size{144, 3, 4, 1e6}, Size{192, 4, 4, 2e6}, Size{384, 12, 6, 8e6}}) {
        ModelConfig c;
        c.d = s.d;
        c.heads = s.heads;
        c.layers = s.layers;
        const double p = static_cast<double>(param_count(c));
        CHECK(p > 0.5 * s.target);
        CHECK(p < 2.0 * s.target);
    }
}

TEST_CASE("config validation") {
    ModelConfig c;
    c.heads = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(init_params(c, 0), ConfigError);
    ModelConfig ctx;
    ctx.context = 1;
    CHECK_THROWS_AS(ctx.validate(), ConfigError);
    ModelConfig nonaligned;
    nonaligned.aligned = false;
    CHECK_THROWS_AS(nonaligned.validate(), ConfigError);
}

TEST_CASE("single-step input gives one prediction row per modality") {
    std::mt19937_64 rng(1);
    for (const auto& cfg : all_layouts()) {
        const auto p = init_params(cfg, 1);
        auto t = random_traj(rng, Source::expert, 4, cfg.m, cfg.n);
        auto seq = data::tokenize(t, {0, 2}, cfg.mode, cfg.aligned);
        // A one-step view of the same window.
        seq.obs = Array({1, cfg.m}, 0.5);
        seq.act = Array({1, cfg.n}, 0.5);
        seq.act_masked = {false};
        const auto out = forward(p, cfg, seq);
        CHECK(out.obs->value.shape() == Shape{1, cfg.m});
        CHECK(out.act->value.shape() == Shape{1, cfg.n});
    }
}

TEST_CASE("sequence longer than the context is rejected") {
    std::mt19937_64 rng(2);
    auto cfg = small(TokenMode::separate);
    cfg.context = 4;
    const auto p = init_params(cfg, 0);
    auto t = random_traj(rng, Source::expert, 8, cfg.m, cfg.n);
    CHECK_NOTHROW(forward(p, cfg, data::tokenize(t, {0, 4}, cfg.mode)));
    CHECK_THROWS_AS(forward(p, cfg, data::tokenize(t, {0, 5}, cfg.mode)), RangeError);
}

TEST_CASE("causal mask: perturbing a token never changes earlier predictions") {
    std::mt19937_64 rng(3);
    for (const auto& cfg : all_layouts()) {
        for (std::uint64_t seed : {0u, 1u}) {
            const auto p = init_params(cfg, seed);
            auto t = random_traj(rng, seed == 0 ? Source::expert : Source::actionfree, 16, cfg.m, cfg.n);
            const auto seq = data::tokenize(t, {0, 16}, cfg.mode, cfg.aligned);
            CHECK(causality::violations(p, cfg, seq, rng) == 0);
        }
    }
    // The probe is not vacuous: a perturbation reaches its own position.
    const auto cfg = small(TokenMode::concat);
    const auto p = init_params(cfg, 0);
    auto t = random_traj(rng, Source::expert, 16, cfg.m, cfg.n);
    auto seq = data::tokenize(t, {0, 16}, cfg.mode);
    const auto before = causality::read_at(forward(p, cfg, seq), cfg, 7);
    seq.obs.at(7, 0) += 1.0;
    CHECK(causality::read_at(forward(p, cfg, seq), cfg, 7) != before);
}

TEST_CASE("masked action slot embeds as the mask token regardless of placeholder") {
    std::mt19937_64 rng(4);
    for (const auto& cfg : all_layouts()) {
        const auto p = init_params(cfg, 2);
        auto t = random_traj(rng, Source::actionfree, 6, cfg.m, cfg.n);
        auto seq = data::tokenize(t, {0, 6}, cfg.mode, cfg.aligned);
        auto junk = seq;
        for (auto& v : junk.act.data()) v = 123.0;
        const auto e0 = embed_tokens(p, cfg, {&seq});
        const auto e1 = embed_tokens(p, cfg, {&junk});
        CHECK(e0->value == e1->value);
        if (cfg.mode == TokenMode::separate) {
            // Action token of step 3 sits at row 7: W_act·mask + pos[7].
            for (std::size_t k = 0; k < cfg.d; ++k) {
                double want = p.pos->value.at(7, k);
                for (std::size_t c = 0; c < cfg.n; ++c) want += p.embed_act->value.at(k, c) * p.mask_token->value[c];
                CHECK(e0->value.at(7, k) == doctest::Approx(want).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("mask token receives gradient only from masked trajectories") {
    std::mt19937_64 rng(5);
    for (const auto& cfg : all_layouts()) {
        auto grad_norm = [&](Source src) {
            const auto p = init_params(cfg, 3);
            auto t = random_traj(rng, src, 8, cfg.m, cfg.n);
            const auto seq = data::tokenize(t, {0, 8}, cfg.mode, cfg.aligned);
            const auto out = forward(p, cfg, seq);
            auto loss = add(masked_mse(out.obs, seq.target_obs, seq.loss_mask_obs),
                            masked_mse(out.act, seq.target_act, seq.loss_mask_act));
            backward(loss);
            double s = 0.0;
            for (double g : p.mask_token->grad.data()) s += g * g;
            return s;
        };
        CHECK(grad_norm(Source::actionfree) > 0.0);
        CHECK(grad_norm(Source::expert) == 0.0);
    }
}

TEST_CASE("forward is equivariant to batch permutation") {
    std::mt19937_64 rng(6);
    for (const auto& cfg : all_layouts()) {
        const auto p = init_params(cfg, 4);
        std::vector<TokenSequence> seqs;
        for (int i = 0; i < 3; ++i) {
            auto t = random_traj(rng, i == 1 ? Source::actionfree : Source::expert, 10, cfg.m, cfg.n);
            seqs.push_back(data::tokenize(t, {1, 8}, cfg.mode, cfg.aligned));
        }
        const auto a = forward(p, cfg, {&seqs[0], &seqs[1], &seqs[2]});
        const auto b = forward(p, cfg, {&seqs[2], &seqs[0], &seqs[1]});
        const std::size_t perm[3] = {1, 2, 0};  // position of seqs[i] in b
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t r = 0; r < 8; ++r) {
                for (std::size_t c = 0; c < cfg.m; ++c)
                    CHECK(a.obs->value.at(i * 8 + r, c) ==
                          doctest::Approx(b.obs->value.at(perm[i] * 8 + r, c)).epsilon(1e-12));
                for (std::size_t c = 0; c < cfg.n; ++c)
                    CHECK(a.act->value.at(i * 8 + r, c) ==
                          doctest::Approx(b.act->value.at(perm[i] * 8 + r, c)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("conventional block is a different function") {
    std::mt19937_64 rng(7);
    auto cfg = small(TokenMode::concat);
    auto conv = cfg;
    conv.conventional_block = true;
    auto t = random_traj(rng, Source::expert, 6, cfg.m, cfg.n);
    const auto seq = data::tokenize(t, {0, 6}, cfg.mode);
    const auto a = forward(init_params(cfg, 0), cfg, seq);
    const auto b = forward(init_params(conv, 0), conv, seq);
    CHECK_FALSE(a.act->value == b.act->value);
    CHECK(b.act->value.all_finite());
}

TEST_CASE("checkpoint round trip is bit-exact") {
    std::mt19937_64 rng(8);
    for (const auto& cfg : all_layouts()) {
        Checkpoint ck;
        ck.config = cfg;
        ck.params = init_params(cfg, 9);
        ck.normalization = {{0.1, 1.0 / 3.0, 2, 3}, {1, 2, 3, 4}, {0, -1e-300, 5}, {1, 1, 1}};
        OptimizerState opt;
        opt.step = 17;
        opt.rng_state = "12 34 56";
        for (const auto& v : ck.params.list()) {
            opt.m1.push_back(gradcheck::random_array(v->value.shape(), rng));
            opt.m2.push_back(gradcheck::random_array(v->value.shape(), rng));
        }
        ck.optimizer = opt;
        const auto path = temp_file("ckpt.bin");
        save_checkpoint(path, ck);
        const auto back = load_checkpoint(path);
        CHECK(back.config == cfg);
        CHECK(back.normalization == ck.normalization);
        const auto x = ck.params.named(), y = back.params.named();
        REQUIRE(x.size() == y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(x[i].first == y[i].first);
            CHECK(x[i].second->value == y[i].second->value);
        }
        REQUIRE(back.optimizer);
        CHECK(back.optimizer->step == 17);
        CHECK(back.optimizer->rng_state == "12 34 56");
        CHECK(back.optimizer->m1 == opt.m1);
        CHECK(back.optimizer->m2 == opt.m2);

        Checkpoint plain = ck;
        plain.optimizer.reset();
        save_checkpoint(path, plain);
        CHECK_FALSE(load_checkpoint(path).optimizer.has_value());
    }
}

TEST_CASE("checkpoint errors") {
    CHECK_THROWS_AS(load_checkpoint(temp_file("does_not_exist.bin")), DataError);
    const auto bad = temp_file("garbage.bin");
    std::ofstream(bad) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(bad), DataError);

    Checkpoint ck;
    ck.config = small(TokenMode::concat);
    ck.params = init_params(ck.config, 0);
    ck.normalization = {{0, 0, 0, 0}, {1, 1, 1, 1}, {0, 0, 0}, {1, 1, 1}};
    const auto path = temp_file("trunc.bin");
    save_checkpoint(path, ck);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("policy context keeps the most recent steps") {
    PolicyContext ctx(16);
    for (int i = 0; i < 16 + 5; ++i) ctx.push({double(i)}, std::vector<double>{0.0});
    CHECK(ctx.size() == 16);
    CHECK(ctx.entries().front().obs[0] == 5.0);
    CHECK(ctx.entries().back().obs[0] == 20.0);
    PolicyContext empty(4);
    CHECK_THROWS_AS(empty.set_last_action({1.0}), ContractError);
    CHECK_THROWS_AS(PolicyContext(0), ContractError);
}

TEST_CASE("predict_next_action") {
    std::mt19937_64 rng(9);
    for (const auto& cfg : all_layouts()) {
        const auto p = init_params(cfg, 5);
        data::Normalization norm{std::vector<double>(cfg.m, 0.5), std::vector<double>(cfg.m, 2.0),
                                 std::vector<double>(cfg.n, -1.0), std::vector<double>(cfg.n, 3.0)};
        PolicyContext ctx(cfg.context);
        CHECK_THROWS_AS(predict_next_action(p, cfg, norm, ctx), ContractError);

        std::normal_distribution<double> nd(0.0, 1.0);
        auto obs = [&] {
            std::vector<double> o(cfg.m);
            for (auto& v : o) v = nd(rng);
            return o;
        };
        ctx.push(obs());
        const auto a0 = predict_next_action(p, cfg, norm, ctx);
        CHECK(a0.size() == cfg.n);
        CHECK(predict_next_action(p, cfg, norm, ctx) == a0);
        ctx.set_last_action(a0);
        for (std::size_t i = 0; i < cfg.context + 3; ++i) {
            ctx.push(obs());
            ctx.set_last_action(predict_next_action(p, cfg, norm, ctx));
        }
        CHECK(ctx.size() == cfg.context);
        const auto before = ctx.entries();
        const auto next = predict_next_action(p, cfg, norm, ctx);
        CHECK(next.size() == cfg.n);
        CHECK(ctx.entries().size() == before.size());
        CHECK(ctx.entries().back().obs == before.back().obs);

        // Pending newest entry: acts from the completed pairs only.
        ctx.push(obs());
        const auto pending = predict_next_action(p, cfg, norm, ctx);
        TokenSequence seq;
        seq.mode = cfg.mode;
        seq.aligned = cfg.aligned;
        const std::size_t len = ctx.size();
        seq.obs = Array({len, cfg.m});
        seq.act = Array({len, cfg.n}, 0.0);
        seq.act_masked.assign(len, false);
        for (std::size_t i = 0; i < len; ++i) {
            const auto& e = ctx.entries()[i];
            for (std::size_t c = 0; c < cfg.m; ++c) seq.obs.at(i, c) = (e.obs[c] - 0.5) / 2.0;
            if (e.act)
                for (std::size_t c = 0; c < cfg.n; ++c) seq.act.at(i, c) = ((*e.act)[c] + 1.0) / 3.0;
            else
                seq.act_masked[i] = true;
        }
        auto out = forward(p, cfg, seq);
        if (!cfg.aligned) {
            // The pending observation is replaced by the predicted one.
            for (std::size_t c = 0; c < cfg.m; ++c) seq.obs.at(len - 1, c) = out.obs->value.at(len - 2, c);
            out = forward(p, cfg, seq);
        }
        const std::size_t r = cfg.aligned ? len - 2 : len - 1;
        for (std::size_t c = 0; c < cfg.n; ++c)
            CHECK(pending[c] == doctest::Approx(out.act->value.at(r, c) * 3.0 - 1.0).epsilon(1e-12));
    }
}
