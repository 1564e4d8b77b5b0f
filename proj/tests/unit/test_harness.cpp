#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ntp/harness.hpp"
#include "ntp/serialize.hpp"

using namespace ntp;
using namespace ntp::harness;

namespace {

ExperimentSpec tiny(Experiment e) {
    ExperimentSpec s;
    s.experiment = e;
    s.sizes = {6, 6, 0};
    s.complete_subset = 3;
    s.heldout = 3;
    s.model.d = 8;
    s.model.layers = 1;
    s.model.heads = 1;
    s.model.context = 4;
    s.train.batch = 4;
    s.train.window = 4;
    s.train.steps = 15;
    s.train.warmup = 2;
    s.train.lr = 1e-3;
    s.data.duration = 1.0;
    return s;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("ntp_harness_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("generated datasets carry the right action flags") {
    DataGenConfig cfg;
    cfg.duration = 1.0;
    const auto ex = generate_expert(10, cfg, 3);
    const auto af = generate_actionfree(10, cfg, 3);
    REQUIRE(ex.size() == 10);
    REQUIRE(af.size() == 10);
    for (const auto& t : ex) {
        CHECK(t.source == data::Source::expert);
        CHECK(t.length() == 20);
        CHECK(std::all_of(t.act_present.begin(), t.act_present.end(), [](bool b) { return b; }));
        CHECK(t.command[0] >= 0.0);
    }
    for (const auto& t : af) {
        CHECK(t.source == data::Source::actionfree);
        CHECK(std::none_of(t.act_present.begin(), t.act_present.end(), [](bool b) { return b; }));
    }
}

TEST_CASE("generation is deterministic and prefix-stable") {
    DataGenConfig cfg;
    cfg.duration = 1.0;
    const auto a = generate_expert(5, cfg, 7);
    const auto b = generate_expert(5, cfg, 7);
    const auto c = generate_expert(3, cfg, 7);
    const auto d = generate_expert(5, cfg, 8);
    CHECK(a == b);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[i] == c[i]);
    CHECK_FALSE(a[0] == d[0]);
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
}

TEST_CASE("keypoint tracks retarget below the residual threshold") {
    DataGenConfig cfg;
    cfg.duration = 2.0;
    const auto kps = generate_keypoints(3, cfg, 5);
    REQUIRE(kps.size() == 3);
    CHECK(kps[0].frames() == 40);
    const auto batch = retarget_batch(kps, cfg.residual_threshold);
    CHECK(batch.filtered == 0);
    REQUIRE(batch.kept.size() == 3);
    for (double r : batch.residuals) CHECK(r < 0.05);
    for (const auto& t : batch.kept) {
        CHECK(t.source == data::Source::retargeted);
        CHECK(t.obs_dim() == env::kObsDim);
        CHECK(t.act_dim() == env::kActDim);
    }
    // Root velocity is scaled so the retargeted command matches the sampled one.
    const auto cmd = env::sample_commands(1, cfg.commands, derive_seed(5, 1, 0)).front();
    CHECK(batch.kept[0].command[0] == doctest::Approx(cmd.vx).epsilon(1e-6));
    CHECK(batch.kept[0].command[2] == doctest::Approx(cmd.omega).epsilon(1e-6));
    CHECK_THROWS_AS(retarget_batch(kps, -1.0), ConfigError);

    cfg.keypoint_noise = 0.2;
    const auto noisy = retarget_batch(generate_keypoints(3, cfg, 5), cfg.residual_threshold);
    CHECK(noisy.filtered >= 2);
}

TEST_CASE("experiment names and variant grids") {
    for (auto e : {Experiment::token_layout, Experiment::alignment, Experiment::regime, Experiment::loss_target,
                   Experiment::scale_data, Experiment::scale_context, Experiment::scale_model,
                   Experiment::actionfree_gain})
        CHECK(experiment_from_string(to_string(e)) == e);
    CHECK_THROWS_AS(experiment_from_string("ablate-everything"), ConfigError);

    ExperimentSpec s;
    s.experiment = Experiment::scale_data;
    std::vector<std::string> names;
    for (const auto& c : variants(s)) {
        names.push_back(c.variant);
        CHECK(c.sizes.actionfree == 0);
    }
    CHECK(names == std::vector<std::string>{"data-62", "data-125", "data-250", "data-500"});

    s.experiment = Experiment::scale_model;
    const auto models = variants(s);
    REQUIRE(models.size() == 3);
    CHECK(models[0].model.d == 96);
    CHECK(models[1].model.d == 192);
    CHECK(models[2].model.d == 384);

    s.experiment = Experiment::scale_context;
    for (const auto& c : variants(s)) CHECK(c.train.window == c.model.context);

    s.experiment = Experiment::alignment;
    const auto al = variants(s);
    REQUIRE(al.size() == 2);
    CHECK(al[0].model.mode == data::TokenMode::separate);
    CHECK(al[0].model.aligned);
    CHECK_FALSE(al[1].model.aligned);

    s.experiment = Experiment::actionfree_gain;
    const auto af = variants(s);
    CHECK(af[0].sizes == DataSizes{100, 0, 0});
    CHECK(af[1].sizes == DataSizes{100, 500, 100});

    s.experiment = Experiment::regime;
    CHECK(variants(s)[1].train.regime == training::Regime::staged);
    s.experiment = Experiment::loss_target;
    CHECK(variants(s)[1].train.regime == training::Regime::action_only_loss);
}

TEST_CASE("experiment config validation and JSON") {
    auto s = tiny(Experiment::regime);
    CHECK_NOTHROW(s.validate());
    auto bad = s;
    bad.seeds = {};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.seeds = {1, 1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.train.window = 8;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    const nlohmann::json j = s;
    ExperimentSpec back;
    from_json(j, back);
    CHECK(nlohmann::json(back) == j);
    CHECK(back.model == s.model);
    CHECK(back.sizes == s.sizes);
    CHECK_THROWS_AS(from_json(nlohmann::json{{"experimnt", "scale-data"}}, back), ConfigError);
    CHECK_THROWS_AS(from_json(nlohmann::json{{"train", {{"stepz", 3}}}}, back), ConfigError);

    ExperimentSpec partial;
    from_json(nlohmann::json{{"experiment", "scale-model"}, {"train", {{"steps", 7}}}}, partial);
    CHECK(partial.experiment == Experiment::scale_model);
    CHECK(partial.train.steps == 7);
    CHECK(partial.train.batch == training::TrainConfig{}.batch);
}

TEST_CASE("alignment experiment emits six rows and a summary per variant") {
    auto spec = tiny(Experiment::alignment);
    spec.out_dir = scratch("alignment");
    Runner runner;
    const auto res = runner.run(spec);
    CHECK(res.ok());
    REQUIRE(res.cells.size() == 6);
    const auto rows = lines(slurp(spec.out_dir / "results.csv"));
    REQUIRE(rows.size() == 1 + 6 + 2);
    CHECK(rows[0] == "variant,seed,tracking_error,prediction_error");
    CHECK(rows[1].rfind("aligned,0,", 0) == 0);
    CHECK(rows[4].rfind("non-aligned,0,", 0) == 0);
    CHECK(rows[7].rfind("aligned,mean,", 0) == 0);
    CHECK(rows[8].rfind("non-aligned,mean,", 0) == 0);
    CHECK_FALSE(std::filesystem::exists(spec.out_dir / "errors.txt"));
    CHECK(std::filesystem::exists(spec.out_dir / "experiment.json"));

    double mean = 0.0;
    for (int i = 0; i < 3; ++i) mean += *res.cells[i].tracking_error / 3;
    CHECK(*res.variant("aligned").tracking_error == doctest::Approx(mean).epsilon(1e-12));
    CHECK(res.variant("aligned").succeeded == 3);
    CHECK_THROWS_AS(res.variant("concat"), ContractError);

    // A second run in the same runner is served from the cell cache.
    const auto trained = runner.cells_trained();
    CHECK(trained == 6);
    const auto again = runner.run(spec);
    CHECK(runner.cells_trained() == trained);
    CHECK(results_csv(again) == results_csv(res));
}

TEST_CASE("reruns with identical seeds are byte-identical") {
    auto spec = tiny(Experiment::loss_target);
    spec.seeds = {4, 5};
    spec.out_dir = scratch("det_a");
    Runner a;
    a.run(spec);
    const auto first = slurp(spec.out_dir / "results.csv");
    spec.out_dir = scratch("det_b");
    Runner b;
    b.run(spec);
    CHECK(slurp(spec.out_dir / "results.csv") == first);
    CHECK(first.find("NA") == std::string::npos);
}

TEST_CASE("a failing cell is recorded and the experiment continues") {
    // 1 s trajectories have 20 steps, too short for a 32-step window.
    auto spec = tiny(Experiment::scale_context);
    spec.model.context = 8;
    spec.train.window = 8;
    spec.seeds = {0};
    spec.out_dir = scratch("failure");
    Runner runner;
    const auto res = runner.run(spec);
    CHECK_FALSE(res.ok());
    REQUIRE(res.cells.size() == 3);
    CHECK(res.cells[0].ok());
    CHECK(res.cells[1].ok());
    CHECK_FALSE(res.cells[2].ok());
    CHECK(res.errors().size() == 1);
    CHECK(res.errors()[0].rfind("context-32 seed 0: ", 0) == 0);
    const auto csv = slurp(spec.out_dir / "results.csv");
    CHECK(csv.find("context-32,0,NA,NA\n") != std::string::npos);
    CHECK(csv.find("context-32,mean,NA,NA\n") != std::string::npos);
    CHECK(std::filesystem::exists(spec.out_dir / "errors.txt"));
    CHECK(res.variant("context-32").succeeded == 0);
}

TEST_CASE("cells reject a model whose token sizes do not match the data") {
    auto spec = tiny(Experiment::alignment);
    spec.seeds = {0};
    Runner runner;
    auto cell = variants(spec)[0];
    cell.model.m = env::kObsDim - 1;
    const auto r = runner.run_cell(cell, 0, spec);
    CHECK_FALSE(r.ok());
    CHECK_FALSE(r.tracking_error);
    CHECK(runner.cells_trained() == 0);
}

TEST_CASE("actionfree-gain cells draw prefixes of shared pools") {
    auto spec = tiny(Experiment::actionfree_gain);
    spec.seeds = {0};
    Runner runner;
    const auto& p = runner.pools(spec.data, spec.data_seed, spec.sizes, spec.heldout);
    CHECK(p.expert.size() == 6);
    CHECK(p.actionfree.size() == 6);
    CHECK(p.heldout.size() == 3);
    const auto first = p.expert[0];
    const auto& grown = runner.pools(spec.data, spec.data_seed, {9, 6, 0}, spec.heldout);
    CHECK(grown.expert.size() == 9);
    CHECK(grown.expert[0] == first);
    // Held-out trajectories come from their own stream.
    CHECK_FALSE(grown.heldout[0] == grown.expert[0]);

    const auto res = runner.run(spec);
    CHECK(res.ok());
    CHECK(res.cells[0].model->normalization != res.cells[1].model->normalization);
}

TEST_CASE("the on-disk cell cache is reused by a fresh runner") {
    auto spec = tiny(Experiment::loss_target);
    spec.seeds = {2};
    const auto dir = scratch("cache");
    Runner a;
    a.set_cache_dir(dir);
    const auto first = a.run(spec);
    CHECK(a.cells_trained() == 2);

    Runner b;
    b.set_cache_dir(dir);
    const auto second = b.run(spec);
    CHECK(b.cells_trained() == 0);
    CHECK(results_csv(second) == results_csv(first));
    REQUIRE(second.cells[0].model);
    CHECK(second.cells[0].model->normalization == first.cells[0].model->normalization);

    // A different configuration misses the cache.
    spec.train.steps += 1;
    Runner c;
    c.set_cache_dir(dir);
    c.run(spec);
    CHECK(c.cells_trained() == 2);
}
