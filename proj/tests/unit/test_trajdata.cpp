#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "ntp/trajdata.hpp"

using namespace ntp;
using namespace ntp::data;

namespace {

Trajectory random_traj(std::mt19937_64& rng, Source src, std::size_t T = 6, std::size_t m = 3, std::size_t n = 2) {
    std::normal_distribution<double> nd(0.0, 1.7);
    Trajectory t;
    t.dt = 0.05;
    t.command = {nd(rng), nd(rng), nd(rng)};
    t.obs = Array({T, m});
    for (auto& v : t.obs.data()) v = nd(rng) * 1e3 + 1.0 / 3.0;
    t.act = Array({T, n}, 0.0);
    t.act_present.assign(T, src == Source::expert);
    if (src == Source::expert)
        for (auto& v : t.act.data()) v = nd(rng);
    t.source = src;
    return t;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("ntp_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("concat tokenization of an expert trajectory") {
    Trajectory t;
    t.obs = Array::matrix({{1, 2}, {4, 5}, {7, 8}});
    t.act = Array::matrix({{3}, {6}, {9}});
    t.act_present = {true, true, true};
    t.validate();

    auto seq = tokenize(t, {0, 3}, TokenMode::concat);
    CHECK(seq.token_count() == 3);
    auto tok = seq.concat_tokens();
    CHECK(tok.at(0, 0) == 1);
    CHECK(tok.at(0, 1) == 2);
    CHECK(tok.at(0, 2) == 3);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(seq.loss_mask_obs.at(i, 0) == 1.0);
        CHECK(seq.loss_mask_act.at(i, 0) == 1.0);
    }
    CHECK(seq.loss_mask_obs.at(2, 0) == 0.0);
    CHECK(seq.loss_mask_obs.at(2, 1) == 0.0);
    CHECK(seq.loss_mask_act.at(2, 0) == 0.0);
    CHECK(seq.target_obs.at(0, 0) == 4);
    CHECK(seq.target_act.at(1, 0) == 9);
}

TEST_CASE("action-free tokenization masks every action slot") {
    auto t = make_action_free(0.05, {0, 0, 0}, Array::matrix({{1, 2}, {4, 5}, {7, 8}}), 1, Source::actionfree);
    t.validate();
    auto seq = tokenize(t, {0, 3}, TokenMode::concat);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(seq.act_masked[i]);
        CHECK(seq.loss_mask_act.at(i, 0) == 0.0);
    }
    CHECK(seq.loss_mask_obs.at(0, 0) == 1.0);
}

TEST_CASE("tokenize rejects bad windows") {
    std::mt19937_64 rng(1);
    auto t = random_traj(rng, Source::expert, 5);
    CHECK_THROWS_AS(tokenize(t, {4, 2}, TokenMode::concat), RangeError);
    CHECK_THROWS_AS(tokenize(t, {0, 1}, TokenMode::concat), RangeError);
    CHECK_THROWS_AS(tokenize(t, {0, 5}, TokenMode::concat, false), ConfigError);
}

TEST_CASE("aligned separate targets are the next token of the same modality") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        auto t = random_traj(rng, Source::expert, 9);
        auto w = sample_window(t, 6, rng);
        auto seq = tokenize(t, w, TokenMode::separate, true);
        for (std::size_t i = 0; i + 1 < seq.length(); ++i) {
            for (std::size_t j = 0; j < seq.obs.dim(1); ++j) CHECK(seq.target_obs.at(i, j) == seq.obs.at(i + 1, j));
            for (std::size_t j = 0; j < seq.act.dim(1); ++j) CHECK(seq.target_act.at(i, j) == seq.act.at(i + 1, j));
        }
    }
}

TEST_CASE("non-aligned targets follow the interleaved order") {
    std::mt19937_64 rng(3);
    auto t = random_traj(rng, Source::expert, 5);
    auto seq = tokenize(t, {1, 4}, TokenMode::separate, false);
    for (std::size_t i = 0; i < 4; ++i) {
        // o_i → a_i
        CHECK(seq.target_act.at(i, 0) == seq.act.at(i, 0));
        CHECK(seq.loss_mask_act.at(i, 0) == 1.0);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(seq.target_obs.at(i, 0) == seq.obs.at(i + 1, 0));
    CHECK(seq.loss_mask_obs.at(3, 0) == 0.0);
}

TEST_CASE("loss mask never covers a missing action") {
    std::mt19937_64 rng(4);
    for (auto src : kAllSources) {
        for (bool aligned : {true, false}) {
            auto t = random_traj(rng, src, 8);
            auto mode = aligned ? TokenMode::concat : TokenMode::separate;
            auto seq = tokenize(t, {0, 8}, mode, aligned);
            for (std::size_t i = 0; i < 8; ++i) {
                const std::size_t src_step = aligned ? i + 1 : i;
                for (std::size_t j = 0; j < seq.loss_mask_act.dim(1); ++j)
                    if (seq.loss_mask_act.at(i, j) != 0.0) CHECK(t.act_present.at(src_step));
            }
        }
    }
}

TEST_CASE("normalization examples") {
    Normalization id{{0.0}, {1.0}, {0.0}, {1.0}};
    CHECK(normalize_obs(std::vector<double>{2.5}, id)[0] == 2.5);
    Normalization n{{1.0}, {2.0}, {0.0}, {1.0}};
    CHECK(normalize_obs(std::vector<double>{3.0}, n)[0] == 1.0);
    CHECK_THROWS_AS(normalize_obs(std::vector<double>{3.0, 1.0}, n), DimensionError);
}

TEST_CASE("normalize round trip is the identity") {
    std::mt19937_64 rng(5);
    std::vector<Trajectory> ts;
    for (int i = 0; i < 5; ++i) ts.push_back(random_traj(rng, Source::expert));
    const auto norm = compute_normalization(ts);
    for (const auto& t : ts) {
        auto z = normalize(t, norm);
        const std::size_t m = t.obs_dim(), n = t.act_dim();
        for (std::size_t i = 0; i < t.length(); ++i) {
            auto o = denormalize_obs(z.obs.data().subspan(i * m, m), norm);
            auto a = denormalize_act(z.act.data().subspan(i * n, n), norm);
            for (std::size_t j = 0; j < m; ++j) CHECK(std::abs(o[j] - t.obs.at(i, j)) < 1e-12 * 1e3);
            for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(a[j] - t.act.at(i, j)) < 1e-12);
        }
    }
}

TEST_CASE("normalization std is floored") {
    Trajectory t;
    t.obs = Array::matrix({{1, 2}, {1, 3}});
    t.act = Array::matrix({{0}, {0}});
    t.act_present = {true, true};
    auto norm = compute_normalization({t});
    CHECK(norm.obs_std[0] == kMinStd);
    CHECK(norm.act_std[0] == kMinStd);
}

TEST_CASE("dataset save/load round trip is exact") {
    std::mt19937_64 rng(6);
    std::vector<Trajectory> ts;
    for (int i = 0; i < 10; ++i)
        ts.push_back(random_traj(rng, i % 3 == 0 ? Source::expert : i % 3 == 1 ? Source::actionfree : Source::retargeted));
    const auto dir = temp_dir("roundtrip");
    const auto man = save_dataset(dir, ts);
    const auto ds = load_dataset(dir);
    CHECK(ds.manifest == man);
    REQUIRE(ds.trajectories.size() == ts.size());
    for (auto src : kAllSources) {
        auto got = ds.by_source(src);
        std::vector<const Trajectory*> want;
        for (const auto& t : ts)
            if (t.source == src) want.push_back(&t);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(*got[i] == *want[i]);
    }
}

TEST_CASE("dataset errors") {
    std::mt19937_64 rng(7);
    CHECK_THROWS_AS(save_dataset(temp_dir("empty"), {}), ContractError);
    CHECK_THROWS_AS(load_dataset(temp_dir("missing")), DataError);

    const auto dir = temp_dir("mismatch");
    save_dataset(dir, {random_traj(rng, Source::expert), random_traj(rng, Source::expert)});
    {
        std::ofstream out(dir / "expert.jsonl", std::ios::app);
        out << trajectory_to_json_line(random_traj(rng, Source::expert, 6, 4, 2)) << '\n';
    }
    try {
        load_dataset(dir);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("expert.jsonl:3") != std::string::npos);
    }

    const auto vdir = temp_dir("version");
    save_dataset(vdir, {random_traj(rng, Source::expert)});
    {
        std::ifstream in(vdir / "manifest.json");
        std::string s((std::istreambuf_iterator<char>(in)), {});
        s.replace(s.find("\"version\": 1"), 12, "\"version\": 7");
        std::ofstream(vdir / "manifest.json") << s;
    }
    CHECK_THROWS_AS(load_dataset(vdir), DataError);
}

TEST_CASE("trajectory invariants") {
    std::mt19937_64 rng(8);
    auto t = random_traj(rng, Source::actionfree);
    t.act.at(0, 0) = 1.0;
    CHECK_THROWS_AS(t.validate(), DataError);
    auto e = random_traj(rng, Source::expert);
    e.act_present[2] = false;
    CHECK_THROWS_AS(e.validate(), DataError);
}

TEST_CASE("window sampling stays in bounds and is uniform over starts") {
    std::mt19937_64 rng(9);
    auto t = random_traj(rng, Source::expert, 10);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) {
        auto w = sample_window(t, 4, rng);
        REQUIRE(w.start + w.len <= 10);
        ++hits[w.start];
    }
    for (int h : hits) CHECK(h > 800);
}
