#include <cmath>
#include <cstring>
#include <numbers>

#include "doctest.h"
#include "ntp/env.hpp"

using namespace ntp;
using namespace ntp::env;

TEST_CASE("step examples") {
    EnvConfig cfg;
    EnvState s;
    auto n = step(s, Action{}, cfg);
    CHECK(n.pose.x == 0.0);
    CHECK(n.u == std::array<double, 3>{0, 0, 0});
    CHECK(n.q == std::array<double, 2>{0, 0});
    CHECK(n.t == doctest::Approx(0.05));

    EnvState moving;
    moving.u = {1, 0, 0};
    CHECK(step(moving, Action{}, cfg).u[0] == doctest::Approx(0.99).epsilon(1e-15));

    auto j = step(s, Action{0, 0, 0, 0.3, 0}, cfg);
    CHECK(j.q[0] == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(j.q_prev[0] == 0.0);

    Action bad{};
    bad[2] = std::nan("");
    CHECK_THROWS_AS(step(s, bad, cfg), NumericError);
}

TEST_CASE("step clips accelerations") {
    EnvConfig cfg;
    auto n = step(EnvState{}, Action{50, -50, 50, 0, 0}, cfg);
    CHECK(n.u[0] == doctest::Approx(1.0 * cfg.dt));
    CHECK(n.u[1] == doctest::Approx(-1.0 * cfg.dt));
    CHECK(n.u[2] == doctest::Approx(2.0 * cfg.dt));
}

TEST_CASE("step is bit-for-bit deterministic") {
    EnvConfig cfg;
    EnvState s;
    s.u = {0.3, -0.1, 0.2};
    s.q = {0.1, -0.2};
    s.pose = {1.0, 2.0, 0.4};
    Action a{0.2, 0.1, -0.3, 0.2, 0.1};
    auto x = step(s, a, cfg);
    auto y = step(s, a, cfg);
    CHECK(std::memcmp(&x, &y, sizeof(EnvState)) == 0);
}

TEST_CASE("observe examples") {
    EnvConfig cfg;
    auto o = observe(EnvState{}, Command{}, cfg);
    for (double v : o) CHECK(v == 0.0);

    auto c = observe(EnvState{}, Command{0.5, 0, 0.1}, cfg);
    CHECK(c[7] == 0.5);
    CHECK(c[8] == 0.0);
    CHECK(c[9] == 0.1);

    EnvState s;
    s.q = {0.1, 0};
    s.q_prev = {0, 0};
    CHECK(observe(s, Command{}, cfg)[5] == doctest::Approx(2.0));
}

TEST_CASE("expert action examples") {
    EnvConfig cfg;
    EnvState s;
    s.u = {0.4, 0.1, -0.2};
    Command c{0.4, 0.1, -0.2};
    // At the commanded velocity the velocity is a fixed point of the loop.
    auto a = expert_action(s, c, cfg);
    auto n = step(s, a, cfg);
    for (std::size_t i = 0; i < 3; ++i) CHECK(n.u[i] == doctest::Approx(s.u[i]).epsilon(1e-14));

    EnvState rest;
    CHECK(expert_action(rest, Command{0.1, 0, 0}, cfg)[0] == doctest::Approx(0.5));
    // 5 · 0.5 = 2.5 before the acceleration limit.
    EnvConfig loose = cfg;
    loose.accel_limit = {10, 10, 10};
    CHECK(expert_action(rest, Command{0.5, 0, 0}, loose)[0] == doctest::Approx(2.5));

    auto t0 = expert_action(rest, Command{0.5, 0, 0}, cfg);
    CHECK(t0[3] == doctest::Approx(0.0));
    CHECK(t0[4] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("variant action examples") {
    EnvConfig cfg;
    EnvState s;
    s.u = {0.5, 0, 0.2};
    auto n = step(s, variant_action(s, Command{0.5, 0, 0.2}, cfg), cfg);
    CHECK(n.u[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(n.u[2] == doctest::Approx(0.2).epsilon(1e-14));
    auto a = variant_action(EnvState{}, Command{}, cfg);
    CHECK(a[3] == doctest::Approx(0.4 * std::sin(std::numbers::pi / 4)));
    CHECK(a[3] == doctest::Approx(0.2828).epsilon(1e-4));

    auto tr = rollout(Controller::variant, Command{0.3, 0, 0}, 2.0, cfg, 11);
    for (bool p : tr.act_present) CHECK_FALSE(p);
    CHECK(tr.source == data::Source::actionfree);
    tr.validate();
}

TEST_CASE("rollout examples") {
    EnvConfig cfg;
    auto ep = rollout_episode(Controller::expert, Command{0.5, 0, 0}, 10.0, cfg, 1);
    CHECK(ep.traj.length() == 200);
    CHECK(ep.poses.size() == 201);
    const double ux = ep.traj.obs.at(199, 0);
    CHECK(std::abs(ux - 0.5) < 1e-3);
    ep.traj.validate();

    auto a = rollout(Controller::variant, Command{0.7, 0.1, -0.2}, 5.0, cfg, 42);
    auto b = rollout(Controller::variant, Command{0.7, 0.1, -0.2}, 5.0, cfg, 42);
    CHECK(a == b);
    auto c = rollout(Controller::variant, Command{0.7, 0.1, -0.2}, 5.0, cfg, 43);
    CHECK_FALSE(a == c);

    CHECK_THROWS_AS(rollout(Controller::expert, Command{}, 1.01, cfg, 0), ConfigError);
}

TEST_CASE("rollout flags divergence") {
    EnvConfig cfg;
    cfg.accel_limit = {1e4, 1e4, 1e4};
    CHECK_THROWS_AS(rollout(Controller::expert, Command{50, 0, 0}, 2.0, cfg, 0), NumericError);
}

TEST_CASE("velocity error decays monotonically without overshoot") {
    EnvConfig cfg;
    for (Command c : {Command{0.5, 0, 0}, Command{1.0, -0.5, 0.5}, Command{0.0, 0.3, -0.4}}) {
        auto tr = rollout(Controller::expert, c, 10.0, cfg, 0);
        const auto tgt = c.as_array();
        const std::size_t first = static_cast<std::size_t>(1.0 / cfg.dt);
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t i = first; i + 1 < tr.length(); ++i) {
                const double e0 = tr.obs.at(i, k) - tgt[k];
                const double e1 = tr.obs.at(i + 1, k) - tgt[k];
                CHECK(std::abs(e1) <= std::abs(e0) + 1e-15);
                CHECK(e0 * e1 >= -1e-18);
            }
        }
    }
}

TEST_CASE("joint motion is periodic once velocity settles") {
    EnvConfig cfg;
    // v_x = 1 gives f = 1 Hz, a period of exactly 20 steps.
    auto tr = rollout(Controller::expert, Command{1.0, 0, 0}, 10.0, cfg, 0);
    for (std::size_t i = 100; i + 20 < tr.length(); ++i) CHECK(std::abs(tr.obs.at(i + 20, 3) - tr.obs.at(i, 3)) < 1e-6);
}

TEST_CASE("command sampling") {
    CommandRanges r;
    auto cs = sample_commands(1000, r, 5);
    double mean = 0.0;
    for (const auto& c : cs) {
        CHECK(c.vx >= 0.0);
        CHECK(c.vx <= 1.0);
        CHECK(c.vy >= -0.5);
        CHECK(c.vy <= 0.5);
        CHECK(c.omega >= -0.5);
        CHECK(c.omega <= 0.5);
        mean += c.vx;
    }
    mean /= 1000.0;
    CHECK(mean >= 0.4);
    CHECK(mean <= 0.6);
    auto again = sample_commands(1000, r, 5);
    CHECK(again[17].vx == cs[17].vx);
    CHECK_THROWS_AS(sample_commands(0, r, 5), ContractError);
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
}

TEST_CASE("config validation") {
    EnvConfig cfg;
    cfg.joint_tau = 0.01;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    EnvConfig neg;
    neg.drag = -1;
    CHECK_THROWS_AS(neg.validate(), ConfigError);
}
