#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nsrl/learner.hpp"
#include "nsrl/schedule.hpp"

using namespace nsrl;

TEST_CASE("make_random_mdp: full mixing gives exactly uniform rows") {
    TabularMDP mdp = make_random_mdp(4, 2, 3, 1, 1.0);
    for (double p : mdp.kernels) CHECK(p == 0.25);
}

TEST_CASE("make_random_mdp output always validates") {
    for (int trial = 0; trial < 20; ++trial) {
        TabularMDP mdp = make_random_mdp(5, 3, 4, 100 + trial, 0.1 * (trial % 10));
        CHECK(validate_mdp(mdp).empty());
    }
}

TEST_CASE("make_random_mdp is deterministic in the seed") {
    TabularMDP a = make_random_mdp(4, 3, 3, 77, 0.3);
    TabularMDP b = make_random_mdp(4, 3, 3, 77, 0.3);
    CHECK(a.kernels == b.kernels);
    TabularMDP c = make_random_mdp(4, 3, 3, 78, 0.3);
    CHECK(a.kernels != c.kernels);
}

TEST_CASE("piecewise schedule: no changes means a stationary table") {
    RewardSchedule sched = schedule_piecewise(3, 2, 2, 10, 0, 5);
    RewardTable first = sched.table_for(1);
    for (int k = 2; k <= 10; ++k) CHECK(sched.table_for(k).values == first.values);
    TabularMDP mdp = make_random_mdp(3, 2, 2, 6, 0.0);
    std::vector<RewardTable> tables;
    for (int k = 1; k <= 10; ++k) tables.push_back(sched.table_for(k));
    CHECK(compute_policy_variation(mdp, tables).total == 0.0);
}

TEST_CASE("piecewise schedule: K-1 changes redraw the table every episode") {
    RewardSchedule sched = schedule_piecewise(2, 2, 2, 8, 7, 5);
    for (int k = 2; k <= 8; ++k)
        CHECK(sched.table_for(k).values != sched.table_for(k - 1).values);
}

TEST_CASE("piecewise schedule: block boundaries are reproducible, entries in [0,1]") {
    RewardSchedule a = schedule_piecewise(2, 2, 2, 50, 6, 123);
    RewardSchedule b = schedule_piecewise(2, 2, 2, 50, 6, 123);
    CHECK(a.block_starts == b.block_starts);
    CHECK(a.block_starts.size() == 7);
    CHECK(a.block_starts.front() == 1);
    for (int k = 1; k <= 50; ++k) {
        RewardTable table = a.table_for(k);
        CHECK(table.values == b.table_for(k).values);
        for (double v : table.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("piecewise schedule: variation contributions sit only at boundaries") {
    TabularMDP mdp = make_random_mdp(4, 3, 3, 9, 0.0);
    RewardSchedule sched = schedule_piecewise(4, 3, 3, 60, 5, 10);
    std::vector<RewardTable> tables;
    for (int k = 1; k <= 60; ++k) tables.push_back(sched.table_for(k));
    VariationSeries var = compute_policy_variation(mdp, tables);
    for (int k = 1; k <= 60; ++k) {
        bool boundary = false;
        for (int start : sched.block_starts) boundary |= (start == k);
        if (!boundary) CHECK(var.per_episode[k - 1] == 0.0);
    }
    CHECK(var.total > 0.0);
}

TEST_CASE("drift schedule: zero amplitude is stationary") {
    RewardSchedule sched = schedule_drift(3, 2, 2, 12, 0.0, 4.0, 7);
    RewardTable first = sched.table_for(1);
    for (int k = 2; k <= 12; ++k) CHECK(sched.table_for(k).values == first.values);
}

TEST_CASE("drift schedule: entries stay in [0,1] for any parameters") {
    for (double amplitude : {0.1, 0.3, 0.5})
        for (double period : {1.0, 3.0, 50.0}) {
            RewardSchedule sched = schedule_drift(3, 3, 3, 40, amplitude, period, 8);
            for (int k = 1; k <= 40; ++k)
                for (double v : sched.table_for(k).values) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
        }
}

TEST_CASE("drift schedule: per-episode change bounded by the sine slope") {
    const int K = 200;
    const double amplitude = 0.1;
    RewardSchedule sched = schedule_drift(3, 2, 3, K, amplitude, static_cast<double>(K), 9);
    double bound = amplitude * 2.0 * std::numbers::pi / K;
    for (int k = 2; k <= K; ++k) {
        RewardTable cur = sched.table_for(k);
        RewardTable prev = sched.table_for(k - 1);
        for (std::size_t i = 0; i < cur.values.size(); ++i)
            CHECK(std::abs(cur.values[i] - prev.values[i]) <= bound + 1e-12);
    }
}

TEST_CASE("adaptive schedule: zero strength reduces to the stationary base") {
    RewardSchedule sched = schedule_adaptive(3, 2, 2, 10, 0.0, 11);
    ActionHistory history(3, 2, 2);
    history.record(0, 0, 1);
    history.record(1, 2, 0);
    RewardTable with_history = sched.table_for(3, history);
    RewardTable base = sched.table_for(1, ActionHistory(3, 2, 2));
    CHECK(with_history.values == base.values);
}

TEST_CASE("adaptive schedule: shifts reward off the most-taken action, stays in [0,1]") {
    RewardSchedule sched = schedule_adaptive(2, 3, 2, 10, 0.4, 12);
    ActionHistory history(2, 3, 2);
    for (int i = 0; i < 5; ++i) history.record(0, 0, 2);
    history.record(0, 0, 1);
    RewardTable shifted = sched.table_for(4, history);
    RewardTable base = sched.table_for(4, ActionHistory(2, 3, 2));
    CHECK(shifted.at(0, 0, 2) == doctest::Approx(std::max(0.0, base.at(0, 0, 2) - 0.4)));
    CHECK(shifted.at(0, 0, 1) == base.at(0, 0, 1));
    CHECK(shifted.at(0, 1, 0) == base.at(0, 1, 0));  // unvisited rows untouched
    for (double v : shifted.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("adaptive schedule: replaying the same history reproduces the tables") {
    TabularMDP mdp = make_random_mdp(3, 2, 3, 13, 0.0);
    RewardSchedule sched = schedule_adaptive(3, 2, 3, 15, 0.3, 14);
    Hyperparams hp = theory_hyperparams_power(15, 3, 3, 2, 0.1, 1.0);
    RunTrace a = run_algorithm(mdp, sched, hp, Variant::Power, 21);
    RunTrace b = run_algorithm(mdp, sched, hp, Variant::Power, 21);
    for (int k = 0; k < 15; ++k) CHECK(a.rewards[k].values == b.rewards[k].values);
}

TEST_CASE("policy variation: single optimal-action flip contributes 2") {
    // Self-loop kernels make the optimal action the per-step reward argmax,
    // so flipping the argmax at exactly one (h, s) moves the budget by 2.
    TabularMDP mdp(2, 2, 2);
    for (int h = 0; h < 2; ++h)
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a) mdp.p(h, s, a, s) = 1.0;
    RewardTable r1(2, 2, 2, 1);
    r1.at(0, 0, 0) = 0.9;
    r1.at(0, 0, 1) = 0.1;
    r1.at(0, 1, 0) = 0.8;
    r1.at(0, 1, 1) = 0.2;
    r1.at(1, 0, 0) = 0.7;
    r1.at(1, 0, 1) = 0.3;
    r1.at(1, 1, 0) = 0.6;
    r1.at(1, 1, 1) = 0.4;
    RewardTable r2 = r1;
    r2.episode = 2;
    r2.at(0, 0, 0) = 0.1;
    r2.at(0, 0, 1) = 0.9;  // flip at (h=0, s=0) only
    VariationSeries var = compute_policy_variation(mdp, {r1, r2});
    CHECK(var.per_episode[0] == 0.0);
    CHECK(var.per_episode[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(var.total == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("policy variation: a single episode contributes nothing") {
    TabularMDP mdp = make_random_mdp(3, 2, 2, 15, 0.0);
    Rng rng(16);
    RewardTable r(3, 2, 2);
    for (double& v : r.values) v = rng.uniform01();
    VariationSeries var = compute_policy_variation(mdp, {r});
    CHECK(var.total == 0.0);
    CHECK(var.per_episode.size() == 1);
    CHECK(var.per_episode[0] == 0.0);
}

TEST_CASE("q variation: identical iterates and single iterates give zero") {
    QTable q(3, 2, 2);
    Rng rng(17);
    for (double& v : q.values) v = rng.uniform01();
    CHECK(compute_q_variation({q, q, q}).total == 0.0);
    CHECK(compute_q_variation({q}).total == 0.0);
}

TEST_CASE("q variation of a real run is bounded by K*H^3") {
    TabularMDP mdp = make_random_mdp(4, 3, 3, 18, 0.0);
    RewardSchedule sched = schedule_piecewise(4, 3, 3, 40, 10, 19);
    Hyperparams hp = theory_hyperparams_power(40, 3, 4, 3, 0.1, 10.0);
    RunTrace trace = run_algorithm(mdp, sched, hp, Variant::Power, 23);
    VariationSeries var = compute_q_variation(trace.q_iterates());
    CHECK(var.total >= 0.0);
    CHECK(var.total <= 40.0 * 3 * 3 * 3);
}
