#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "nsrl/diagnostics.hpp"
#include "nsrl/learner.hpp"
#include "nsrl/schedule.hpp"

using namespace nsrl;

namespace {

RunTrace power_run(int S, int A, int H, int K, std::uint64_t mdp_seed, std::uint64_t sched_seed,
                   std::uint64_t run_seed, int num_changes = 0, double pt_bound = 0.0,
                   double c_beta = 1.0, Variant variant = Variant::Power) {
    TabularMDP mdp = make_random_mdp(S, A, H, mdp_seed, 0.0);
    RewardSchedule sched = schedule_piecewise(S, A, H, K, num_changes, sched_seed);
    Hyperparams hp = theory_hyperparams_power(K, H, S, A, 0.01, pt_bound, c_beta);
    return run_algorithm(mdp, sched, hp, variant, run_seed);
}

}  // namespace

TEST_CASE("prediction_error vanishes for an exact backup") {
    TabularMDP mdp = make_random_mdp(4, 3, 3, 1, 0.0);
    Rng rng(2);
    RewardTable r(4, 3, 3);
    for (double& v : r.values) v = rng.uniform01();
    VTable v(4, 3);
    for (double& x : v.values) x = rng.uniform01();
    QTable q(4, 3, 3);
    for (int h = 0; h < 3; ++h)
        for (int s = 0; s < 4; ++s)
            for (int a = 0; a < 3; ++a) {
                double backup = r.at(h, s, a);
                for (int s2 = 0; s2 < 4; ++s2) backup += mdp.p(h, s, a, s2) * v.at(h + 1, s2);
                q.at(h, s, a) = backup;
            }
    QTable err = prediction_error(mdp, r, q, v);
    for (double e : err.values) CHECK(std::abs(e) <= 1e-15);
}

TEST_CASE("prediction_error is exactly zero at the terminal step of a run") {
    TabularMDP mdp = make_random_mdp(3, 2, 4, 5, 0.0);
    RewardSchedule sched = schedule_piecewise(3, 2, 4, 20, 3, 6);
    Hyperparams hp = theory_hyperparams_power(20, 4, 3, 2, 0.01, 2.0);
    RunTrace trace = run_algorithm(mdp, sched, hp, Variant::Power, 7);
    for (std::size_t k = 0; k < trace.episodes.size(); ++k) {
        QTable err = prediction_error(mdp, trace.rewards[k], trace.episodes[k].q,
                                      trace.episodes[k].v);
        for (int s = 0; s < 3; ++s)
            for (int a = 0; a < 2; ++a) CHECK(err.at(3, s, a) == 0.0);
    }
}

TEST_CASE("expected_under_optimal: constant tables integrate to c * H") {
    TabularMDP mdp = make_random_mdp(4, 3, 5, 8, 0.0);
    PolicyTable pi = uniform_policy(4, 3, 5);
    QTable f(4, 3, 5);
    for (double& v : f.values) v = 2.5;
    CHECK(expected_under_optimal(mdp, pi, f, 1) == doctest::Approx(2.5 * 5).epsilon(1e-13));
}

TEST_CASE("expected_under_optimal: mass off the deterministic trajectory sees nothing") {
    const int S = 4, A = 2, H = 3;
    TabularMDP mdp(S, A, H);  // deterministic cycle s -> s+1 under every action
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) mdp.p(h, s, a, (s + 1) % S) = 1.0;
    std::vector<int> acts(static_cast<std::size_t>(H) * S, 1);
    PolicyTable pi = point_mass_policy(acts, S, A, H);
    QTable f(S, A, H);
    for (double& v : f.values) v = 1.0;
    for (int h = 0; h < H; ++h) f.at(h, (0 + h) % S, 1) = 0.0;  // zero on the visited cells
    CHECK(expected_under_optimal(mdp, pi, f, 0) == 0.0);
}

TEST_CASE("expected_under_optimal matches a Monte Carlo oracle") {
    TabularMDP mdp = make_random_mdp(3, 2, 3, 9, 0.0);
    Rng prng(10);
    PolicyTable pi = uniform_policy(3, 2, 3);
    for (int h = 0; h < 3; ++h)
        for (int s = 0; s < 3; ++s) {
            double u = 0.3 + 0.4 * prng.uniform01();
            pi.at(h, s, 0) = u;
            pi.at(h, s, 1) = 1.0 - u;
        }
    QTable f(3, 2, 3);
    for (double& v : f.values) v = prng.uniform01();
    double exact = expected_under_optimal(mdp, pi, f, 0);

    Rng rng(11);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        int s = 0;
        double total = 0.0;
        for (int h = 0; h < 3; ++h) {
            int a = rng.categorical(pi.action_row(h, s));
            total += f.at(h, s, a);
            s = sample_transition(mdp, h, s, a, rng);
        }
        sum += total;
        sum_sq += total * total;
    }
    double mean = sum / n;
    double se = std::sqrt((sum_sq - n * mean * mean) / (n - 1) / n);
    CHECK(std::abs(mean - exact) <= 3.0 * se);
}

TEST_CASE("martingale terms vanish for deterministic kernels and policies") {
    const int S = 3, A = 2, H = 3;
    TabularMDP mdp(S, A, H);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) mdp.p(h, s, a, (s + a) % S) = 1.0;
    Rng rng(12);
    RewardTable r(S, A, H);
    for (double& v : r.values) v = rng.uniform01();

    EpisodeRecord rec;
    rec.episode = 1;
    std::vector<int> acts(static_cast<std::size_t>(H) * S, 1);
    rec.policy = point_mass_policy(acts, S, A, H);
    rec.q = QTable(S, A, H);
    for (double& v : rec.q.values) v = rng.uniform01();
    rec.v = VTable(S, H);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            double acc = 0.0;
            for (int a = 0; a < A; ++a) acc += rec.policy.at(h, s, a) * rec.q.at(h, s, a);
            rec.v.at(h, s) = acc;
        }
    rec.states = {0};
    for (int h = 0; h < H; ++h) {
        int s = rec.states.back();
        rec.actions.push_back(1);
        rec.states.push_back((s + 1) % S);
    }
    std::vector<double> terms = martingale_terms(mdp, r, rec);
    for (double m : terms) CHECK(std::abs(m) <= 1e-12);
}

TEST_CASE("martingale steps stay within 4H on real runs") {
    TabularMDP mdp = make_random_mdp(4, 3, 4, 13, 0.0);
    RewardSchedule sched = schedule_piecewise(4, 3, 4, 30, 6, 14);
    Hyperparams hp = theory_hyperparams_power(30, 4, 4, 3, 0.01, 5.0);
    RunTrace trace = run_algorithm(mdp, sched, hp, Variant::Power, 15);
    for (std::size_t k = 0; k < trace.episodes.size(); ++k)
        for (double m : martingale_terms(mdp, trace.rewards[k], trace.episodes[k]))
            CHECK(std::abs(m) <= 4.0 * 4);
}

TEST_CASE("decomposition identity: hand-checkable single-episode single-step case") {
    RunTrace trace = power_run(2, 2, 1, 1, 21, 22, 23);
    TabularMDP mdp = make_random_mdp(2, 2, 1, 21, 0.0);
    DecompositionReport report = verify_decomposition(mdp, trace);
    CHECK(std::abs(report.residual) <= 1e-14);
    // With one step the iterate equals the revealed rewards, so the
    // prediction-error term is exactly zero.
    CHECK(report.error_term == 0.0);
    CHECK(report.ok);
}

TEST_CASE("decomposition identity holds on random runs of both learners") {
    for (int trial = 0; trial < 3; ++trial) {
        Variant variant = trial % 2 == 0 ? Variant::Power : Variant::PowerPP;
        RunTrace trace = power_run(4 + trial, 3, 4, 80, 30 + trial, 40 + trial, 50 + trial,
                                   6, 4.0, 0.1, variant);
        TabularMDP mdp = make_random_mdp(4 + trial, 3, 4, 30 + trial, 0.0);
        DecompositionReport report = verify_decomposition(mdp, trace);
        CHECK(report.ok);
        CHECK(std::abs(report.residual) <= report.tolerance);
        CHECK(report.max_abs_martingale_step <= 4.0 * 4);
    }
}

TEST_CASE("stationary schedule: performance term matches the fixed-comparator form") {
    const int S = 3, A = 2, H = 3, K = 40;
    TabularMDP mdp = make_random_mdp(S, A, H, 61, 0.0);
    RewardSchedule sched = schedule_piecewise(S, A, H, K, 0, 62);
    Hyperparams hp = theory_hyperparams_power(K, H, S, A, 0.01, 0.0, 0.1);
    RunTrace trace = run_algorithm(mdp, sched, hp, Variant::Power, 63);
    DecompositionReport report = verify_decomposition(mdp, trace);

    // Same sum with the episode-1 optimum as a fixed comparator.
    OptimalSolution fixed_opt = dp_optimal(mdp, trace.rewards[0]);
    double fixed_sum = 0.0;
    for (int k = 0; k < K; ++k) {
        const EpisodeRecord& rec = trace.episodes[k];
        VisitationProfile prof = visitation_profile(mdp, fixed_opt.policy, rec.states[0]);
        for (int h = 0; h < H; ++h)
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < A; ++a)
                    fixed_sum += prof.at(h, s) * rec.q.at(h, s, a) *
                                 (fixed_opt.policy.at(h, s, a) - rec.policy.at(h, s, a));
    }
    CHECK(report.performance_term == doctest::Approx(fixed_sum).epsilon(1e-12));
}

TEST_CASE("bonus-sum bound: single-episode closed form and validity") {
    RunTrace trace = power_run(3, 2, 3, 1, 71, 72, 73);
    BonusSumCheck check = verify_bonus_sum(trace);
    // With zero counts every visited bonus is beta / sqrt(lambda).
    CHECK(check.lhs ==
          doctest::Approx(3.0 * trace.hp.beta / std::sqrt(trace.hp.lambda)).epsilon(1e-14));
    CHECK(check.ok);
}

TEST_CASE("bonus-sum bound holds on every run") {
    for (int trial = 0; trial < 6; ++trial) {
        Variant variant = trial % 2 == 0 ? Variant::Power : Variant::PowerPP;
        RunTrace trace = power_run(3 + trial % 3, 2 + trial % 2, 3, 60, 80 + trial, 90 + trial,
                                   100 + trial, trial, 3.0, 0.5, variant);
        CHECK(verify_bonus_sum(trace).ok);
    }
}

TEST_CASE("visited bonus grows at most like sqrt(K)") {
    const int S = 3, A = 2, H = 3;
    std::vector<int> ks = {250, 500, 1000, 2000};
    std::vector<double> xs, ys;
    for (int K : ks) {
        double mean = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            RunTrace trace = power_run(S, A, H, K, 111, 112, seed, 0, 0.0, 1.0);
            mean += verify_bonus_sum(trace).lhs;
        }
        mean /= 5.0;
        xs.push_back(std::log(static_cast<double>(K)));
        ys.push_back(std::log(mean));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    CHECK(sxy / sxx <= 0.55);
}

TEST_CASE("regret report: an agent playing the per-episode optimum has zero dynamic regret") {
    const int S = 3, A = 2, H = 3, K = 10;
    TabularMDP mdp = make_random_mdp(S, A, H, 121, 0.0);
    RewardSchedule sched = schedule_piecewise(S, A, H, K, 4, 122);
    RunTrace trace;
    trace.num_states = S;
    trace.num_actions = A;
    trace.horizon = H;
    trace.num_episodes = K;
    trace.hp = theory_hyperparams_power(K, H, S, A, 0.01, 0.0);
    Rng rng(123);
    for (int k = 1; k <= K; ++k) {
        RewardTable r = sched.table_for(k);
        OptimalSolution opt = dp_optimal(mdp, r);
        EpisodeRecord rec;
        rec.episode = k;
        rec.policy = opt.policy;
        rec.q = QTable(S, A, H);
        rec.v = VTable(S, H);
        rec.bonus = QTable(S, A, H);
        rec.states = {0};
        for (int h = 0; h < H; ++h) {
            int s = rec.states.back();
            int a = opt.action_at(h, s);
            rec.actions.push_back(a);
            rec.states.push_back(sample_transition(mdp, h, s, a, rng));
        }
        trace.episodes.push_back(rec);
        trace.rewards.push_back(r);
    }
    RegretReport report = regret_report(mdp, trace);
    for (double x : report.instant_dynamic) CHECK(std::abs(x) <= 1e-13);
    CHECK(std::abs(report.dynamic_total) <= 1e-12);
    CHECK(report.static_total <= report.dynamic_total + 1e-12);
}

TEST_CASE("dynamic regret dominates static regret on every run") {
    for (int trial = 0; trial < 4; ++trial) {
        RunTrace trace = power_run(4, 3, 3, 50, 131 + trial, 141 + trial, 151 + trial,
                                   trial * 4, 3.0, 0.5,
                                   trial % 2 == 0 ? Variant::Power : Variant::PowerPP);
        TabularMDP mdp = make_random_mdp(4, 3, 3, 131 + trial, 0.0);
        RegretReport report = regret_report(mdp, trace);
        CHECK(report.dynamic_total >= report.static_total - 1e-10);
        for (std::size_t k = 0; k < report.cumulative_dynamic.size(); ++k) {
            CHECK(report.cumulative_dynamic[k] >= report.cumulative_static[k] - 1e-10);
            CHECK(report.instant_dynamic[k] >= -1e-12);
            CHECK(report.instant_dynamic[k] <= 3.0 + 1e-12);
        }
        CHECK_FALSE(report.static_is_lower_bound);
    }
}

TEST_CASE("stationary schedule: dynamic and static regret coincide") {
    RunTrace trace = power_run(4, 3, 4, 60, 161, 162, 163, 0, 0.0, 0.5);
    TabularMDP mdp = make_random_mdp(4, 3, 4, 161, 0.0);
    RegretReport report = regret_report(mdp, trace);
    CHECK(std::abs(report.dynamic_total - report.static_total) <= 1e-10);
    for (std::size_t k = 0; k < report.cumulative_dynamic.size(); ++k)
        CHECK(std::abs(report.cumulative_dynamic[k] - report.cumulative_static[k]) <= 1e-10);
}

TEST_CASE("varying initial states: enumeration comparator on a tiny instance") {
    const int S = 2, A = 2, H = 2;  // S*A*H = 8 <= 24, exact enumeration
    TabularMDP mdp = make_random_mdp(S, A, H, 171, 0.0);
    RewardSchedule sched = schedule_piecewise(S, A, H, 12, 5, 172);
    Hyperparams hp = theory_hyperparams_power(12, H, S, A, 0.01, 2.0);
    RunOptions options;
    options.s1_rule = InitialStateRule::Random;
    RunTrace trace = run_algorithm(mdp, sched, hp, Variant::Power, 173, options);
    RegretReport report = regret_report(mdp, trace);
    CHECK_FALSE(report.static_is_lower_bound);
    CHECK(report.dynamic_total >= report.static_total - 1e-10);
}

TEST_CASE("varying initial states: large instance falls back to a flagged lower bound") {
    const int S = 3, A = 3, H = 3;  // 27 > 24 forces the lower-bound path
    TabularMDP mdp = make_random_mdp(S, A, H, 181, 0.0);
    RewardSchedule sched = schedule_piecewise(S, A, H, 10, 3, 182);
    Hyperparams hp = theory_hyperparams_power(10, H, S, A, 0.01, 2.0);
    RunOptions options;
    options.s1_rule = InitialStateRule::Random;
    RunTrace trace = run_algorithm(mdp, sched, hp, Variant::Power, 183, options);
    RegretReport report = regret_report(mdp, trace);
    CHECK(report.static_is_lower_bound);
    CHECK(report.dynamic_total >= report.static_total - 1e-10);
}

TEST_CASE("sandwich violation rate is small at the theory bonus level") {
    long long violations = 0, cells = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RunTrace trace = power_run(3, 2, 3, 100, 191, 192, seed, 0, 0.0, 1.0);
        TabularMDP mdp = make_random_mdp(3, 2, 3, 191, 0.0);
        SandwichStats stats = ucb_sandwich_stats(mdp, trace);
        violations += stats.violations;
        cells += stats.cells;
    }
    CHECK(static_cast<double>(violations) / cells <= 0.05);
}

TEST_CASE("martingale totals are mean-zero across seeds") {
    const int S = 3, A = 2, H = 3, K = 60;
    TabularMDP mdp = make_random_mdp(S, A, H, 201, 0.0);
    RewardSchedule sched = schedule_piecewise(S, A, H, K, 5, 202);
    Hyperparams hp = theory_hyperparams_power(K, H, S, A, 0.01, 3.0, 0.5);
    double mean = 0.0;
    const int num_seeds = 100;
    for (int seed = 1; seed <= num_seeds; ++seed) {
        RunTrace trace = run_algorithm(mdp, sched, hp, Variant::Power, seed);
        mean += verify_decomposition(mdp, trace).martingale;
    }
    mean /= num_seeds;
    double threshold = 4.0 * (4.0 * H * std::sqrt(static_cast<double>(K) * H)) /
                       std::sqrt(static_cast<double>(num_seeds));
    CHECK(std::abs(mean) <= threshold);
}
