#include "nsrl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nsrl {

QTable prediction_error(const TabularMDP& mdp, const RewardTable& rewards, const QTable& q,
                        const VTable& v) {
    const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
    QTable err(S, A, H);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                double backup = 0.0;
                for (int s2 = 0; s2 < S; ++s2) backup += mdp.p(h, s, a, s2) * v.at(h + 1, s2);
                err.at(h, s, a) = rewards.at(h, s, a) + backup - q.at(h, s, a);
            }
    return err;
}

double expected_under_optimal(const TabularMDP& mdp, const PolicyTable& policy, const QTable& f,
                              int s1) {
    VisitationProfile profile = visitation_profile(mdp, policy, s1);
    double total = 0.0;
    for (int h = 0; h < mdp.horizon; ++h)
        for (int s = 0; s < mdp.num_states; ++s) {
            double mass = profile.at(h, s);
            if (mass == 0.0) continue;
            double inner = 0.0;
            for (int a = 0; a < mdp.num_actions; ++a) inner += policy.at(h, s, a) * f.at(h, s, a);
            total += mass * inner;
        }
    return total;
}

namespace {

std::vector<double> martingale_terms_inner(const TabularMDP& mdp, const EpisodeRecord& rec,
                                           const ExactEval& exact) {
    const int H = mdp.horizon;
    std::vector<double> terms(H, 0.0);
    for (int h = 0; h < H; ++h) {
        const int s = rec.states[h], a = rec.actions[h], s_next = rec.states[h + 1];
        double policy_avg_gap = 0.0;
        for (int act = 0; act < mdp.num_actions; ++act)
            policy_avg_gap +=
                rec.policy.at(h, s, act) * (rec.q.at(h, s, act) - exact.q.at(h, s, act));
        double sampled_gap = rec.q.at(h, s, a) - exact.q.at(h, s, a);
        double action_noise = policy_avg_gap - sampled_gap;

        double expected_next_gap = 0.0;
        for (int s2 = 0; s2 < mdp.num_states; ++s2)
            expected_next_gap +=
                mdp.p(h, s, a, s2) * (rec.v.at(h + 1, s2) - exact.v.at(h + 1, s2));
        double realized_next_gap = rec.v.at(h + 1, s_next) - exact.v.at(h + 1, s_next);
        double transition_noise = expected_next_gap - realized_next_gap;

        terms[h] = action_noise + transition_noise;
    }
    return terms;
}

}  // namespace

std::vector<double> martingale_terms(const TabularMDP& mdp, const RewardTable& rewards,
                                     const EpisodeRecord& record) {
    ExactEval exact = evaluate_policy_exact(mdp, rewards, record.policy);
    return martingale_terms_inner(mdp, record, exact);
}

DecompositionReport verify_decomposition(const TabularMDP& mdp, const RunTrace& trace) {
    if (trace.episodes.size() != trace.rewards.size())
        throw std::invalid_argument("verify_decomposition: trace is missing reward tables");
    DecompositionReport report;
    const int H = mdp.horizon;
    for (std::size_t k = 0; k < trace.episodes.size(); ++k) {
        const EpisodeRecord& rec = trace.episodes[k];
        const RewardTable& rewards = trace.rewards[k];
        const int s1 = rec.states[0];

        OptimalSolution opt = dp_optimal(mdp, rewards);
        ExactEval exact = evaluate_policy_exact(mdp, rewards, rec.policy);
        report.dynamic_regret += opt.v.at(0, s1) - exact.v.at(0, s1);

        QTable err = prediction_error(mdp, rewards, rec.q, rec.v);
        VisitationProfile profile = visitation_profile(mdp, opt.policy, s1);
        double perf_k = 0.0, expected_err_k = 0.0;
        for (int h = 0; h < H; ++h)
            for (int s = 0; s < mdp.num_states; ++s) {
                double mass = profile.at(h, s);
                if (mass == 0.0) continue;
                double gap = 0.0, err_avg = 0.0;
                for (int a = 0; a < mdp.num_actions; ++a) {
                    double diff = opt.policy.at(h, s, a) - rec.policy.at(h, s, a);
                    gap += rec.q.at(h, s, a) * diff;
                    err_avg += opt.policy.at(h, s, a) * err.at(h, s, a);
                }
                perf_k += mass * gap;
                expected_err_k += mass * err_avg;
            }
        double realized_err_k = 0.0;
        for (int h = 0; h < H; ++h) realized_err_k += err.at(h, rec.states[h], rec.actions[h]);

        report.performance_term += perf_k;
        report.error_term += expected_err_k - realized_err_k;
        for (double m : martingale_terms_inner(mdp, rec, exact)) {
            report.martingale += m;
            report.max_abs_martingale_step = std::max(report.max_abs_martingale_step, std::abs(m));
        }
    }
    report.residual = report.dynamic_regret -
                      (report.performance_term + report.error_term + report.martingale);
    report.tolerance = 1e-8 * std::max(1.0, std::abs(report.dynamic_regret));
    report.residual_ok = std::abs(report.residual) <= report.tolerance;
    report.martingale_bound_ok = report.max_abs_martingale_step <= 4.0 * H;
    report.ok = report.residual_ok && report.martingale_bound_ok;
    return report;
}

BonusSumCheck verify_bonus_sum(const RunTrace& trace) {
    BonusSumCheck check;
    for (const EpisodeRecord& rec : trace.episodes) check.lhs += rec.visited_bonus;
    const double d = static_cast<double>(trace.num_states) * trace.num_actions;
    const double K = static_cast<double>(trace.num_episodes);
    const double lambda = trace.hp.lambda;
    check.rhs = trace.hp.beta * trace.horizon *
                std::sqrt(2.0 * d * K * std::log((K + lambda) / lambda));
    check.ok = check.lhs <= check.rhs;
    return check;
}

SandwichStats ucb_sandwich_stats(const TabularMDP& mdp, const RunTrace& trace) {
    SandwichStats stats;
    constexpr double slack = 1e-10;
    for (std::size_t k = 0; k < trace.episodes.size(); ++k) {
        const EpisodeRecord& rec = trace.episodes[k];
        QTable err = prediction_error(mdp, trace.rewards[k], rec.q, rec.v);
        for (std::size_t i = 0; i < err.values.size(); ++i) {
            ++stats.cells;
            double e = err.values[i];
            if (e > slack || e < -2.0 * rec.bonus.values[i] - slack) ++stats.violations;
        }
    }
    stats.rate = stats.cells > 0 ? static_cast<double>(stats.violations) / stats.cells : 0.0;
    return stats;
}

namespace {

/// Total value of a fixed policy across all episodes of the trace.
double summed_value(const TabularMDP& mdp, const RunTrace& trace, const PolicyTable& policy) {
    double total = 0.0;
    for (std::size_t k = 0; k < trace.rewards.size(); ++k) {
        ExactEval eval = evaluate_policy_exact(mdp, trace.rewards[k], policy);
        total += eval.v.at(0, trace.episodes[k].states[0]);
    }
    return total;
}

bool constant_initial_state(const RunTrace& trace) {
    for (const EpisodeRecord& rec : trace.episodes)
        if (rec.states[0] != trace.episodes.front().states[0]) return false;
    return true;
}

/// Best fixed deterministic policy by exhaustive enumeration (A^(S*H)
/// candidates); only called on small instances.
PolicyTable enumerate_comparator(const TabularMDP& mdp, const RunTrace& trace) {
    const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
    std::vector<int> assignment(static_cast<std::size_t>(H) * S, 0);
    PolicyTable best;
    double best_total = -std::numeric_limits<double>::infinity();
    for (;;) {
        PolicyTable candidate = point_mass_policy(assignment, S, A, H);
        double total = summed_value(mdp, trace, candidate);
        if (total > best_total) {
            best_total = total;
            best = candidate;
        }
        // odometer increment over the H*S action slots
        std::size_t i = 0;
        while (i < assignment.size() && ++assignment[i] == A) assignment[i++] = 0;
        if (i == assignment.size()) break;
    }
    return best;
}

}  // namespace

RegretReport regret_report(const TabularMDP& mdp, const RunTrace& trace) {
    const int K = trace.num_episodes;
    const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
    RegretReport report;
    report.instant_dynamic.resize(K);
    report.cumulative_dynamic.resize(K);
    report.cumulative_static.resize(K);
    report.optimal_value.resize(K);
    report.executed_value.resize(K);
    report.comparator_value.resize(K);

    std::vector<OptimalSolution> optima;
    optima.reserve(K);
    for (int k = 0; k < K; ++k) {
        optima.push_back(dp_optimal(mdp, trace.rewards[k]));
        const int s1 = trace.episodes[k].states[0];
        ExactEval exact = evaluate_policy_exact(mdp, trace.rewards[k], trace.episodes[k].policy);
        report.optimal_value[k] = optima[k].v.at(0, s1);
        report.executed_value[k] = exact.v.at(0, s1);
        report.instant_dynamic[k] = report.optimal_value[k] - report.executed_value[k];
        report.dynamic_total += report.instant_dynamic[k];
        report.cumulative_dynamic[k] = report.dynamic_total;
    }

    PolicyTable comparator;
    if (constant_initial_state(trace)) {
        // The summed objective over a constant start state is a single MDP
        // problem on the episode-averaged rewards.
        RewardTable averaged(S, A, H);
        for (const RewardTable& r : trace.rewards)
            for (std::size_t i = 0; i < averaged.values.size(); ++i)
                averaged.values[i] += r.values[i];
        for (double& v : averaged.values) v /= K;
        comparator = dp_optimal(mdp, averaged).policy;
    } else if (S * A * H <= 24) {
        comparator = enumerate_comparator(mdp, trace);
    } else {
        // Lower bound: best of the per-episode optimal policies.
        report.static_is_lower_bound = true;
        double best_total = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            double total = summed_value(mdp, trace, optima[k].policy);
            if (total > best_total) {
                best_total = total;
                comparator = optima[k].policy;
            }
        }
    }

    double cum_static = 0.0;
    for (int k = 0; k < K; ++k) {
        const int s1 = trace.episodes[k].states[0];
        ExactEval eval = evaluate_policy_exact(mdp, trace.rewards[k], comparator);
        report.comparator_value[k] = eval.v.at(0, s1);
        cum_static += report.comparator_value[k] - report.executed_value[k];
        report.cumulative_static[k] = cum_static;
    }
    report.static_total = cum_static;
    return report;
}

}  // namespace nsrl
